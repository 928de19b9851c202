#include "nodemap/config.hpp"
#include "nodemap/model.hpp"
#include "nodemap/synth.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace nodemap;

namespace {

ManualTrainingSet small_training(bool with_nonnodal = true) {
  synth::SynthConfig cfg;
  cfg.train_normal = 80;
  cfg.train_metastatic = 80;
  cfg.train_nonnodal = with_nonnodal ? 30 : 0;
  cfg.sites = 4;
  return synth::gen_training(cfg);
}

}  // namespace

TEST_CASE("config defaults") {
  const RunConfig c;
  CHECK(c.k_ext == 20);
  CHECK(c.k_int == 1);
  CHECK(c.nu_s1 == 4.0);
  CHECK(c.nu_s2 == 4.0);
  CHECK(c.beta == 15.0);
  CHECK(c.rho_s1 == 5.0);
  CHECK(c.rho_s2 == 1.0);
  CHECK(c.epsilon_s1 == 0.01);
  CHECK(c.preprocess.crop_lo == 400.0);
  CHECK(c.preprocess.crop_hi == 800.0);
  CHECK(c.weights.normal == std::vector<double>{5.0, 2.0});
  CHECK(c.weights.metastatic == std::vector<double>{3.0, 1.25});
  CHECK(c.weights.nonnodal == std::vector<double>{3.85, 10.0});
  CHECK_NOTHROW(c.validate());
  CHECK(c.em().nu == 4.0);
  CHECK(c.mrf().beta == 15.0);
}

TEST_CASE("config keys") {
  RunConfig c;
  for (const auto& k : config_keys()) {
    CHECK(!k.description.empty());
    // Every key round-trips its own value.
    const std::string v = config_value(c, k.name);
    set_config_value(c, k.name, v);
    CHECK(config_value(c, k.name) == v);
  }
  set_config_value(c, "beta", "7.5");
  CHECK(c.beta == 7.5);
  CHECK(config_value(c, "beta") == "7.5");
  set_config_value(c, "K_diag.normal", "[1, 2, 3]");
  CHECK(c.weights.normal == std::vector<double>{1, 2, 3});
  set_config_value(c, "K_diag.metastatic", "4");
  CHECK(c.weights.metastatic == std::vector<double>{4});
  CHECK_THROWS_WITH_AS(set_config_value(c, "gamma", "1"), doctest::Contains("unknown config key"), InputError);
  CHECK_THROWS_AS(set_config_value(c, "k_ext", "\"x\""), InputError);
  CHECK_THROWS_AS(set_config_value(c, "k_ext", "{"), InputError);
}

TEST_CASE("config JSON with nested objects") {
  RunConfig c;
  apply_config_json(c, nlohmann::json::parse(R"({"beta": 3, "K_diag": {"nonnodal": [2, 2]}, "k_int": 2})"));
  CHECK(c.beta == 3.0);
  CHECK(c.k_int == 2);
  CHECK(c.weights.nonnodal == std::vector<double>{2, 2});
  CHECK_THROWS_AS(apply_config_json(c, nlohmann::json::array()), InputError);

  testing::TempDir dir("cfg");
  {
    std::ofstream(dir / "c.json") << config_to_json(c).dump();
  }
  RunConfig loaded;
  load_config_file(loaded, dir / "c.json");
  CHECK(config_to_json(loaded) == config_to_json(c));
  CHECK_THROWS_AS(load_config_file(loaded, dir / "missing.json"), InputError);
}

TEST_CASE("config validation") {
  RunConfig c;
  c.k_ext = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = RunConfig{};
  c.weights.normal = {};
  CHECK_THROWS_AS(c.validate(), InputError);
  c = RunConfig{};
  c.rho_s2 = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("trained model") {
  const auto train = small_training();
  const RunConfig cfg;
  const Model m = train_model(train, nullptr, cfg);
  CHECK(m.q_ext.size() == 101);
  CHECK(m.grid.size() == 101);
  CHECK(m.k_ext == 20);
  CHECK(m.nonnodal.has_value());
  CHECK(m.normal.count == 80);

  SUBCASE("JSON round trip") {
    testing::TempDir dir("model");
    save_model(m, dir / "m.json");
    const Model back = load_model(dir / "m.json");
    CHECK(back.grid == m.grid);
    CHECK(back.k_ext == m.k_ext);
    CHECK((back.q_ext - m.q_ext).norm() == 0.0);
    CHECK((back.train_mean - m.train_mean).norm() == 0.0);
    CHECK((back.normal.cov - m.normal.cov).norm() == 0.0);
    CHECK((back.nonnodal->mean - m.nonnodal->mean).norm() == 0.0);
    CHECK(model_to_json(back) == model_to_json(m));
  }
  SUBCASE("corrupt model files") {
    CHECK_THROWS_AS(model_from_json("{}"), InputError);
    CHECK_THROWS_AS(model_from_json("not json"), InputError);
    auto j = nlohmann::json::parse(model_to_json(m));
    j["q_ext"].erase(0);
    CHECK_THROWS_AS(model_from_json(j.dump()), InputError);
  }
  SUBCASE("a model without the non-nodal block cannot classify") {
    auto j = nlohmann::json::parse(model_to_json(m));
    j["priors"].erase("nonnodal");
    const Model bare = model_from_json(j.dump());
    dimred::ReductionBasis b;
    b.train_mean = m.train_mean;
    b.q_ext = m.q_ext;
    b.q_int = Matrix::Zero(101, 0);
    CHECK_THROWS_WITH_AS(nonnodal_moments(bare, b), doctest::Contains("priors.nonnodal"), InputError);
  }
}

TEST_CASE("training needs non-nodal spectra") {
  const auto nodal = small_training(false);
  CHECK_THROWS_WITH_AS(train_model(nodal, nullptr, RunConfig{}), doctest::Contains("priors.nonnodal"), InputError);

  // A separate non-nodal file fills the gap.
  const auto full = small_training(true);
  ManualTrainingSet extra;
  extra.spectra.grid = full.spectra.grid;
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < full.labels.size(); ++i)
    if (full.labels[i] == Component::NonNodal) idx.push_back(static_cast<Eigen::Index>(i));
  extra.spectra.rows.resize(static_cast<Eigen::Index>(idx.size()), full.spectra.rows.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) extra.spectra.rows.row(static_cast<Eigen::Index>(r)) = full.spectra.rows.row(idx[r]);
  extra.labels.assign(idx.size(), Component::NonNodal);
  extra.site_ids.assign(idx.size(), "x");
  const Model m = train_model(nodal, &extra, RunConfig{});
  CHECK(m.nonnodal->count == idx.size());
}

TEST_CASE("k_ext selection is recorded in the model") {
  const auto train = small_training();
  const std::vector<int> candidates{5, 10};
  const Model m = train_model(train, nullptr, RunConfig{}, candidates);
  CHECK(m.k_ext_candidates == candidates);
  REQUIRE(m.cv_accuracy.size() == 2);

  ManualTrainingSet prepared = train;
  prepared.spectra = preprocess::apply(train.spectra, RunConfig{}.preprocess);
  const auto sel = dimred::choose_k_ext(prepared, candidates);
  CHECK(m.k_ext == sel.chosen);
  CHECK(m.cv_accuracy == sel.accuracy);
}
