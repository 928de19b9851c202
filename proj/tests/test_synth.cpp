#include "nodemap/dimred.hpp"
#include "nodemap/ingest.hpp"
#include "nodemap/mrf.hpp"
#include "nodemap/preprocess.hpp"
#include "nodemap/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace nodemap;
using namespace nodemap::synth;

TEST_CASE("generation is deterministic for a seed") {
  SynthConfig cfg;
  cfg.train_normal = cfg.train_metastatic = 20;
  cfg.train_nonnodal = 10;
  const auto a = gen_training(cfg);
  const auto b = gen_training(cfg);
  CHECK(a.spectra.rows == b.spectra.rows);
  CHECK(a.labels == b.labels);
  const auto n1 = gen_node(cfg, Verdict::Metastatic, BlobSpec{}, 7);
  const auto n2 = gen_node(cfg, Verdict::Metastatic, BlobSpec{}, 7);
  CHECK(n1.scan.spectra.rows == n2.scan.spectra.rows);
  CHECK(n1.truth_labels == n2.truth_labels);
  CHECK(n1.scan.node_id == "node0007");

  cfg.seed = 2;
  CHECK(gen_training(cfg).spectra.rows != a.spectra.rows);
}

TEST_CASE("node streams are independent") {
  const SynthConfig cfg;
  const auto a = gen_node(cfg, Verdict::Normal, BlobSpec{}, 1);
  const auto b = gen_node(cfg, Verdict::Normal, BlobSpec{}, 2);
  CHECK(a.scan.spectra.rows != b.scan.spectra.rows);
  std::set<std::uint64_t> seeds;
  for (std::uint64_t stream = 0; stream < 4; ++stream)
    for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(derive_seed(1, stream, i));
  CHECK(seeds.size() == 400);
}

TEST_CASE("latent draws have the t mean and covariance") {
  SynthConfig cfg;
  cfg.nu_gen = 30.0;  // finite fourth moment keeps the sample covariance stable
  const int n = 40000;
  for (Component c : {Component::Normal, Component::Metastatic, Component::NonNodal}) {
    const auto j = static_cast<std::size_t>(index_of(c));
    const Matrix x = sample_latent(cfg, c, n, 99 + j);
    const Eigen::RowVector2d mean = x.colwise().mean();
    const Matrix centred = x.rowwise() - mean;
    const Matrix cov = centred.transpose() * centred / (n - 1.0);
    const Matrix expected = cfg.nu_gen / (cfg.nu_gen - 2.0) * cfg.scales[j];
    CHECK((cov - expected).norm() / expected.norm() < 0.05);
    CHECK((mean.transpose() - cfg.means[j]).norm() < 0.03);
  }
}

TEST_CASE("without class separation a discriminant is at chance") {
  SynthConfig cfg;
  cfg.means[1] = cfg.means[0];
  cfg.scales[1] = cfg.scales[0];
  const preprocess::PreprocessConfig pp;
  auto train = gen_training(cfg);
  train.spectra = preprocess::apply(train.spectra, pp);
  const auto fit = dimred::fit_external(train, 20);

  cfg.seed = 77;
  auto test = gen_training(cfg);
  test.spectra = preprocess::apply(test.spectra, pp);
  double mn = 0, mc = 0, nn = 0, nc = 0;
  for (std::size_t i = 0; i < fit.labels.size(); ++i) {
    const bool met = fit.labels[i] == Component::Metastatic;
    (met ? mc : mn) += fit.scores(static_cast<Eigen::Index>(i));
    (met ? nc : nn) += 1;
  }
  mn /= nn;
  mc /= nc;
  int correct = 0, total = 0;
  for (std::size_t i = 0; i < test.labels.size(); ++i) {
    if (test.labels[i] == Component::NonNodal) continue;
    const double t = (test.spectra.rows.row(static_cast<Eigen::Index>(i)).transpose() - fit.train_mean).dot(fit.q_ext);
    const bool says_met = std::fabs(t - mc) < std::fabs(t - mn);
    correct += says_met == (test.labels[i] == Component::Metastatic);
    ++total;
  }
  const double acc = static_cast<double>(correct) / total;
  CHECK(std::fabs(acc - 0.5) < 1.96 * std::sqrt(0.25 / total));
}

TEST_CASE("truth fields") {
  const SynthConfig cfg;
  const auto base = base_labels(cfg);
  CHECK(base[0] == 3);
  CHECK(base[19] == 3);
  CHECK(base[380] == 3);
  CHECK(base[399] == 3);
  CHECK(base[static_cast<std::size_t>(pixel_index(10, 10, 20))] == 1);

  SUBCASE("normal nodes carry no metastatic pixels") {
    for (std::uint64_t i = 0; i < 5; ++i) {
      const auto n = gen_node(cfg, Verdict::Normal, BlobSpec{}, i);
      CHECK(std::count(n.truth_labels.begin(), n.truth_labels.end(), 2) == 0);
      CHECK(n.truth_labels == base);
    }
  }
  SUBCASE("a 4x4 rectangle marks 16 contiguous nodal pixels") {
    BlobSpec b;
    b.rectangular = true;
    b.width = b.height = 4;
    const auto n = gen_node(cfg, Verdict::Metastatic, b, 3);
    std::vector<int> cells;
    for (int i = 0; i < 400; ++i)
      if (n.truth_labels[static_cast<std::size_t>(i)] == 2) cells.push_back(i);
    REQUIRE(cells.size() == 16);
    const int r0 = pixel_row(cells.front(), 20), c0 = pixel_col(cells.front(), 20);
    for (int i : cells) {
      CHECK(pixel_row(i, 20) - r0 < 4);
      CHECK(pixel_col(i, 20) - c0 < 4);
      CHECK(base[static_cast<std::size_t>(i)] == 1);
    }
  }
  SUBCASE("grown blobs respect the size range and stay nodal") {
    const BlobSpec b;
    for (std::uint64_t i = 0; i < 10; ++i) {
      const auto n = gen_node(cfg, Verdict::Metastatic, b, 100 + i);
      const auto size = std::count(n.truth_labels.begin(), n.truth_labels.end(), 2);
      CHECK(size >= b.min_size);
      CHECK(size <= b.max_size);
      for (std::size_t p = 0; p < 400; ++p)
        if (n.truth_labels[p] == 2) CHECK(base[p] == 1);
    }
  }
  SUBCASE("a blob larger than the nodal disc is an error") {
    BlobSpec b;
    b.min_size = b.max_size = 390;
    CHECK_THROWS_WITH_AS(gen_node(cfg, Verdict::Metastatic, b, 1), doctest::Contains("larger than nodal area"),
                         InputError);
  }
  SUBCASE("isolated outliers sit inside normal tissue") {
    BlobSpec b;
    b.isolated = 5;
    const auto nb = mrf::eight_neighborhood(20, 20);
    for (std::uint64_t i = 0; i < 5; ++i) {
      const auto n = gen_node(cfg, Verdict::Metastatic, b, 1000 + i);
      CHECK(n.isolated.size() == 5);
      for (int p : n.isolated) {
        CHECK(n.truth_labels[static_cast<std::size_t>(p)] == 1);
        CHECK(nb.of(p).size() == 8);
        for (int q : nb.of(p)) CHECK(n.truth_labels[static_cast<std::size_t>(q)] == 1);
      }
    }
  }
}

TEST_CASE("generated spectra are finite and survive preprocessing") {
  const SynthConfig cfg;
  const auto n = gen_node(cfg, Verdict::Metastatic, BlobSpec{}, 5);
  CHECK(n.scan.spectra.rows.allFinite());
  CHECK(n.scan.spectra.rows.rows() == 400);
  CHECK(n.scan.spectra.grid.points.front() == 320.0);
  CHECK(n.scan.spectra.grid.points.back() == 800.0);
  const auto pre = preprocess::apply(n.scan.spectra, preprocess::PreprocessConfig{});
  CHECK(pre.rows.allFinite());
  CHECK(pre.grid.points.front() == 400.0);
}

TEST_CASE("loadings are orthogonal") {
  const SynthConfig cfg;
  const Matrix l = loadings(cfg);
  CHECK(l.cols() == 2 + cfg.nuisance_dims);
  const Matrix g = l.transpose() * l / static_cast<double>(cfg.p);
  CHECK((g - Matrix::Identity(l.cols(), l.cols())).norm() < 1e-10);
}

TEST_CASE("dataset on disk") {
  testing::TempDir dir("synth_ds");
  SynthConfig cfg;
  cfg.train_normal = cfg.train_metastatic = 20;
  cfg.train_nonnodal = 10;
  write_dataset(cfg, 2, 3, BlobSpec{}, dir.path());
  const auto manifest = ingest::read_manifest(dir / "manifest.csv");
  CHECK(manifest.size() == 5);
  CHECK(std::count_if(manifest.begin(), manifest.end(), [](auto& kv) { return kv.second == Verdict::Metastatic; }) == 3);
  for (const auto& [id, v] : manifest) {
    CHECK(std::filesystem::exists(dir / "nodes" / (id + ".csv")));
    CHECK(std::filesystem::exists(dir / "truth" / (id + ".csv")));
  }
  const auto train = ingest::read_training(dir / "train.csv");
  CHECK(train.spectra.count() == 50);
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.p = 2;
  CHECK_THROWS_AS(validate(cfg), InputError);
}
