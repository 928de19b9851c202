#include "nodemap/model.hpp"

#include "nodemap/ingest.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace nodemap {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

Matrix rows_with(const SpectralMatrix& spectra, const std::vector<Component>& labels, Component c) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
  Matrix out(static_cast<Eigen::Index>(idx.size()), spectra.rows.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = spectra.rows.row(idx[r]);
  return out;
}

ordered_json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

ordered_json mat_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Vector json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

Matrix json_mat(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size());
  Matrix out(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != m) throw InputError("ragged matrix");
    for (Eigen::Index c = 0; c < m; ++c) out(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return out;
}

ordered_json moments_json(const dimred::Moments& m, const char* space) {
  ordered_json j;
  j["space"] = space;
  j["count"] = m.count;
  j["mean"] = vec_json(m.mean);
  j["cov"] = mat_json(m.cov);
  return j;
}

dimred::Moments json_moments(const json& j, Eigen::Index dim, const std::string& key) {
  dimred::Moments m;
  m.count = j.value("count", std::size_t{0});
  m.mean = json_vec(j.at("mean"));
  m.cov = json_mat(j.at("cov"));
  if (dim >= 0 && m.mean.size() != dim) throw InputError(key + ": mean has the wrong length");
  if (m.cov.rows() != m.mean.size() || m.cov.cols() != m.mean.size()) throw InputError(key + ": cov has the wrong shape");
  return m;
}

}  // namespace

Model train_model(const ManualTrainingSet& train, const ManualTrainingSet* nonnodal, const RunConfig& cfg,
                  std::span<const int> k_ext_candidates) {
  cfg.validate();
  ManualTrainingSet prepared = train;
  prepared.spectra = preprocess::apply(train.spectra, cfg.preprocess);

  Model model;
  model.grid = prepared.spectra.grid;
  model.preprocess = cfg.preprocess;
  model.k_ext = cfg.k_ext;
  if (!k_ext_candidates.empty()) {
    const auto sel = dimred::choose_k_ext(prepared, k_ext_candidates);
    model.k_ext = sel.chosen;
    model.k_ext_candidates.assign(k_ext_candidates.begin(), k_ext_candidates.end());
    model.cv_accuracy = sel.accuracy;
  }
  const auto fit = dimred::fit_external(prepared, model.k_ext);
  model.train_mean = fit.train_mean;
  model.q_ext = fit.q_ext;
  model.normal = dimred::sample_moments(rows_with(prepared.spectra, prepared.labels, Component::Normal));
  model.metastatic = dimred::sample_moments(rows_with(prepared.spectra, prepared.labels, Component::Metastatic));

  Matrix background = rows_with(prepared.spectra, prepared.labels, Component::NonNodal);
  if (nonnodal) {
    const auto extra = preprocess::apply(nonnodal->spectra, cfg.preprocess);
    if (!(extra.grid == model.grid)) throw InputError("non-nodal spectra are on a different wavelength grid");
    const Matrix more = rows_with(extra, nonnodal->labels, Component::NonNodal);
    Matrix joined(background.rows() + more.rows(), extra.rows.cols());
    joined << background, more;
    background = std::move(joined);
  }
  if (background.rows() >= 2) model.nonnodal = dimred::sample_moments(background);
  else
    throw InputError(
        "priors.nonnodal: no non-nodal spectra supplied (add nonnodal rows or pass a non-nodal file)");
  return model;
}

std::string model_to_json(const Model& model) {
  ordered_json j;
  j["format"] = "nodemap-model";
  j["version"] = 1;
  j["grid"] = model.grid.points;
  j["preprocess"] = {{"sg_window", model.preprocess.sg_window},
                     {"sg_order", model.preprocess.sg_order},
                     {"crop_lo", model.preprocess.crop_lo},
                     {"crop_hi", model.preprocess.crop_hi}};
  j["k_ext"] = model.k_ext;
  if (!model.k_ext_candidates.empty())
    j["k_ext_selection"] = {{"candidates", model.k_ext_candidates}, {"accuracy", model.cv_accuracy}};
  j["train_mean"] = vec_json(model.train_mean);
  j["q_ext"] = vec_json(model.q_ext);
  ordered_json priors;
  priors["normal"] = moments_json(model.normal, "spectral");
  priors["metastatic"] = moments_json(model.metastatic, "spectral");
  if (model.nonnodal_reduced)
    priors["nonnodal"] = moments_json(*model.nonnodal_reduced, "reduced");
  else if (model.nonnodal)
    priors["nonnodal"] = moments_json(*model.nonnodal, "spectral");
  j["priors"] = priors;
  return j.dump(1) + "\n";
}

Model model_from_json(const std::string& text, const std::string& source) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "nodemap-model") throw InputError("not a model file");
    Model m;
    m.grid.points = j.at("grid").get<std::vector<double>>();
    validate_grid(m.grid);
    const auto& pp = j.at("preprocess");
    m.preprocess.sg_window = pp.at("sg_window").get<int>();
    m.preprocess.sg_order = pp.at("sg_order").get<int>();
    m.preprocess.crop_lo = pp.at("crop_lo").get<double>();
    m.preprocess.crop_hi = pp.at("crop_hi").get<double>();
    preprocess::validate(m.preprocess);
    m.k_ext = j.at("k_ext").get<int>();
    if (j.contains("k_ext_selection")) {
      m.k_ext_candidates = j["k_ext_selection"].at("candidates").get<std::vector<int>>();
      m.cv_accuracy = j["k_ext_selection"].at("accuracy").get<std::vector<double>>();
    }
    m.train_mean = json_vec(j.at("train_mean"));
    m.q_ext = json_vec(j.at("q_ext"));
    const auto p = static_cast<Eigen::Index>(m.grid.size());
    if (m.train_mean.size() != p || m.q_ext.size() != p) throw InputError("train_mean/q_ext length differs from grid");
    const auto& pr = j.at("priors");
    m.normal = json_moments(pr.at("normal"), p, "priors.normal");
    m.metastatic = json_moments(pr.at("metastatic"), p, "priors.metastatic");
    if (pr.contains("nonnodal")) {
      const auto& nn = pr.at("nonnodal");
      if (nn.value("space", "spectral") == "reduced")
        m.nonnodal_reduced = json_moments(nn, -1, "priors.nonnodal");
      else
        m.nonnodal = json_moments(nn, p, "priors.nonnodal");
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(source + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) { ingest::write_atomic(path, model_to_json(model)); }

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str(), path.string());
}

dimred::PriorMoments nodal_moments(const Model& model, const dimred::ReductionBasis& basis) {
  return {dimred::project_moments(model.normal, basis), dimred::project_moments(model.metastatic, basis)};
}

dimred::Moments nonnodal_moments(const Model& model, const dimred::ReductionBasis& basis) {
  if (model.nonnodal_reduced) {
    if (model.nonnodal_reduced->mean.size() != basis.dimension())
      throw InputError("priors.nonnodal: reduced block has dimension " +
                       std::to_string(model.nonnodal_reduced->mean.size()) + ", expected " +
                       std::to_string(basis.dimension()));
    return *model.nonnodal_reduced;
  }
  if (!model.nonnodal) throw InputError("model file has no priors.nonnodal block");
  return dimred::project_moments(*model.nonnodal, basis);
}

}  // namespace nodemap
