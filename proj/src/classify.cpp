#include "nodemap/classify.hpp"

#include "nodemap/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nodemap::classify {

PreparedNode prepare_node(const NodeScan& node, const Model& model, const RunConfig& cfg) {
  cfg.validate();
  if (node.spectra.count() != node.pixels()) throw InputError(node.node_id + ": spectra count differs from R*C");
  const SpectralMatrix spectra = preprocess::apply(node.spectra, model.preprocess);
  if (!(spectra.grid == model.grid))
    throw InputError(node.node_id + ": wavelength grid after preprocessing differs from the model grid");

  PreparedNode out;
  out.node_id = node.node_id;
  out.rows = node.rows;
  out.cols = node.cols;
  out.truth = node.truth;
  out.basis = dimred::fit_node_basis(spectra.rows, model.train_mean, model.q_ext, cfg.k_int, model.k_ext);
  out.reduced = dimred::reduce(spectra.rows, out.basis);
  const auto moments = nodal_moments(model, out.basis);
  const auto background = nonnodal_moments(model, out.basis);
  out.priors = priors::build_group_priors(moments, &background, cfg.weights);
  return out;
}

ClassifiedNode summarise(std::string node_id, int rows, int cols, std::vector<int> labels,
                         std::vector<double> met_posterior) {
  ClassifiedNode c;
  c.node_id = std::move(node_id);
  c.rows = rows;
  c.cols = cols;
  c.labels = std::move(labels);
  c.met_posterior = std::move(met_posterior);
  for (double& z : c.met_posterior) z = std::clamp(z, 0.0, 1.0);
  const bool any = std::any_of(c.labels.begin(), c.labels.end(),
                               [](int l) { return l == static_cast<int>(Component::Metastatic); });
  c.verdict = any ? Verdict::Metastatic : Verdict::Normal;
  c.score = 0.0;
  for (std::size_t i = 0; i < c.labels.size(); ++i)
    if (c.labels[i] != static_cast<int>(Component::NonNodal)) c.score = std::max(c.score, c.met_posterior[i]);
  return c;
}

namespace {

ClassifiedNode from_state(const PreparedNode& node, const em::MixtureState& s) {
  std::vector<double> met(static_cast<std::size_t>(s.z.rows()));
  for (Eigen::Index i = 0; i < s.z.rows(); ++i) met[static_cast<std::size_t>(i)] = s.z(i, index_of(Component::Metastatic));
  auto c = summarise(node.node_id, node.rows, node.cols, s.y, std::move(met));
  c.truth = node.truth;
  return c;
}

}  // namespace

NodeFit refine(const PreparedNode& node, const em::MixtureState& stage1, const RunConfig& cfg) {
  NodeFit fit;
  fit.stage1 = stage1;
  const auto field = priors::position_field(node.rows, node.cols, cfg.rho_s2);
  const auto nbhd = mrf::eight_neighborhood(node.rows, node.cols);
  fit.stage2 = mrf::run_stage2(node.reduced, stage1, field, node.priors, cfg.mrf(), nbhd);
  fit.result = from_state(node, fit.stage2->state);
  return fit;
}

NodeFit fit_prepared(const PreparedNode& node, const RunConfig& cfg, bool stage1_only) {
  const auto field = priors::position_field(node.rows, node.cols, cfg.rho_s1);
  auto stage1 = em::run_stage1(node.reduced, field, node.priors, cfg.em());
  if (stage1_only) {
    NodeFit fit;
    fit.result = from_state(node, stage1);
    fit.stage1 = std::move(stage1);
    return fit;
  }
  return refine(node, stage1, cfg);
}

ClassifiedNode classify_node(const NodeScan& node, const Model& model, const RunConfig& cfg, bool stage1_only) {
  return fit_prepared(prepare_node(node, model, cfg), cfg, stage1_only).result;
}

std::string render_ppm(const ClassifiedNode& node) {
  if (node.labels.size() != static_cast<std::size_t>(node.rows * node.cols) ||
      node.met_posterior.size() != node.labels.size())
    throw InputError("label field does not match the grid");
  std::ostringstream out;
  out << "P3\n" << node.cols << ' ' << node.rows << "\n255\n";
  for (std::size_t i = 0; i < node.labels.size(); ++i) {
    if (node.labels[i] == static_cast<int>(Component::NonNodal)) {
      out << "0 0 0\n";
      continue;
    }
    const double z = std::clamp(node.met_posterior[i], 0.0, 1.0);
    const int red = static_cast<int>(std::floor(255.0 * z + 0.5));
    const int blue = static_cast<int>(std::floor(255.0 * (1.0 - z) + 0.5));
    out << red << " 0 " << blue << '\n';
  }
  return out.str();
}

double ppv(double sensitivity, double specificity, double prevalence) {
  const double tp = sensitivity * prevalence;
  const double fp = (1.0 - specificity) * (1.0 - prevalence);
  if (!(tp + fp > 0.0)) throw InputError("PPV undefined: no positive calls");
  return tp / (tp + fp);
}

namespace {

void check_classes(std::span<const double> scores, std::span<const Verdict> truth) {
  if (scores.size() != truth.size()) throw InputError("scores and truth lengths differ");
  const auto pos = std::count(truth.begin(), truth.end(), Verdict::Metastatic);
  if (pos == 0) throw InputError("empty class: no metastatic nodes");
  if (pos == static_cast<std::ptrdiff_t>(truth.size())) throw InputError("empty class: no normal nodes");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const Verdict> truth) {
  check_classes(scores, truth);
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i] == Verdict::Metastatic) {
      pos += 1;
      rank_sum += rank[i];
    } else {
      neg += 1;
    }
  }
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const Verdict> truth) {
  check_classes(scores, truth);
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double pos = static_cast<double>(std::count(truth.begin(), truth.end(), Verdict::Metastatic));
  const double neg = static_cast<double>(truth.size()) - pos;
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < t) continue;
      (truth[i] == Verdict::Metastatic ? tp : fp) += 1;
    }
    out.push_back({t, fp / neg, tp / pos});
  }
  return out;
}

EvalReport evaluate(std::span<const ClassifiedNode> results, double prevalence) {
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw InputError("prevalence must lie in (0, 1)");
  EvalReport r;
  r.prevalence = prevalence;
  std::vector<double> scores;
  std::vector<Verdict> truth;
  for (const auto& node : results) {
    if (!node.truth) throw InputError("node '" + node.node_id + "' has no truth label");
    const bool actual = *node.truth == Verdict::Metastatic;
    const bool called = node.verdict == Verdict::Metastatic;
    if (actual && called) ++r.confusion.tp;
    if (actual && !called) ++r.confusion.fn;
    if (!actual && !called) ++r.confusion.tn;
    if (!actual && called) ++r.confusion.fp;
    scores.push_back(node.score);
    truth.push_back(*node.truth);
  }
  r.nodes = static_cast<int>(results.size());
  if (r.confusion.tp + r.confusion.fn == 0) throw InputError("empty class: no metastatic nodes");
  if (r.confusion.tn + r.confusion.fp == 0) throw InputError("empty class: no normal nodes");
  r.sensitivity = static_cast<double>(r.confusion.tp) / (r.confusion.tp + r.confusion.fn);
  r.specificity = static_cast<double>(r.confusion.tn) / (r.confusion.tn + r.confusion.fp);
  r.auc = auc(scores, truth);
  r.ppv_at_prevalence = ppv(r.sensitivity, r.specificity, prevalence);
  return r;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["nodes"] = report.nodes;
  j["sensitivity"] = report.sensitivity;
  j["specificity"] = report.specificity;
  j["auc"] = report.auc;
  j["confusion"] = {{"tp", report.confusion.tp}, {"fn", report.confusion.fn}, {"tn", report.confusion.tn},
                    {"fp", report.confusion.fp}};
  j["prevalence"] = report.prevalence;
  j["ppv_at_prevalence"] = report.ppv_at_prevalence;
  return j.dump(1) + "\n";
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  for (const auto& p : points)
    out << (std::isinf(p.threshold) ? std::string("inf") : ingest::format_double(p.threshold)) << ','
        << ingest::format_double(p.fpr) << ',' << ingest::format_double(p.tpr) << '\n';
  return out.str();
}

}  // namespace nodemap::classify
