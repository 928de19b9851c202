#pragma once

#include "nodemap/config.hpp"
#include "nodemap/mixture.hpp"
#include "nodemap/model.hpp"
#include "nodemap/mrf.hpp"

namespace nodemap::classify {

// A node after preprocessing and reduction, with its node-specific priors.
struct PreparedNode {
  std::string node_id;
  int rows = 0;
  int cols = 0;
  std::optional<Verdict> truth;
  dimred::ReductionBasis basis;
  Matrix reduced;  // n x k
  priors::GroupPriors priors;
};

PreparedNode prepare_node(const NodeScan& node, const Model& model, const RunConfig& cfg);

struct NodeFit {
  ClassifiedNode result;
  em::MixtureState stage1;
  std::optional<mrf::Stage2Result> stage2;
};

NodeFit fit_prepared(const PreparedNode& node, const RunConfig& cfg, bool stage1_only = false);

// Stage 2 only, from an existing stage-1 fit (used by parameter sweeps).
NodeFit refine(const PreparedNode& node, const em::MixtureState& stage1, const RunConfig& cfg);

ClassifiedNode classify_node(const NodeScan& node, const Model& model, const RunConfig& cfg, bool stage1_only = false);

// Applies the any-pixel decision rule and the node score to a label field.
ClassifiedNode summarise(std::string node_id, int rows, int cols, std::vector<int> labels,
                         std::vector<double> met_posterior);

// Plain-text PPM: non-nodal pixels black, others red-to-blue by met_posterior.
std::string render_ppm(const ClassifiedNode& node);

struct Confusion {
  int tp = 0, fn = 0, tn = 0, fp = 0;
};

struct EvalReport {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double auc = 0.0;
  Confusion confusion;
  double prevalence = 0.0;
  double ppv_at_prevalence = 0.0;
  int nodes = 0;
};

double ppv(double sensitivity, double specificity, double prevalence);

// Rank-based (Mann-Whitney) area under the ROC curve, mid-ranks for ties.
double auc(std::span<const double> scores, std::span<const Verdict> truth);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const Verdict> truth);

EvalReport evaluate(std::span<const ClassifiedNode> results, double prevalence);

std::string report_json(const EvalReport& report);
std::string roc_csv(const std::vector<RocPoint>& points);

}  // namespace nodemap::classify
