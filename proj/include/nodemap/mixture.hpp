#pragma once

#include "nodemap/priors.hpp"
#include "nodemap/types.hpp"

namespace nodemap::em {

struct EmConfig {
  double nu = 4.0;        // t degrees of freedom, shared by all components
  double epsilon = 0.01;  // relative-change tolerance of the outer loop
  int max_outer = 500;
  double inner_tol = 1e-8;
  int inner_max = 50;
  bool track_objective = false;
};

void validate(const EmConfig& cfg);

using Components = std::array<Vector, kComponents>;
using Scales = std::array<Matrix, kComponents>;
using Abundances = std::array<double, kComponents>;

struct MixtureState {
  Components mu;
  Scales sigma;
  Abundances pi{1.0 / 3, 1.0 / 3, 1.0 / 3};
  Matrix z;            // n x 3 responsibilities
  Matrix u;            // n x 3 gamma weights
  std::vector<int> y;  // hard labels, 1..3
  Vector delta;        // per-pixel normaliser of the position-weighted abundances

  int iterations = 0;
  bool converged = false;
  int floor_events = 0;         // covariance eigenvalue clips
  int inner_nonconverged = 0;   // coupled sub-iterations that hit inner_max
  std::vector<double> objective;    // MAP objective after each outer iteration (if tracked)
  std::vector<double> pi_residual;  // max_i |sum_j alpha_ij delta_i pi_j - 1| after each abundance update

  int n() const { return static_cast<int>(z.rows()); }
  int k() const { return static_cast<int>(mu[0].size()); }
};

// Multivariate t with a cached factorisation of the scale matrix.
class TDensity {
 public:
  TDensity(const Vector& mu, const Matrix& sigma, double nu);

  double mahalanobis2(const Eigen::Ref<const Vector>& x) const;
  double logpdf(const Eigen::Ref<const Vector>& x) const;
  // log|Sigma|
  double log_det() const { return log_det_; }
  const Eigen::LLT<Matrix>& factor() const { return llt_; }

 private:
  Vector mu_;
  Eigen::LLT<Matrix> llt_;
  double nu_;
  double log_det_ = 0.0;
  double log_norm_ = 0.0;
};

double t_logpdf(const Vector& x, const Vector& mu, const Matrix& sigma, double nu);

// Single-linkage agglomeration. Each merge joins the clusters whose smallest
// member indices are `a` and `b` (a < b) at the given Euclidean distance.
struct Merge {
  int a = 0;
  int b = 0;
  double height = 0.0;
};
std::vector<Merge> single_linkage(const Matrix& points);

// Cluster id per point after applying all but the last (clusters - 1) merges.
// Ids are numbered in order of first appearance.
std::vector<int> cut_tree(int n, const std::vector<Merge>& merges, int clusters);

struct Initialisation {
  std::vector<int> component;  // 0-based component of each point
  Components mu;
  Scales sigma;
};

// Three single-link clusters matched to the components by the permutation
// minimising the total Euclidean distance between cluster and prior means.
Initialisation init_hierarchical(const Matrix& data, const priors::GroupPriors& priors);

// Clips eigenvalues below 1e-10 * reference_trace / k. Returns true if any were clipped.
bool floor_covariance(Matrix& sigma, double reference_trace);

// log prior class probabilities log(alpha_ij * delta_i * pi_j)
Matrix stage1_log_prior(const priors::PositionField& field, const Abundances& pi);

// z_ij proportional to exp(log_prior_ij) t(x_i; theta_j); u_ij from the Mahalanobis distance.
void e_step(const Matrix& data, const Matrix& log_prior, double nu, MixtureState& state);

struct PiUpdate {
  Abundances pi{};
  Vector delta;
  int sweeps = 0;
  bool converged = false;
  double residual = 0.0;
};

// Fixed point of pi_j = n_j / sum_i delta_i alpha_ij with delta_i = 1 / sum_j alpha_ij pi_j.
// The returned pi is normalised to sum to one.
PiUpdate m_step_pi(const Matrix& z, const priors::PositionField& field, const Abundances& start, double inner_tol,
                   int inner_max);

double pi_fixed_point_residual(const priors::PositionField& field, const Abundances& pi, const Vector& delta);

struct ThetaUpdate {
  int alternations = 0;
  bool converged = true;
  int floor_events = 0;
};

// Alternates the conditional mean and scale updates of one component.
ThetaUpdate m_step_theta_component(const Matrix& data, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& u,
                                   const priors::GroupPrior& prior, Vector& mu, Matrix& sigma, double inner_tol,
                                   int inner_max);

ThetaUpdate m_step_theta(const Matrix& data, const Matrix& z, const Matrix& u, const priors::GroupPriors& priors,
                         Components& mu, Scales& sigma, double inner_tol, int inner_max);

// log of the ENIW density of (mu, Sigma), up to terms that depend only on the hyperparameters.
double log_eniw(const Vector& mu, const Matrix& sigma, const priors::GroupPrior& prior);

// sum_i log sum_j pi_ij t(x_i; theta_j) + sum_j log ENIW(theta_j)
double map_objective(const Matrix& data, const Components& mu, const Scales& sigma, const Abundances& pi,
                     const priors::PositionField& field, const priors::GroupPriors& priors, double nu);

// argmax over each row; ties resolve to the lowest component. Returns codes 1..3.
std::vector<int> hard_labels(const Matrix& z);

double relative_change(const Eigen::Ref<const Matrix>& before, const Eigen::Ref<const Matrix>& after);

MixtureState run_stage1(const Matrix& data, const priors::PositionField& field, const priors::GroupPriors& priors,
                        const EmConfig& cfg);

}  // namespace nodemap::em
