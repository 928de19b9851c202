#include "nodemap/priors.hpp"

#include <cmath>

namespace nodemap::priors {

void validate(const GroupPrior& prior) {
  const auto k = prior.mu.size();
  if (prior.k_diag.size() != k || prior.lambda_inv.rows() != k || prior.lambda_inv.cols() != k)
    throw InputError("prior dimension mismatch");
  if ((prior.k_diag.array() <= 0.0).any()) throw InputError("prior weights must be positive");
  if (!(prior.nu > static_cast<double>(k) - 1.0)) throw InputError("prior degrees of freedom must exceed k-1");
  if (!prior.lambda_inv.isApprox(prior.lambda_inv.transpose(), 1e-10)) throw InputError("prior scale is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(prior.lambda_inv, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, prior.lambda_inv.cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) throw InputError("prior scale is not positive semi-definite");
}

double scaled_distance(double r, double c, int rows, int cols) {
  const double rc = (rows + 1) / 2.0;
  const double cc = (cols + 1) / 2.0;
  const double corner = std::hypot(rc - 1.0, cc - 1.0);
  if (corner == 0.0) return 0.0;
  return std::hypot(r - rc, c - cc) / corner;
}

double background_score(double d, double rho) {
  if (d > kFringeThreshold) return std::min(std::pow(d, 1.0 / rho), kBackgroundCap);
  return d;
}

std::array<double, kComponents> position_params(double omega) {
  const double nodal = (1.0 - omega) / 2.0;
  return {nodal, nodal, omega};
}

PositionField position_field(int rows, int cols, double rho) {
  if (rows <= 0 || cols <= 0) throw InputError("grid dimensions must be positive");
  if (!(rho > 0.0)) throw InputError("rho must be positive");
  PositionField f;
  f.rows = rows;
  f.cols = cols;
  f.rho = rho;
  const auto n = static_cast<std::size_t>(rows * cols);
  f.d.resize(n);
  f.omega.resize(n);
  f.alpha.resize(n);
  for (int r = 1; r <= rows; ++r) {
    for (int c = 1; c <= cols; ++c) {
      const auto i = static_cast<std::size_t>(pixel_index(r, c, cols));
      f.d[i] = scaled_distance(r, c, rows, cols);
      f.omega[i] = background_score(f.d[i], rho);
      f.alpha[i] = position_params(f.omega[i]);
    }
  }
  return f;
}

PositionField uniform_field(int rows, int cols, const std::array<double, kComponents>& alpha) {
  PositionField f;
  f.rows = rows;
  f.cols = cols;
  const auto n = static_cast<std::size_t>(rows * cols);
  f.d.assign(n, 0.0);
  f.omega.assign(n, alpha[2]);
  f.alpha.assign(n, alpha);
  return f;
}

Vector weight_diagonal(const std::vector<double>& configured, int k) {
  if (configured.empty()) throw InputError("empty prior weight list");
  Vector out(k);
  for (int i = 0; i < k; ++i)
    out(i) = configured[std::min<std::size_t>(static_cast<std::size_t>(i), configured.size() - 1)];
  if ((out.array() <= 0.0).any()) throw InputError("prior weights must be positive");
  return out;
}

namespace {

GroupPrior make_prior(const dimred::Moments& m, const std::vector<double>& weights) {
  const int k = static_cast<int>(m.mean.size());
  GroupPrior g;
  g.mu = m.mean;
  g.k_diag = weight_diagonal(weights, k);
  g.nu = k + 2.0;
  g.lambda_inv = (g.nu - k - 1.0) * m.cov;
  validate(g);
  return g;
}

}  // namespace

GroupPriors build_group_priors(const dimred::PriorMoments& moments, const dimred::Moments* nonnodal,
                               const PriorWeights& weights) {
  if (!nonnodal) throw InputError("missing non-nodal prior moments (priors.nonnodal)");
  const auto k = moments.normal.mean.size();
  if (moments.metastatic.mean.size() != k || nonnodal->mean.size() != k)
    throw InputError("prior moments have inconsistent dimensions");
  return {make_prior(moments.normal, weights.normal), make_prior(moments.metastatic, weights.metastatic),
          make_prior(*nonnodal, weights.nonnodal)};
}

}  // namespace nodemap::priors
