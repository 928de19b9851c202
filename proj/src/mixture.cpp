#include "nodemap/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace nodemap::em {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

int component_dim(const priors::GroupPriors& priors) { return priors[0].dimension(); }

}  // namespace

void validate(const EmConfig& cfg) {
  if (!(cfg.nu > 0.0)) throw InputError("nu_s1 must be positive");
  if (!(cfg.epsilon > 0.0)) throw InputError("epsilon_s1 must be positive");
  if (cfg.max_outer < 1) throw InputError("max_outer must be at least 1");
  if (!(cfg.inner_tol > 0.0) || cfg.inner_max < 1) throw InputError("inner_tol and inner_max must be positive");
}

TDensity::TDensity(const Vector& mu, const Matrix& sigma, double nu) : mu_(mu), llt_(sigma), nu_(nu) {
  if (!(nu > 0.0)) throw InputError("t degrees of freedom must be positive");
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) throw InputError("scale matrix dimension mismatch");
  if (llt_.info() != Eigen::Success) throw NumericError("scale matrix is not positive definite");
  const Vector diag = llt_.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite()) throw NumericError("scale matrix is not positive definite");
  log_det_ = 2.0 * diag.array().log().sum();
  const double k = static_cast<double>(mu.size());
  log_norm_ = std::lgamma((nu + k) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * k * std::log(nu * std::numbers::pi) -
              0.5 * log_det_;
}

double TDensity::mahalanobis2(const Eigen::Ref<const Vector>& x) const {
  const Vector d = x - mu_;
  return llt_.matrixL().solve(d).squaredNorm();
}

double TDensity::logpdf(const Eigen::Ref<const Vector>& x) const {
  const double k = static_cast<double>(mu_.size());
  return log_norm_ - 0.5 * (nu_ + k) * std::log1p(mahalanobis2(x) / nu_);
}

double t_logpdf(const Vector& x, const Vector& mu, const Matrix& sigma, double nu) {
  return TDensity(mu, sigma, nu).logpdf(x);
}

std::vector<Merge> single_linkage(const Matrix& points) {
  const int n = static_cast<int>(points.rows());
  std::vector<Merge> merges;
  if (n < 2) return merges;

  // Prim's algorithm: the single-linkage dendrogram is the minimum spanning
  // tree with its edges taken in increasing length.
  struct Edge {
    int i, j;
    double w;
  };
  std::vector<Edge> tree;
  tree.reserve(static_cast<std::size_t>(n - 1));
  std::vector<bool> in_tree(static_cast<std::size_t>(n), false);
  std::vector<double> best(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  int current = 0;
  in_tree[0] = true;
  for (int added = 1; added < n; ++added) {
    int next = -1;
    for (int v = 0; v < n; ++v) {
      if (in_tree[static_cast<std::size_t>(v)]) continue;
      const double d = (points.row(v) - points.row(current)).norm();
      if (d < best[static_cast<std::size_t>(v)]) {
        best[static_cast<std::size_t>(v)] = d;
        parent[static_cast<std::size_t>(v)] = current;
      }
      if (next < 0 || best[static_cast<std::size_t>(v)] < best[static_cast<std::size_t>(next)]) next = v;
    }
    in_tree[static_cast<std::size_t>(next)] = true;
    tree.push_back({std::min(next, parent[static_cast<std::size_t>(next)]),
                    std::max(next, parent[static_cast<std::size_t>(next)]), best[static_cast<std::size_t>(next)]});
    current = next;
  }
  std::stable_sort(tree.begin(), tree.end(), [](const Edge& x, const Edge& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });

  std::vector<int> root(static_cast<std::size_t>(n));
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int x) {
    while (root[static_cast<std::size_t>(x)] != x) {
      root[static_cast<std::size_t>(x)] = root[static_cast<std::size_t>(root[static_cast<std::size_t>(x)])];
      x = root[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (const auto& e : tree) {
    // Union by smallest index keeps each root equal to the cluster's smallest member.
    const int a = find(e.i);
    const int b = find(e.j);
    const int lo = std::min(a, b);
    const int hi = std::max(a, b);
    root[static_cast<std::size_t>(hi)] = lo;
    merges.push_back({lo, hi, e.w});
  }
  return merges;
}

std::vector<int> cut_tree(int n, const std::vector<Merge>& merges, int clusters) {
  if (clusters < 1 || clusters > n) throw InputError("invalid cluster count");
  std::vector<int> root(static_cast<std::size_t>(n));
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int x) {
    while (root[static_cast<std::size_t>(x)] != x) x = root[static_cast<std::size_t>(x)];
    return x;
  };
  const std::size_t apply = static_cast<std::size_t>(n - clusters);
  for (std::size_t m = 0; m < apply && m < merges.size(); ++m) {
    const int a = find(merges[m].a);
    const int b = find(merges[m].b);
    root[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  std::vector<int> id(static_cast<std::size_t>(n), -1);
  std::vector<int> out(static_cast<std::size_t>(n));
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (id[static_cast<std::size_t>(r)] < 0) id[static_cast<std::size_t>(r)] = next++;
    out[static_cast<std::size_t>(i)] = id[static_cast<std::size_t>(r)];
  }
  return out;
}

bool floor_covariance(Matrix& sigma, double reference_trace) {
  const auto k = sigma.rows();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  double ref = reference_trace;
  if (!(ref > 0.0) || !std::isfinite(ref)) ref = 1.0;
  const double floor = 1e-10 * ref / static_cast<double>(k);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  if (eig.eigenvalues().minCoeff() >= floor) return false;
  const Vector clipped = eig.eigenvalues().cwiseMax(floor);
  sigma = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return true;
}

Initialisation init_hierarchical(const Matrix& data, const priors::GroupPriors& priors) {
  const int n = static_cast<int>(data.rows());
  if (n < 3) throw InputError("hierarchical initialisation needs at least 3 points");
  const int k = static_cast<int>(data.cols());
  if (component_dim(priors) != k) throw InputError("prior dimension does not match data");

  const auto cluster = cut_tree(n, single_linkage(data), kComponents);
  std::array<Vector, kComponents> means;
  std::array<int, kComponents> counts{};
  for (auto& m : means) m = Vector::Zero(k);
  for (int i = 0; i < n; ++i) {
    means[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])] += data.row(i).transpose();
    ++counts[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < kComponents; ++c) means[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];

  std::array<int, kComponents> perm{0, 1, 2};
  std::array<int, kComponents> best_perm = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    // perm[j] is the cluster assigned to component j
    double cost = 0.0;
    for (int j = 0; j < kComponents; ++j)
      cost += (means[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] - priors[static_cast<std::size_t>(j)].mu).norm();
    if (cost < best_cost) {
      best_cost = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  std::array<int, kComponents> component_of_cluster{};
  for (int j = 0; j < kComponents; ++j) component_of_cluster[static_cast<std::size_t>(best_perm[static_cast<std::size_t>(j)])] = j;

  const Vector overall = data.colwise().mean().transpose();
  const double overall_trace = (data.rowwise() - overall.transpose()).squaredNorm() / std::max(1, n - 1);

  Initialisation init;
  init.component.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    init.component[static_cast<std::size_t>(i)] = component_of_cluster[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])];
  for (int j = 0; j < kComponents; ++j) {
    const int c = best_perm[static_cast<std::size_t>(j)];
    Matrix cov = Matrix::Zero(k, k);
    for (int i = 0; i < n; ++i) {
      if (cluster[static_cast<std::size_t>(i)] != c) continue;
      const Vector d = data.row(i).transpose() - means[static_cast<std::size_t>(c)];
      cov.noalias() += d * d.transpose();
    }
    if (counts[static_cast<std::size_t>(c)] > 1) cov /= counts[static_cast<std::size_t>(c)] - 1;
    const double own = cov.trace();
    floor_covariance(cov, own > 0.0 ? own : overall_trace);
    init.mu[static_cast<std::size_t>(j)] = means[static_cast<std::size_t>(c)];
    init.sigma[static_cast<std::size_t>(j)] = cov;
  }
  return init;
}

Matrix stage1_log_prior(const priors::PositionField& field, const Abundances& pi) {
  const int n = field.pixels();
  Matrix out(n, kComponents);
  for (int i = 0; i < n; ++i) {
    const auto& a = field.alpha[static_cast<std::size_t>(i)];
    double norm = 0.0;
    for (int j = 0; j < kComponents; ++j) norm += a[static_cast<std::size_t>(j)] * pi[static_cast<std::size_t>(j)];
    for (int j = 0; j < kComponents; ++j) {
      const double w = a[static_cast<std::size_t>(j)] * pi[static_cast<std::size_t>(j)] / norm;
      out(i, j) = w > 0.0 ? std::log(w) : kNegInf;
    }
  }
  return out;
}

void e_step(const Matrix& data, const Matrix& log_prior, double nu, MixtureState& state) {
  const auto n = data.rows();
  const int k = static_cast<int>(data.cols());
  if (log_prior.rows() != n) throw InputError("prior and data sizes differ");
  std::array<TDensity, kComponents> dens{TDensity(state.mu[0], state.sigma[0], nu),
                                         TDensity(state.mu[1], state.sigma[1], nu),
                                         TDensity(state.mu[2], state.sigma[2], nu)};
  state.z.resize(n, kComponents);
  state.u.resize(n, kComponents);
  Eigen::RowVectorXd logp(kComponents);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = data.row(i).transpose();
    for (int j = 0; j < kComponents; ++j) {
      const auto& d = dens[static_cast<std::size_t>(j)];
      const double m2 = d.mahalanobis2(x);
      state.u(i, j) = (nu + k) / (nu + m2);
      logp(j) = log_prior(i, j) + d.logpdf(x);
    }
    const double lse = log_sum_exp(logp);
    if (!std::isfinite(lse)) throw NumericError("all-zero density row at pixel " + std::to_string(i));
    for (int j = 0; j < kComponents; ++j) state.z(i, j) = std::exp(logp(j) - lse);
    state.z.row(i) /= state.z.row(i).sum();
  }
}

double pi_fixed_point_residual(const priors::PositionField& field, const Abundances& pi, const Vector& delta) {
  double worst = 0.0;
  for (int i = 0; i < field.pixels(); ++i) {
    const auto& a = field.alpha[static_cast<std::size_t>(i)];
    double s = 0.0;
    for (int j = 0; j < kComponents; ++j) s += a[static_cast<std::size_t>(j)] * delta(i) * pi[static_cast<std::size_t>(j)];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

namespace {

Vector deltas(const priors::PositionField& field, const Abundances& pi) {
  Vector delta(field.pixels());
  for (int i = 0; i < field.pixels(); ++i) {
    const auto& a = field.alpha[static_cast<std::size_t>(i)];
    double s = 0.0;
    for (int j = 0; j < kComponents; ++j) s += a[static_cast<std::size_t>(j)] * pi[static_cast<std::size_t>(j)];
    delta(i) = 1.0 / s;
  }
  return delta;
}

double scalar_change(double before, double after) {
  const double diff = std::abs(after - before);
  return std::abs(before) < 1e-8 ? diff : diff / std::abs(before);
}

}  // namespace

double relative_change(const Eigen::Ref<const Matrix>& before, const Eigen::Ref<const Matrix>& after) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < before.cols(); ++c)
    for (Eigen::Index r = 0; r < before.rows(); ++r) worst = std::max(worst, scalar_change(before(r, c), after(r, c)));
  return worst;
}

PiUpdate m_step_pi(const Matrix& z, const priors::PositionField& field, const Abundances& start, double inner_tol,
                   int inner_max) {
  if (z.rows() != field.pixels()) throw InputError("responsibilities and position field sizes differ");
  const Eigen::RowVectorXd counts = z.colwise().sum();
  PiUpdate out;
  out.pi = start;
  const double total = std::accumulate(out.pi.begin(), out.pi.end(), 0.0);
  for (auto& p : out.pi) p /= total;

  for (out.sweeps = 1; out.sweeps <= inner_max; ++out.sweeps) {
    const Vector delta = deltas(field, out.pi);
    Abundances next{};
    for (int j = 0; j < kComponents; ++j) {
      double denom = 0.0;
      for (int i = 0; i < field.pixels(); ++i) denom += delta(i) * field.alpha[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(j)] = denom > 0.0 ? counts(j) / denom : out.pi[static_cast<std::size_t>(j)];
    }
    const double sum = std::accumulate(next.begin(), next.end(), 0.0);
    for (auto& p : next) p /= sum;
    double change = 0.0;
    for (int j = 0; j < kComponents; ++j)
      change = std::max(change, scalar_change(out.pi[static_cast<std::size_t>(j)], next[static_cast<std::size_t>(j)]));
    out.pi = next;
    if (change < inner_tol) {
      out.converged = true;
      break;
    }
  }
  out.sweeps = std::min(out.sweeps, inner_max);
  out.delta = deltas(field, out.pi);
  out.residual = pi_fixed_point_residual(field, out.pi, out.delta);
  return out;
}

ThetaUpdate m_step_theta_component(const Matrix& data, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& u,
                                   const priors::GroupPrior& prior, Vector& mu, Matrix& sigma, double inner_tol,
                                   int inner_max) {
  const auto k = data.cols();
  const Vector weight = z.cwiseProduct(u);
  const double n_j = z.sum();
  const double n_u = weight.sum();
  Vector xbar = Vector::Zero(k);
  if (n_u > 0.0) xbar = (data.transpose() * weight) / n_u;
  const Vector kh = prior.k_diag.cwiseSqrt();
  const double denom = prior.nu + n_j + static_cast<double>(k) + 2.0;

  ThetaUpdate out;
  out.converged = false;
  for (out.alternations = 1; out.alternations <= inner_max; ++out.alternations) {
    Vector mu_next;
    if (n_u > 0.0) {
      Eigen::LLT<Matrix> llt(sigma);
      if (llt.info() != Eigen::Success) throw NumericError("scale matrix is not positive definite in M-step");
      const Matrix sinv = llt.solve(Matrix::Identity(k, k));
      const Matrix w0 = kh.asDiagonal() * sinv * kh.asDiagonal();
      const Matrix a = w0 + n_u * sinv;
      const Vector b = w0 * prior.mu + n_u * (sinv * xbar);
      mu_next = a.ldlt().solve(b);
    } else {
      mu_next = prior.mu;
    }

    Matrix scatter = Matrix::Zero(k, k);
    if (n_u > 0.0) {
      const Matrix centred = data.rowwise() - mu_next.transpose();
      scatter = centred.transpose() * weight.asDiagonal() * centred;
    }
    const Vector d = kh.cwiseProduct(mu_next - prior.mu);
    Matrix sigma_next = (prior.lambda_inv + d * d.transpose() + scatter) / denom;
    sigma_next = 0.5 * (sigma_next + sigma_next.transpose()).eval();
    if (floor_covariance(sigma_next, sigma_next.trace())) ++out.floor_events;

    const double change = std::max(relative_change(mu, mu_next), relative_change(sigma, sigma_next));
    mu = mu_next;
    sigma = sigma_next;
    if (change < inner_tol) {
      out.converged = true;
      break;
    }
  }
  out.alternations = std::min(out.alternations, inner_max);
  return out;
}

ThetaUpdate m_step_theta(const Matrix& data, const Matrix& z, const Matrix& u, const priors::GroupPriors& priors,
                         Components& mu, Scales& sigma, double inner_tol, int inner_max) {
  ThetaUpdate total;
  for (int j = 0; j < kComponents; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    const auto r = m_step_theta_component(data, z.col(j), u.col(j), priors[idx], mu[idx], sigma[idx], inner_tol, inner_max);
    total.alternations = std::max(total.alternations, r.alternations);
    total.converged = total.converged && r.converged;
    total.floor_events += r.floor_events;
  }
  return total;
}

double log_eniw(const Vector& mu, const Matrix& sigma, const priors::GroupPrior& prior) {
  const double k = static_cast<double>(mu.size());
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) return kNegInf;
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Vector d = prior.k_diag.cwiseSqrt().cwiseProduct(mu - prior.mu);
  const double quad = llt.matrixL().solve(d).squaredNorm();
  const Matrix sinv = llt.solve(Matrix::Identity(sigma.rows(), sigma.cols()));
  const double trace = (prior.lambda_inv * sinv).trace();
  // Normal part: -1/2 log|K^-1/2 Sigma K^-1/2| - 1/2 d' Sigma^-1 d.
  // Inverse-Wishart part: -(nu + k + 1)/2 log|Sigma| - 1/2 tr(Lambda^-1 Sigma^-1).
  return -0.5 * log_det - 0.5 * quad - 0.5 * (prior.nu + k + 1.0) * log_det - 0.5 * trace;
}

double map_objective(const Matrix& data, const Components& mu, const Scales& sigma, const Abundances& pi,
                     const priors::PositionField& field, const priors::GroupPriors& priors, double nu) {
  const Matrix log_prior = stage1_log_prior(field, pi);
  std::array<TDensity, kComponents> dens{TDensity(mu[0], sigma[0], nu), TDensity(mu[1], sigma[1], nu),
                                         TDensity(mu[2], sigma[2], nu)};
  double total = 0.0;
  Eigen::RowVectorXd logp(kComponents);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Vector x = data.row(i).transpose();
    for (int j = 0; j < kComponents; ++j) logp(j) = log_prior(i, j) + dens[static_cast<std::size_t>(j)].logpdf(x);
    total += log_sum_exp(logp);
  }
  for (int j = 0; j < kComponents; ++j)
    total += log_eniw(mu[static_cast<std::size_t>(j)], sigma[static_cast<std::size_t>(j)], priors[static_cast<std::size_t>(j)]);
  return total;
}

std::vector<int> hard_labels(const Matrix& z) {
  std::vector<int> y(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < z.cols(); ++j)
      if (z(i, j) > z(i, best)) best = j;
    y[static_cast<std::size_t>(i)] = best + 1;
  }
  return y;
}

MixtureState run_stage1(const Matrix& data, const priors::PositionField& field, const priors::GroupPriors& priors,
                        const EmConfig& cfg) {
  validate(cfg);
  const int n = static_cast<int>(data.rows());
  const int k = static_cast<int>(data.cols());
  if (n != field.pixels()) throw InputError("data rows do not match the position field");
  if (component_dim(priors) != k) throw InputError("prior dimension does not match data");
  for (const auto& p : priors) priors::validate(p);

  MixtureState s;
  if (n >= 3) {
    auto init = init_hierarchical(data, priors);
    s.mu = std::move(init.mu);
    s.sigma = std::move(init.sigma);
  } else {
    // Too few points to cluster: start from the prior modes.
    for (int j = 0; j < kComponents; ++j) {
      const auto& p = priors[static_cast<std::size_t>(j)];
      s.mu[static_cast<std::size_t>(j)] = p.mu;
      Matrix sig = p.lambda_inv / (p.nu + k + 2.0);
      floor_covariance(sig, sig.trace());
      s.sigma[static_cast<std::size_t>(j)] = sig;
    }
  }
  s.pi = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  s.delta = deltas(field, s.pi);
  if (cfg.track_objective) s.objective.push_back(map_objective(data, s.mu, s.sigma, s.pi, field, priors, cfg.nu));

  for (s.iterations = 1; s.iterations <= cfg.max_outer; ++s.iterations) {
    e_step(data, stage1_log_prior(field, s.pi), cfg.nu, s);

    const PiUpdate pu = m_step_pi(s.z, field, s.pi, cfg.inner_tol, cfg.inner_max);
    s.pi_residual.push_back(pu.residual);
    if (!pu.converged) ++s.inner_nonconverged;

    Components mu = s.mu;
    Scales sigma = s.sigma;
    const ThetaUpdate tu = m_step_theta(data, s.z, s.u, priors, mu, sigma, cfg.inner_tol, cfg.inner_max);
    s.floor_events += tu.floor_events;
    if (!tu.converged) ++s.inner_nonconverged;

    double change = 0.0;
    for (int j = 0; j < kComponents; ++j) {
      const auto idx = static_cast<std::size_t>(j);
      change = std::max(change, relative_change(s.mu[idx], mu[idx]));
      change = std::max(change, relative_change(s.sigma[idx], sigma[idx]));
      change = std::max(change, scalar_change(s.pi[idx], pu.pi[idx]));
    }
    s.mu = std::move(mu);
    s.sigma = std::move(sigma);
    s.pi = pu.pi;
    s.delta = pu.delta;
    if (cfg.track_objective) s.objective.push_back(map_objective(data, s.mu, s.sigma, s.pi, field, priors, cfg.nu));
    if (change < cfg.epsilon) {
      s.converged = true;
      break;
    }
  }
  s.iterations = std::min(s.iterations, cfg.max_outer);

  // Responsibilities consistent with the returned parameters.
  e_step(data, stage1_log_prior(field, s.pi), cfg.nu, s);
  s.y = hard_labels(s.z);
  return s;
}

}  // namespace nodemap::em
