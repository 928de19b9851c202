#include "nodemap/mrf.hpp"

#include <cmath>
#include <limits>

namespace nodemap::mrf {

Neighborhood eight_neighborhood(int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw InputError("grid dimensions must be positive");
  Neighborhood nb;
  nb.rows = rows;
  nb.cols = cols;
  nb.neighbors.resize(static_cast<std::size_t>(rows * cols));
  for (int r = 1; r <= rows; ++r) {
    for (int c = 1; c <= cols; ++c) {
      auto& list = nb.neighbors[static_cast<std::size_t>(pixel_index(r, c, cols))];
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 1 || rr > rows || cc < 1 || cc > cols) continue;
          list.push_back(pixel_index(rr, cc, cols));
        }
      }
    }
  }
  return nb;
}

void validate(const MrfConfig& cfg) {
  if (!(cfg.beta >= 0.0)) throw InputError("beta must be non-negative");
  if (!(cfg.nu > 0.0)) throw InputError("nu_s2 must be positive");
  if (cfg.max_sweeps < 1) throw InputError("max_sweeps must be at least 1");
  if (!(cfg.theta_tol > 0.0)) throw InputError("theta_tol must be positive");
}

double gamma_frac(int pixel, int component, const std::vector<int>& labels, const Neighborhood& nbhd) {
  const auto& nb = nbhd.of(pixel);
  if (nb.empty()) return 0.0;
  int differ = 0;
  for (int q : nb) differ += labels[static_cast<std::size_t>(q)] != component;
  return static_cast<double>(differ) / static_cast<double>(nb.size());
}

std::array<double, kComponents> mrf_prior(int pixel, const std::vector<int>& labels,
                                          const std::array<double, kComponents>& alpha, double beta,
                                          const Neighborhood& nbhd) {
  std::array<double, kComponents> out{};
  double total = 0.0;
  for (int j = 0; j < kComponents; ++j) {
    out[static_cast<std::size_t>(j)] =
        alpha[static_cast<std::size_t>(j)] * std::exp(-beta * gamma_frac(pixel, j + 1, labels, nbhd));
    total += out[static_cast<std::size_t>(j)];
  }
  for (auto& v : out) v /= total;
  return out;
}

std::array<double, kComponents> conditional_log_posterior(int pixel, const Eigen::Ref<const Vector>& x,
                                                          const std::vector<int>& labels,
                                                          const priors::PositionField& field, double beta,
                                                          const Neighborhood& nbhd,
                                                          const std::array<em::TDensity, kComponents>& dens) {
  std::array<double, kComponents> out{};
  const auto& alpha = field.alpha[static_cast<std::size_t>(pixel)];
  for (int j = 0; j < kComponents; ++j) {
    const double a = alpha[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(j)] = (a > 0.0 ? std::log(a) : -std::numeric_limits<double>::infinity()) -
                                       beta * gamma_frac(pixel, j + 1, labels, nbhd) +
                                       dens[static_cast<std::size_t>(j)].logpdf(x);
  }
  return out;
}

SweepStats icm_sweep(const Matrix& data, em::MixtureState& state, const priors::PositionField& field,
                     const MrfConfig& cfg, const Neighborhood& nbhd) {
  const int n = static_cast<int>(data.rows());
  const int k = static_cast<int>(data.cols());
  if (n != field.pixels() || static_cast<int>(nbhd.neighbors.size()) != n || static_cast<int>(state.y.size()) != n)
    throw InputError("data, labels, position field and neighbourhood sizes differ");
  const std::array<em::TDensity, kComponents> dens{em::TDensity(state.mu[0], state.sigma[0], cfg.nu),
                                                   em::TDensity(state.mu[1], state.sigma[1], cfg.nu),
                                                   em::TDensity(state.mu[2], state.sigma[2], cfg.nu)};
  state.z.resize(n, kComponents);
  state.u.resize(n, kComponents);
  SweepStats stats;
  for (int i = 0; i < n; ++i) {
    const auto logp = conditional_log_posterior(i, data.row(i).transpose(), state.y, field, cfg.beta, nbhd, dens);
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logp) m = std::max(m, v);
    if (!std::isfinite(m)) throw NumericError("all-zero conditional posterior at pixel " + std::to_string(i));
    double total = 0.0;
    for (int j = 0; j < kComponents; ++j) {
      state.z(i, j) = std::exp(logp[static_cast<std::size_t>(j)] - m);
      total += state.z(i, j);
    }
    state.z.row(i) /= total;
    int best = 0;
    for (int j = 1; j < kComponents; ++j)
      if (logp[static_cast<std::size_t>(j)] > logp[static_cast<std::size_t>(best)]) best = j;
    if (state.y[static_cast<std::size_t>(i)] != best + 1) {
      state.y[static_cast<std::size_t>(i)] = best + 1;
      ++stats.changed;
    }
  }
  for (int i = 0; i < n; ++i) {
    const Vector x = data.row(i).transpose();
    for (int j = 0; j < kComponents; ++j)
      state.u(i, j) = (cfg.nu + k) / (cfg.nu + dens[static_cast<std::size_t>(j)].mahalanobis2(x));
  }
  return stats;
}

Stage2Result run_stage2(const Matrix& data, const em::MixtureState& stage1, const priors::PositionField& field,
                        const priors::GroupPriors& priors, const MrfConfig& cfg, const Neighborhood& nbhd) {
  validate(cfg);
  Stage2Result out;
  out.state = stage1;
  auto& s = out.state;
  s.objective.clear();
  s.pi_residual.clear();
  for (out.sweeps = 1; out.sweeps <= cfg.max_sweeps; ++out.sweeps) {
    const SweepStats sweep = icm_sweep(data, s, field, cfg, nbhd);
    out.changes.push_back(sweep.changed);
    double change = 0.0;
    if (!cfg.freeze_theta) {
      em::Components mu = s.mu;
      em::Scales sigma = s.sigma;
      const auto tu = em::m_step_theta(data, s.z, s.u, priors, mu, sigma, cfg.inner_tol, cfg.inner_max);
      s.floor_events += tu.floor_events;
      if (!tu.converged) ++s.inner_nonconverged;
      for (int j = 0; j < kComponents; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        change = std::max(change, em::relative_change(s.mu[idx], mu[idx]));
        change = std::max(change, em::relative_change(s.sigma[idx], sigma[idx]));
      }
      s.mu = std::move(mu);
      s.sigma = std::move(sigma);
    }
    if (sweep.changed == 0 && change < cfg.theta_tol) {
      out.converged = true;
      break;
    }
  }
  out.sweeps = std::min(out.sweeps, cfg.max_sweeps);
  return out;
}

int isolated_count(const std::vector<int>& labels, const Neighborhood& nbhd) {
  int count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& nb = nbhd.neighbors[i];
    if (nb.empty()) continue;
    bool isolated = true;
    for (int q : nb) {
      if (labels[static_cast<std::size_t>(q)] == labels[i]) {
        isolated = false;
        break;
      }
    }
    count += isolated;
  }
  return count;
}

}  // namespace nodemap::mrf
