#pragma once

#include "nodemap/mixture.hpp"

namespace nodemap::mrf {

// Second-order (8-pixel) neighbourhood on a row-major grid.
struct Neighborhood {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<int>> neighbors;

  const std::vector<int>& of(int pixel) const { return neighbors[static_cast<std::size_t>(pixel)]; }
};

Neighborhood eight_neighborhood(int rows, int cols);

struct MrfConfig {
  double beta = 15.0;
  double nu = 4.0;  // t degrees of freedom in stage 2
  int max_sweeps = 100;
  double theta_tol = 0.01;
  double inner_tol = 1e-8;
  int inner_max = 50;
  bool freeze_theta = false;  // skip the M-step (labels only)
};

void validate(const MrfConfig& cfg);

// Fraction of the neighbours of `pixel` whose label differs from `component` (1..3).
double gamma_frac(int pixel, int component, const std::vector<int>& labels, const Neighborhood& nbhd);

// Conditional label prior alpha_ij exp(-beta gamma_ij(y)), normalised over j.
std::array<double, kComponents> mrf_prior(int pixel, const std::vector<int>& labels,
                                          const std::array<double, kComponents>& alpha, double beta,
                                          const Neighborhood& nbhd);

// Log of the unnormalised conditional posterior alpha_ij exp(-beta gamma_ij) f(x_i | theta_j).
std::array<double, kComponents> conditional_log_posterior(int pixel, const Eigen::Ref<const Vector>& x,
                                                          const std::vector<int>& labels,
                                                          const priors::PositionField& field, double beta,
                                                          const Neighborhood& nbhd,
                                                          const std::array<em::TDensity, kComponents>& dens);

struct SweepStats {
  int changed = 0;
};

// One raster-order ICM pass. Each pixel's responsibilities are recomputed
// from its current neighbourhood and its label set to the argmax in place.
// Gamma weights are refreshed once at the end of the pass.
SweepStats icm_sweep(const Matrix& data, em::MixtureState& state, const priors::PositionField& field,
                     const MrfConfig& cfg, const Neighborhood& nbhd);

struct Stage2Result {
  em::MixtureState state;
  int sweeps = 0;
  bool converged = false;
  std::vector<int> changes;  // label changes per sweep
};

// Restoration-maximisation from a stage-1 state: ICM sweep then the mean and
// scale M-step, until a sweep changes no labels and theta moves less than theta_tol.
Stage2Result run_stage2(const Matrix& data, const em::MixtureState& stage1, const priors::PositionField& field,
                        const priors::GroupPriors& priors, const MrfConfig& cfg, const Neighborhood& nbhd);

// Pixels whose existing neighbours all carry a different label.
int isolated_count(const std::vector<int>& labels, const Neighborhood& nbhd);

}  // namespace nodemap::mrf
