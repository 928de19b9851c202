#pragma once

#include "nodemap/dimred.hpp"
#include "nodemap/types.hpp"

namespace nodemap::priors {

// Extended normal-inverse-Wishart hyperparameters of one component.
struct GroupPrior {
  Vector mu;          // prior mean
  Vector k_diag;      // diagonal of the prior weight matrix
  double nu = 0.0;    // degrees of freedom
  Matrix lambda_inv;  // scale matrix (inverse of Lambda)

  int dimension() const { return static_cast<int>(mu.size()); }
};

using GroupPriors = std::array<GroupPrior, kComponents>;

void validate(const GroupPrior& prior);

inline constexpr double kFringeThreshold = 0.56;
inline constexpr double kBackgroundCap = 0.97;

// Distance of pixel (r, c) from the grid centre, scaled so the corners sit at 1.
double scaled_distance(double r, double c, int rows, int cols);

double background_score(double d, double rho);

// (normal, metastatic, non-nodal) prior class probabilities for background score omega.
std::array<double, kComponents> position_params(double omega);

struct PositionField {
  int rows = 0;
  int cols = 0;
  double rho = 1.0;
  std::vector<double> d;
  std::vector<double> omega;
  std::vector<std::array<double, kComponents>> alpha;

  int pixels() const { return rows * cols; }
};

PositionField position_field(int rows, int cols, double rho);

// A field with the same alpha for every pixel (no position dependence).
PositionField uniform_field(int rows, int cols, const std::array<double, kComponents>& alpha);

struct PriorWeights {
  std::vector<double> normal{5.0, 2.0};
  std::vector<double> metastatic{3.0, 1.25};
  std::vector<double> nonnodal{3.85, 10.0};
};

// Prior weight diagonal of length k; shorter configured lists are padded with
// their last entry, longer ones truncated.
Vector weight_diagonal(const std::vector<double>& configured, int k);

// nu = k + 2 for every component and Lambda^{-1} = (nu - k - 1) V.
GroupPriors build_group_priors(const dimred::PriorMoments& moments, const dimred::Moments* nonnodal,
                               const PriorWeights& weights);

}  // namespace nodemap::priors
