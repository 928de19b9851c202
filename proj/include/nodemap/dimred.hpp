#pragma once

#include "nodemap/types.hpp"

#include <span>

namespace nodemap::dimred {

struct PcaResult {
  Matrix loadings;   // p x k, orthonormal columns
  Vector variances;  // k, decreasing; squared singular values / (rows - 1)
};

// Principal components of an already-centred matrix (no re-centring is done).
// Each loading is signed so that its largest-magnitude element is positive.
PcaResult pca(const Matrix& centred, int k);

struct ExternalFit {
  Vector train_mean;  // p, mean of the normal + metastatic rows
  Vector q_ext;       // p, canonical loading
  Vector scores;      // canonical score of every nodal training row, in input order
  std::vector<Component> labels;  // labels of those rows
  bool regularised = false;
};

// PCA to k_ext components followed by two-class LDA. Scores have unit pooled
// within-class variance and the metastatic mean score exceeds the normal one.
// Non-nodal rows in the set are ignored.
ExternalFit fit_external(const ManualTrainingSet& train, int k_ext);

struct KSelection {
  int chosen = 0;
  std::vector<double> accuracy;  // per candidate, mean of per-site accuracies
};

// Leave-one-site-out cross-validation over candidate k_ext values. Ties go to
// the smallest candidate.
KSelection choose_k_ext(const ManualTrainingSet& train, std::span<const int> candidates);

// X (I - q q^T / q^T q)
Matrix project_orthogonal(const Matrix& x, const Vector& q_ext);

struct ReductionBasis {
  Vector train_mean;
  Vector q_ext;
  Matrix q_int;  // p x k_int
  int k_ext = 0;
  int k_int = 0;

  int dimension() const { return 1 + k_int; }
  // p x k matrix mapping centred spectra to reduced scores.
  Matrix projection() const;
};

// Internal loadings: leading principal components of the node's spectra
// (centred with the training mean) after removing the external direction.
ReductionBasis fit_node_basis(const Matrix& node_spectra, const Vector& train_mean, const Vector& q_ext, int k_int,
                              int k_ext = 0);

// Scores: column 0 is the external variable, the rest the internal ones.
Matrix reduce(const Matrix& x, const ReductionBasis& basis);

struct Moments {
  Vector mean;
  Matrix cov;  // sample covariance, n-1 denominator
  std::size_t count = 0;
};

struct PriorMoments {
  Moments normal;
  Moments metastatic;
};

Moments sample_moments(const Matrix& rows);

PriorMoments prior_moments(const Matrix& reduced, std::span<const Component> labels);

// Moments of the reduced variables implied by moments of raw spectra. Because
// reduction is affine this equals reducing the rows and taking moments.
Moments project_moments(const Moments& spectral, const ReductionBasis& basis);

}  // namespace nodemap::dimred
