#pragma once

#include "nodemap/types.hpp"

#include <filesystem>

namespace nodemap::synth {

// Generative model: each spectrum is a fixed smooth base curve plus a 2-D
// class latent (multivariate t) and a few Gaussian nuisance factors, embedded
// through smooth orthonormal loadings, plus isotropic white noise.
struct SynthConfig {
  std::uint64_t seed = 1;
  int p = 121;
  double lambda_lo = 320.0;
  double lambda_hi = 800.0;
  int rows = 20;
  int cols = 20;

  // Latent means and scale matrices, indexed by component (normal, metastatic, non-nodal).
  std::array<Eigen::Vector2d, kComponents> means{Eigen::Vector2d(-2.0, 0.0), Eigen::Vector2d(2.0, 0.0),
                                                 Eigen::Vector2d(0.0, 4.0)};
  std::array<Eigen::Matrix2d, kComponents> scales{Eigen::Matrix2d{{0.35, 0.05}, {0.05, 0.4}},
                                                  Eigen::Matrix2d{{0.35, -0.05}, {-0.05, 0.4}},
                                                  Eigen::Matrix2d{{1.0, 0.0}, {0.0, 1.5}}};
  double nu_gen = 4.0;

  double latent_scale = 0.05;  // spectral amplitude of one latent unit (RMS over wavelengths)
  double noise_sd = 0.01;
  int nuisance_dims = 3;
  double nuisance_sd = 0.5;
  double node_offset_sd = 0.3;      // per-node shift along the first nuisance factor
  double nonnodal_shift_sd = 0.5;   // per-node jitter of the non-nodal latent mean
  double site_offset_sd = 0.2;      // per-site shift of training spectra

  double disc_radius = 0.7;  // nodal pixels have scaled distance <= this

  int train_normal = 250;
  int train_metastatic = 250;
  int train_nonnodal = 100;
  int sites = 10;
};

void validate(const SynthConfig& cfg);

struct BlobSpec {
  int count = 1;
  int min_size = 9;
  int max_size = 40;
  // Rectangular blobs use width x height; otherwise blobs grow to a random size.
  bool rectangular = false;
  int width = 0;
  int height = 0;
  // Isolated nodal pixels, away from blobs and from each other, whose spectra
  // are drawn from the metastatic component while the truth stays normal.
  int isolated = 0;
};

struct SynthNode {
  NodeScan scan;
  std::vector<int> truth_labels;  // component codes, row-major
  std::vector<int> isolated;      // pixel indices of the injected outliers
};

WavelengthGrid wavelength_grid(const SynthConfig& cfg);

// Loadings (p x (2 + nuisance_dims)); columns are orthonormal up to RMS scaling.
Matrix loadings(const SynthConfig& cfg);

// Latent draws of one component, n x 2, from the t construction.
Matrix sample_latent(const SynthConfig& cfg, Component c, int n, std::uint64_t seed);

ManualTrainingSet gen_training(const SynthConfig& cfg);

// Nodal disc mask and layout without blobs.
std::vector<int> base_labels(const SynthConfig& cfg);

// `index` selects an independent per-node stream.
SynthNode gen_node(const SynthConfig& cfg, Verdict truth, const BlobSpec& blobs, std::uint64_t index);

// Writes train.csv, nodes/<id>.csv, truth/<id>.csv and manifest.csv under dir.
void write_dataset(const SynthConfig& cfg, int normal_nodes, int metastatic_nodes, const BlobSpec& blobs,
                   const std::filesystem::path& dir);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace nodemap::synth
