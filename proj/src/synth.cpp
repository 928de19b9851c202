#include "nodemap/synth.hpp"

#include "nodemap/ingest.hpp"
#include "nodemap/priors.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <cmath>
#include <cstdio>
#include <numbers>

namespace nodemap::synth {

namespace {

using Rng = boost::random::mt19937_64;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kTrainingStream = 1;
constexpr std::uint64_t kNodeStream = 2;

double gauss(Rng& rng) { return boost::random::normal_distribution<double>(0.0, 1.0)(rng); }

int uniform_int(Rng& rng, int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(rng); }

// One t draw: mean + L g / sqrt(w), g standard normal, w ~ Gamma(nu/2, rate nu/2).
Eigen::Vector2d t_draw(const Eigen::Vector2d& mean, const Eigen::Matrix2d& chol, double nu, Rng& rng) {
  const Eigen::Vector2d g(gauss(rng), gauss(rng));
  const double w = boost::random::gamma_distribution<double>(nu / 2.0, 2.0 / nu)(rng);
  return mean + chol * g / std::sqrt(w);
}

Eigen::Matrix2d cholesky(const Eigen::Matrix2d& scale) {
  Eigen::LLT<Eigen::Matrix2d> llt(scale);
  if (llt.info() != Eigen::Success) throw InputError("synthetic latent scale matrix is not positive definite");
  return llt.matrixL();
}

Vector base_curve(const WavelengthGrid& grid) {
  Vector b(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double l = grid.points[i];
    b(static_cast<Eigen::Index>(i)) = 1.0 + 0.6 * std::exp(-std::pow((l - 560.0) / 60.0, 2)) -
                                      0.3 * std::exp(-std::pow((l - 420.0) / 25.0, 2)) + 0.4 * (l - 320.0) / 480.0;
  }
  return b;
}

struct Generator {
  const SynthConfig& cfg;
  Vector base;
  Matrix load;  // p x (2 + nuisance)
  std::array<Eigen::Matrix2d, kComponents> chol;

  explicit Generator(const SynthConfig& c) : cfg(c) {
    validate(cfg);
    base = base_curve(wavelength_grid(cfg));
    load = loadings(cfg);
    for (int j = 0; j < kComponents; ++j) chol[static_cast<std::size_t>(j)] = cholesky(cfg.scales[static_cast<std::size_t>(j)]);
  }

  // nuisance_shift is added to the nuisance factors, latent_shift to the class latent.
  Vector spectrum(Component c, const Eigen::Vector2d& latent_shift, const Vector& nuisance_shift, Rng& rng) const {
    const auto j = static_cast<std::size_t>(index_of(c));
    const Eigen::Vector2d latent = t_draw(cfg.means[j] + latent_shift, chol[j], cfg.nu_gen, rng);
    Vector factors(load.cols());
    factors.head<2>() = latent;
    for (int f = 0; f < cfg.nuisance_dims; ++f) factors(2 + f) = nuisance_shift(f) + cfg.nuisance_sd * gauss(rng);
    Vector x = base + cfg.latent_scale * (load * factors);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += cfg.noise_sd * gauss(rng);
    return x;
  }
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

void validate(const SynthConfig& cfg) {
  if (cfg.p < 8) throw InputError("synth: p must be at least 8");
  if (!(cfg.lambda_hi > cfg.lambda_lo)) throw InputError("synth: empty wavelength range");
  if (cfg.rows < 3 || cfg.cols < 3) throw InputError("synth: grid must be at least 3x3");
  if (!(cfg.nu_gen > 2.0)) throw InputError("synth: nu_gen must exceed 2");
  if (cfg.nuisance_dims < 0 || cfg.nuisance_dims > 6) throw InputError("synth: nuisance_dims must be in 0..6");
  if (!(cfg.disc_radius > 0.0 && cfg.disc_radius < 1.0)) throw InputError("synth: disc_radius must lie in (0, 1)");
  if (cfg.train_normal < 0 || cfg.train_metastatic < 0 || cfg.train_nonnodal < 0 || cfg.sites < 1)
    throw InputError("synth: negative training counts");
  for (const auto& s : cfg.scales) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(s);
    if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff())))
      throw InputError("synth: degenerate latent covariance");
  }
}

WavelengthGrid wavelength_grid(const SynthConfig& cfg) {
  WavelengthGrid g;
  g.points.resize(static_cast<std::size_t>(cfg.p));
  for (int i = 0; i < cfg.p; ++i)
    g.points[static_cast<std::size_t>(i)] = cfg.lambda_lo + (cfg.lambda_hi - cfg.lambda_lo) * i / (cfg.p - 1);
  return g;
}

Matrix loadings(const SynthConfig& cfg) {
  const int p = cfg.p;
  const int m = 2 + cfg.nuisance_dims;
  // Low-frequency sinusoids, orthogonalised against the constant and the base
  // curve so SNV leaves the factors largely untouched.
  Matrix raw(p, m + 2);
  const Vector base = base_curve(wavelength_grid(cfg));
  raw.col(0).setOnes();
  raw.col(1) = base;
  for (int f = 0; f < m; ++f)
    for (int i = 0; i < p; ++i) {
      const double t = static_cast<double>(i) / (p - 1);
      raw(i, f + 2) = std::sin(std::numbers::pi * (f + 1.5) * t + 0.7 * f);
    }
  Eigen::HouseholderQR<Matrix> qr(raw);
  const Matrix q = qr.householderQ() * Matrix::Identity(p, m + 2);
  Matrix out = q.rightCols(m) * std::sqrt(static_cast<double>(p));
  // Orientation: keep each column's sign fixed for readability of the factors.
  for (int f = 0; f < m; ++f)
    if (out.col(f).dot(raw.col(f + 2)) < 0) out.col(f) = -out.col(f);
  return out;
}

Matrix sample_latent(const SynthConfig& cfg, Component c, int n, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  const auto j = static_cast<std::size_t>(index_of(c));
  const auto chol = cholesky(cfg.scales[j]);
  Matrix out(n, 2);
  for (int i = 0; i < n; ++i) out.row(i) = t_draw(cfg.means[j], chol, cfg.nu_gen, rng).transpose();
  return out;
}

ManualTrainingSet gen_training(const SynthConfig& cfg) {
  const Generator gen(cfg);
  Rng rng(derive_seed(cfg.seed, kTrainingStream));

  // Per-site offsets on the class latent and the first nuisance factor.
  std::vector<Eigen::Vector2d> site_latent(static_cast<std::size_t>(cfg.sites));
  std::vector<double> site_nuisance(static_cast<std::size_t>(cfg.sites));
  for (int s = 0; s < cfg.sites; ++s) {
    site_latent[static_cast<std::size_t>(s)] = cfg.site_offset_sd * Eigen::Vector2d(gauss(rng), gauss(rng));
    site_nuisance[static_cast<std::size_t>(s)] = cfg.site_offset_sd * gauss(rng);
  }

  ManualTrainingSet set;
  set.spectra.grid = wavelength_grid(cfg);
  set.spectra.origin = Origin::Manual;
  const int n = cfg.train_normal + cfg.train_metastatic + cfg.train_nonnodal;
  set.spectra.rows.resize(n, cfg.p);
  int row = 0;
  auto emit = [&](Component c, int count) {
    for (int i = 0; i < count; ++i, ++row) {
      const int s = row % cfg.sites;
      // Each manual measurement comes from its own node, so it carries its own node offset.
      Vector nuisance = Vector::Zero(cfg.nuisance_dims);
      if (cfg.nuisance_dims > 0)
        nuisance(0) = site_nuisance[static_cast<std::size_t>(s)] + cfg.node_offset_sd * gauss(rng);
      Eigen::Vector2d shift = site_latent[static_cast<std::size_t>(s)];
      if (c == Component::NonNodal) shift += cfg.nonnodal_shift_sd * Eigen::Vector2d(gauss(rng), gauss(rng));
      set.spectra.rows.row(row) = gen.spectrum(c, shift, nuisance, rng).transpose();
      set.labels.push_back(c);
      char id[16];
      std::snprintf(id, sizeof id, "site%02d", s);
      set.site_ids.emplace_back(id);
    }
  };
  emit(Component::Normal, cfg.train_normal);
  emit(Component::Metastatic, cfg.train_metastatic);
  emit(Component::NonNodal, cfg.train_nonnodal);
  return set;
}

std::vector<int> base_labels(const SynthConfig& cfg) {
  std::vector<int> labels(static_cast<std::size_t>(cfg.rows * cfg.cols));
  for (int r = 1; r <= cfg.rows; ++r)
    for (int c = 1; c <= cfg.cols; ++c) {
      const double d = priors::scaled_distance(r, c, cfg.rows, cfg.cols);
      labels[static_cast<std::size_t>(pixel_index(r, c, cfg.cols))] =
          static_cast<int>(d <= cfg.disc_radius ? Component::Normal : Component::NonNodal);
    }
  return labels;
}

namespace {

constexpr int kNormal = static_cast<int>(Component::Normal);
constexpr int kMetastatic = static_cast<int>(Component::Metastatic);
// Blob seeds lie within this fraction of the disc radius.
constexpr double kSeedRadius = 0.6;

template <typename F>
void for_neighbours(int pixel, int rows, int cols, int radius, F&& f) {
  const int r = pixel_row(pixel, cols), c = pixel_col(pixel, cols);
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const int rr = r + dr, cc = c + dc;
      if (rr < 1 || rr > rows || cc < 1 || cc > cols) continue;
      f(pixel_index(rr, cc, cols));
    }
}

bool place_rectangle(std::vector<int>& labels, const SynthConfig& cfg, int w, int h, Rng& rng) {
  std::vector<int> origins;
  for (int r = 1; r + h - 1 <= cfg.rows; ++r)
    for (int c = 1; c + w - 1 <= cfg.cols; ++c) {
      bool ok = true;
      for (int dr = 0; dr < h && ok; ++dr)
        for (int dc = 0; dc < w && ok; ++dc)
          ok = labels[static_cast<std::size_t>(pixel_index(r + dr, c + dc, cfg.cols))] == kNormal;
      if (ok) origins.push_back(pixel_index(r, c, cfg.cols));
    }
  if (origins.empty()) return false;
  const int o = origins[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(origins.size()) - 1))];
  const int r0 = pixel_row(o, cfg.cols), c0 = pixel_col(o, cfg.cols);
  for (int dr = 0; dr < h; ++dr)
    for (int dc = 0; dc < w; ++dc) labels[static_cast<std::size_t>(pixel_index(r0 + dr, c0 + dc, cfg.cols))] = kMetastatic;
  return true;
}

// Grows a compact blob from a seed in the inner part of the nodal disc;
// frontier pixels with more blob neighbours are much more likely to join.
bool grow_blob(std::vector<int>& labels, const SynthConfig& cfg, int size, Rng& rng) {
  std::vector<int> nodal;
  int available = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kNormal) continue;
    ++available;
    const int p = static_cast<int>(i);
    if (priors::scaled_distance(pixel_row(p, cfg.cols), pixel_col(p, cfg.cols), cfg.rows, cfg.cols) <=
        kSeedRadius * cfg.disc_radius)
      nodal.push_back(p);
  }
  if (available < size || nodal.empty()) return false;
  for (int attempt = 0; attempt < 50; ++attempt) {
    std::vector<int> trial = labels;
    int seed = nodal[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(nodal.size()) - 1))];
    trial[static_cast<std::size_t>(seed)] = kMetastatic;
    int grown = 1;
    while (grown < size) {
      std::vector<int> frontier;
      std::vector<double> weight;
      for (std::size_t i = 0; i < trial.size(); ++i) {
        if (trial[i] != kNormal) continue;
        int touching = 0;
        for_neighbours(static_cast<int>(i), cfg.rows, cfg.cols, 1, [&](int q) {
          if (trial[static_cast<std::size_t>(q)] == kMetastatic && labels[static_cast<std::size_t>(q)] != kMetastatic)
            ++touching;
        });
        if (touching > 0) {
          frontier.push_back(static_cast<int>(i));
          weight.push_back(std::pow(static_cast<double>(touching), 4));
        }
      }
      if (frontier.empty()) break;
      double total = 0;
      for (double w : weight) total += w;
      double pick = boost::random::uniform_real_distribution<double>(0.0, total)(rng);
      std::size_t k = 0;
      while (k + 1 < frontier.size() && pick >= weight[k]) pick -= weight[k++];
      trial[static_cast<std::size_t>(frontier[k])] = kMetastatic;
      ++grown;
    }
    if (grown == size) {
      labels = std::move(trial);
      return true;
    }
  }
  return false;
}

std::vector<int> place_isolated(const std::vector<int>& labels, const SynthConfig& cfg, int count, Rng& rng) {
  std::vector<int> chosen;
  std::vector<char> blocked(labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == kMetastatic)
      for_neighbours(static_cast<int>(i), cfg.rows, cfg.cols, 2, [&](int q) { blocked[static_cast<std::size_t>(q)] = 1; });
  for (int n = 0; n < count; ++n) {
    std::vector<int> candidates;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != kNormal || blocked[i]) continue;
      bool interior = true;
      int neighbours = 0;
      for_neighbours(static_cast<int>(i), cfg.rows, cfg.cols, 1, [&](int q) {
        ++neighbours;
        interior = interior && labels[static_cast<std::size_t>(q)] == kNormal;
      });
      if (interior && neighbours == 8) candidates.push_back(static_cast<int>(i));
    }
    if (candidates.empty()) throw InputError("synth: no room for the requested isolated pixels");
    const int pick = candidates[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1))];
    chosen.push_back(pick);
    blocked[static_cast<std::size_t>(pick)] = 1;
    for_neighbours(pick, cfg.rows, cfg.cols, 2, [&](int q) { blocked[static_cast<std::size_t>(q)] = 1; });
  }
  return chosen;
}

}  // namespace

SynthNode gen_node(const SynthConfig& cfg, Verdict truth, const BlobSpec& blobs, std::uint64_t index) {
  const Generator gen(cfg);
  Rng rng(derive_seed(cfg.seed, kNodeStream, index));

  SynthNode out;
  out.truth_labels = base_labels(cfg);
  if (truth == Verdict::Metastatic) {
    if (blobs.count < 1) throw InputError("synth: a metastatic node needs at least one blob");
    for (int b = 0; b < blobs.count; ++b) {
      bool placed = false;
      if (blobs.rectangular) {
        if (blobs.width < 1 || blobs.height < 1) throw InputError("synth: rectangular blob needs width and height");
        placed = place_rectangle(out.truth_labels, cfg, blobs.width, blobs.height, rng);
      } else {
        if (blobs.min_size < 1 || blobs.max_size < blobs.min_size) throw InputError("synth: bad blob size range");
        placed = grow_blob(out.truth_labels, cfg, uniform_int(rng, blobs.min_size, blobs.max_size), rng);
      }
      if (!placed) throw InputError("synth: blob larger than nodal area");
    }
  }
  out.isolated = place_isolated(out.truth_labels, cfg, blobs.isolated, rng);

  std::vector<int> drawn = out.truth_labels;
  for (int i : out.isolated) drawn[static_cast<std::size_t>(i)] = kMetastatic;

  Vector node_nuisance = Vector::Zero(cfg.nuisance_dims);
  if (cfg.nuisance_dims > 0) node_nuisance(0) = cfg.node_offset_sd * gauss(rng);
  const Eigen::Vector2d nonnodal_shift = cfg.nonnodal_shift_sd * Eigen::Vector2d(gauss(rng), gauss(rng));

  auto& scan = out.scan;
  scan.rows = cfg.rows;
  scan.cols = cfg.cols;
  scan.truth = truth;
  char id[32];
  std::snprintf(id, sizeof id, "node%04llu", static_cast<unsigned long long>(index));
  scan.node_id = id;
  scan.spectra.grid = wavelength_grid(cfg);
  scan.spectra.origin = Origin::Scan;
  scan.spectra.rows.resize(cfg.rows * cfg.cols, cfg.p);
  for (int i = 0; i < cfg.rows * cfg.cols; ++i) {
    const auto c = static_cast<Component>(drawn[static_cast<std::size_t>(i)]);
    const Eigen::Vector2d shift = c == Component::NonNodal ? nonnodal_shift : Eigen::Vector2d::Zero();
    scan.spectra.rows.row(i) = gen.spectrum(c, shift, node_nuisance, rng).transpose();
  }
  return out;
}

void write_dataset(const SynthConfig& cfg, int normal_nodes, int metastatic_nodes, const BlobSpec& blobs,
                   const std::filesystem::path& dir) {
  if (normal_nodes < 0 || metastatic_nodes < 0) throw InputError("synth: negative node counts");
  std::filesystem::create_directories(dir / "nodes");
  std::filesystem::create_directories(dir / "truth");
  ingest::write_training(gen_training(cfg), dir / "train.csv");
  std::map<std::string, Verdict> manifest;
  // Alternate the classes so any prefix of the node list is roughly balanced.
  std::vector<Verdict> order;
  for (int n = normal_nodes, m = metastatic_nodes; n > 0 || m > 0;) {
    if (n-- > 0) order.push_back(Verdict::Normal);
    if (m-- > 0) order.push_back(Verdict::Metastatic);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Verdict v = order[i];
    const auto node = gen_node(cfg, v, blobs, static_cast<std::uint64_t>(i));
    ingest::write_node(node.scan, dir / "nodes" / (node.scan.node_id + ".csv"));
    ingest::write_label_grid(node.truth_labels, cfg.rows, cfg.cols, dir / "truth" / (node.scan.node_id + ".csv"));
    manifest[node.scan.node_id] = v;
  }
  ingest::write_manifest(manifest, dir / "manifest.csv");
}

}  // namespace nodemap::synth
