#include "nodemap/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nodemap::preprocess {

void validate(const PreprocessConfig& cfg) {
  if (cfg.sg_window < 3 || cfg.sg_window % 2 == 0) throw InputError("sg_window must be an odd integer >= 3");
  if (cfg.sg_order < 0 || cfg.sg_order >= cfg.sg_window) throw InputError("sg_order must satisfy 0 <= sg_order < sg_window");
  if (!(cfg.crop_lo < cfg.crop_hi)) throw InputError("crop_lo must be below crop_hi");
}

namespace {

// Weights that evaluate the least-squares polynomial of the given order at
// offset `at` (relative to the window start) from the window's samples.
Eigen::RowVectorXd fit_weights(int window, int order, int at) {
  Matrix vandermonde(window, order + 1);
  for (int i = 0; i < window; ++i) {
    const double x = static_cast<double>(i - at);
    double power = 1.0;
    for (int d = 0; d <= order; ++d) {
      vandermonde(i, d) = power;
      power *= x;
    }
  }
  // With offsets centred on the evaluation point, the fitted value is the
  // intercept: row 0 of the pseudo-inverse.
  const Matrix pinv = vandermonde.colPivHouseholderQr().solve(Matrix::Identity(window, window));
  return pinv.row(0);
}

}  // namespace

std::vector<double> savitzky_golay(std::span<const double> spectrum, const PreprocessConfig& cfg) {
  validate(cfg);
  const int n = static_cast<int>(spectrum.size());
  const int w = cfg.sg_window;
  if (n < w) throw InputError("sequence shorter than Savitzky-Golay window");
  const int half = w / 2;

  std::vector<Eigen::RowVectorXd> weights(static_cast<std::size_t>(w));
  for (int at = 0; at < w; ++at) weights[static_cast<std::size_t>(at)] = fit_weights(w, cfg.sg_order, at);

  std::vector<double> out(spectrum.size());
  for (int i = 0; i < n; ++i) {
    const int start = std::clamp(i - half, 0, n - w);
    const auto& wt = weights[static_cast<std::size_t>(i - start)];
    double acc = 0.0;
    for (int t = 0; t < w; ++t) acc += wt(t) * spectrum[static_cast<std::size_t>(start + t)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

SpectralMatrix crop(const SpectralMatrix& spectra, const PreprocessConfig& cfg) {
  if (!(cfg.crop_lo < cfg.crop_hi)) throw InputError("crop_lo must be below crop_hi");
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < spectra.grid.size(); ++i) {
    const double w = spectra.grid.points[i];
    if (w >= cfg.crop_lo && w <= cfg.crop_hi) keep.push_back(static_cast<Eigen::Index>(i));
  }
  if (keep.size() < 3) throw InputError("crop leaves fewer than 3 wavelengths");
  SpectralMatrix out;
  out.origin = spectra.origin;
  out.rows.resize(spectra.rows.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.grid.points.push_back(spectra.grid.points[static_cast<std::size_t>(keep[j])]);
    out.rows.col(static_cast<Eigen::Index>(j)) = spectra.rows.col(keep[j]);
  }
  return out;
}

std::vector<double> snv(std::span<const double> spectrum) {
  const auto n = spectrum.size();
  if (n < 2) throw InputError("zero variance");
  const double mean = std::accumulate(spectrum.begin(), spectrum.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : spectrum) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  double scale = 0.0;
  for (double v : spectrum) scale = std::max(scale, std::abs(v));
  if (!(sd > 1e-13 * scale) || sd <= 1e-300) throw InputError("zero variance");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (spectrum[i] - mean) / sd;
  // One centring pass on the result removes the rounding left in the mean.
  const double residual = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(n);
  for (double& v : out) v -= residual;
  return out;
}

SpectralMatrix apply(const SpectralMatrix& spectra, const PreprocessConfig& cfg) {
  validate(cfg);
  validate_spectra(spectra);
  SpectralMatrix smoothed = spectra;
  std::vector<double> row(spectra.grid.size());
  for (Eigen::Index r = 0; r < spectra.count(); ++r) {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = spectra.rows(r, static_cast<Eigen::Index>(c));
    const auto s = savitzky_golay(row, cfg);
    for (std::size_t c = 0; c < row.size(); ++c) smoothed.rows(r, static_cast<Eigen::Index>(c)) = s[c];
  }
  SpectralMatrix out = crop(smoothed, cfg);
  std::vector<double> cropped(out.grid.size());
  for (Eigen::Index r = 0; r < out.count(); ++r) {
    for (std::size_t c = 0; c < cropped.size(); ++c) cropped[c] = out.rows(r, static_cast<Eigen::Index>(c));
    const auto s = snv(cropped);
    for (std::size_t c = 0; c < cropped.size(); ++c) out.rows(r, static_cast<Eigen::Index>(c)) = s[c];
  }
  return out;
}

}  // namespace nodemap::preprocess
