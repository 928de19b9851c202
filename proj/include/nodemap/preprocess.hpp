#pragma once

#include "nodemap/types.hpp"

#include <span>

namespace nodemap::preprocess {

struct PreprocessConfig {
  int sg_window = 7;
  int sg_order = 2;
  double crop_lo = 400.0;
  double crop_hi = 800.0;
};

void validate(const PreprocessConfig& cfg);

// Savitzky-Golay smoothing. Near the ends the fitting window is shifted
// inward rather than truncated, so the output keeps the input length.
std::vector<double> savitzky_golay(std::span<const double> spectrum, const PreprocessConfig& cfg);

// Keeps the columns with crop_lo <= w <= crop_hi.
SpectralMatrix crop(const SpectralMatrix& spectra, const PreprocessConfig& cfg);

// Standard normal variate: subtract the mean, divide by the n-1 standard deviation.
std::vector<double> snv(std::span<const double> spectrum);

// smooth -> crop -> SNV applied to every row.
SpectralMatrix apply(const SpectralMatrix& spectra, const PreprocessConfig& cfg);

}  // namespace nodemap::preprocess
