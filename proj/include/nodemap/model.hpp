#pragma once

#include "nodemap/config.hpp"
#include "nodemap/dimred.hpp"

#include <filesystem>
#include <optional>
#include <span>

namespace nodemap {

// Everything learned from the manual training spectra. Class moments are kept
// in (preprocessed) wavelength space: the internal axes are node-specific, so
// reduced-space priors are derived per node by projecting these moments.
struct Model {
  WavelengthGrid grid;  // working grid after preprocessing
  preprocess::PreprocessConfig preprocess;
  int k_ext = 0;
  std::vector<int> k_ext_candidates;
  std::vector<double> cv_accuracy;
  Vector train_mean;
  Vector q_ext;
  dimred::Moments normal;
  dimred::Moments metastatic;
  std::optional<dimred::Moments> nonnodal;          // wavelength space
  std::optional<dimred::Moments> nonnodal_reduced;  // explicit reduced-space block, used as given
};

// Preprocesses the spectra, fits the external variable (optionally choosing
// k_ext by leave-one-site-out CV) and collects the class moments. Non-nodal
// rows may come from `train` itself or from `nonnodal`.
Model train_model(const ManualTrainingSet& train, const ManualTrainingSet* nonnodal, const RunConfig& cfg,
                  std::span<const int> k_ext_candidates = {});

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text, const std::string& source = "<model>");

// Prior moments of the three components in the reduced space of `basis`.
dimred::PriorMoments nodal_moments(const Model& model, const dimred::ReductionBasis& basis);
dimred::Moments nonnodal_moments(const Model& model, const dimred::ReductionBasis& basis);

}  // namespace nodemap
