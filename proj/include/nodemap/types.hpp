#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nodemap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Malformed or inconsistent input (files, configs, preconditions).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure could not produce a valid result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mixture components. The integer values are the on-disk label codes.
enum class Component : int { Normal = 1, Metastatic = 2, NonNodal = 3 };

inline constexpr int kComponents = 3;

constexpr int index_of(Component c) { return static_cast<int>(c) - 1; }
constexpr Component component_at(int index) { return static_cast<Component>(index + 1); }

std::string_view to_string(Component c);
Component component_from_string(std::string_view token);

enum class Verdict { Normal, Metastatic };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view token);

enum class Origin { Manual, Scan };

struct WavelengthGrid {
  std::vector<double> points;

  std::size_t size() const { return points.size(); }
  bool operator==(const WavelengthGrid&) const = default;
};

// Throws InputError unless the grid is strictly increasing with >= 3 points.
void validate_grid(const WavelengthGrid& grid);

struct SpectralMatrix {
  WavelengthGrid grid;
  Matrix rows;  // count x p
  Origin origin = Origin::Manual;

  Eigen::Index count() const { return rows.rows(); }
};

void validate_spectra(const SpectralMatrix& spectra);

struct ManualTrainingSet {
  SpectralMatrix spectra;
  std::vector<Component> labels;
  std::vector<std::string> site_ids;

  std::size_t count_of(Component c) const;
};

struct NodeScan {
  SpectralMatrix spectra;
  int rows = 20;
  int cols = 20;
  std::string node_id;
  std::optional<Verdict> truth;

  int pixels() const { return rows * cols; }
};

// Final per-pixel labelling of one node. labels hold component codes 1..3.
struct ClassifiedNode {
  std::string node_id;
  int rows = 0;
  int cols = 0;
  std::vector<int> labels;
  std::vector<double> met_posterior;
  Verdict verdict = Verdict::Normal;
  double score = 0.0;
  std::optional<Verdict> truth;
};

// Row-major pixel indexing; r and c are 1-based.
constexpr int pixel_index(int r, int c, int cols) { return (r - 1) * cols + (c - 1); }
constexpr int pixel_row(int index, int cols) { return index / cols + 1; }
constexpr int pixel_col(int index, int cols) { return index % cols + 1; }

}  // namespace nodemap
