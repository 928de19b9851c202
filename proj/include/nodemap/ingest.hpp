#pragma once

#include "nodemap/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>

namespace nodemap::ingest {

// Training CSV:
//   # wavelengths: w1,w2,...,wp
//   label,site_id,v1,...,vp
// label is one of normal, metastatic, nonnodal (n, c and b are accepted as
// short forms). Blank lines and further '#' lines are ignored.
ManualTrainingSet read_training(const std::filesystem::path& path);
ManualTrainingSet parse_training(std::istream& in, const std::string& source = "<stream>");

// Like parse_training, but does not require both nodal classes. Used for
// files that carry only non-nodal spectra.
ManualTrainingSet parse_labelled(std::istream& in, const std::string& source = "<stream>");
ManualTrainingSet read_labelled(const std::filesystem::path& path);

void write_training(const ManualTrainingSet& set, const std::filesystem::path& path);
void write_training(const ManualTrainingSet& set, std::ostream& out);

// Node CSV:
//   # grid: R C
//   # wavelengths: w1,...,wp
//   [# node_id: name]      optional, defaults to the file stem
//   [# truth: normal|metastatic]  optional
//   R*C rows of p values, row-major from the top-left pixel.
NodeScan read_node(const std::filesystem::path& path);
NodeScan parse_node(std::istream& in, const std::string& default_id, const std::string& source = "<stream>");

void write_node(const NodeScan& node, const std::filesystem::path& path);
void write_node(const NodeScan& node, std::ostream& out);

// Result JSON: node_id, verdict, labels, met_posterior, score, rows, cols.
void write_result(const ClassifiedNode& node, const std::filesystem::path& path);
ClassifiedNode read_result(const std::filesystem::path& path);

// Per-pixel ground truth written by the synthetic generator, R rows of C codes.
void write_label_grid(const std::vector<int>& labels, int rows, int cols, const std::filesystem::path& path);
std::vector<int> read_label_grid(const std::filesystem::path& path, int& rows, int& cols);

// Truth manifest CSV: "node_id,truth" with truth in {normal, metastatic}.
std::map<std::string, Verdict> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::map<std::string, Verdict>& manifest, const std::filesystem::path& path);

// Writes via a sibling temporary file and rename, so readers never observe a
// partially written file.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

// Shortest representation that parses back to the identical double.
std::string format_double(double value);

}  // namespace nodemap::ingest
