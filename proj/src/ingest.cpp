#include "nodemap/ingest.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace nodemap {

std::string_view to_string(Component c) {
  switch (c) {
    case Component::Normal: return "normal";
    case Component::Metastatic: return "metastatic";
    case Component::NonNodal: return "nonnodal";
  }
  return "unknown";
}

Component component_from_string(std::string_view token) {
  if (token == "normal" || token == "n") return Component::Normal;
  if (token == "metastatic" || token == "c") return Component::Metastatic;
  if (token == "nonnodal" || token == "b") return Component::NonNodal;
  throw InputError("unknown label token '" + std::string(token) + "'");
}

std::string_view to_string(Verdict v) { return v == Verdict::Metastatic ? "metastatic" : "normal"; }

Verdict verdict_from_string(std::string_view token) {
  if (token == "normal") return Verdict::Normal;
  if (token == "metastatic") return Verdict::Metastatic;
  throw InputError("unknown verdict '" + std::string(token) + "'");
}

void validate_grid(const WavelengthGrid& grid) {
  if (grid.size() < 3) throw InputError("wavelength grid needs at least 3 points");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid.points[i] > grid.points[i - 1])) throw InputError("non-increasing wavelengths");
  }
}

void validate_spectra(const SpectralMatrix& spectra) {
  validate_grid(spectra.grid);
  if (static_cast<std::size_t>(spectra.rows.cols()) != spectra.grid.size())
    throw InputError("row length mismatch");
  if (!spectra.rows.allFinite()) throw InputError("non-finite value in spectra");
}

std::size_t ManualTrainingSet::count_of(Component c) const {
  std::size_t n = 0;
  for (auto l : labels) n += (l == c);
  return n;
}

namespace ingest {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

double parse_double(std::string_view token, const std::string& context) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  if (!token.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || token.empty())
    throw InputError(context + "malformed number '" + std::string(token) + "'");
  if (!std::isfinite(value)) throw InputError(context + "non-finite value");
  return value;
}

// Returns the value part of a "# key: value" header line, if it matches.
std::optional<std::string_view> header_value(std::string_view line, std::string_view key) {
  line = trim(line);
  if (line.empty() || line.front() != '#') return std::nullopt;
  line = trim(line.substr(1));
  if (line.substr(0, key.size()) != key) return std::nullopt;
  line = trim(line.substr(key.size()));
  if (line.empty() || line.front() != ':') return std::nullopt;
  return trim(line.substr(1));
}

WavelengthGrid parse_grid(std::string_view values, const std::string& context) {
  WavelengthGrid grid;
  for (auto tok : split(values, ',')) grid.points.push_back(parse_double(tok, context));
  try {
    validate_grid(grid);
  } catch (const InputError& e) {
    throw InputError(context + e.what());
  }
  return grid;
}

ManualTrainingSet parse_rows(std::istream& in, const std::string& source) {
  ManualTrainingSet set;
  set.spectra.origin = Origin::Manual;
  std::optional<WavelengthGrid> grid;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (auto v = header_value(t, "wavelengths")) grid = parse_grid(*v, where(source, lineno));
      continue;
    }
    const auto ctx = where(source, lineno);
    if (!grid) throw InputError(ctx + "data row before '# wavelengths:' header");
    const auto fields = split(t, ',');
    if (fields.size() != grid->size() + 2) throw InputError(ctx + "row length mismatch");
    try {
      set.labels.push_back(component_from_string(fields[0]));
    } catch (const InputError& e) {
      throw InputError(ctx + e.what());
    }
    if (fields[1].empty()) throw InputError(ctx + "empty site id");
    set.site_ids.emplace_back(fields[1]);
    std::vector<double> values;
    values.reserve(grid->size());
    for (std::size_t i = 2; i < fields.size(); ++i) values.push_back(parse_double(fields[i], ctx));
    rows.push_back(std::move(values));
  }
  if (!grid) throw InputError(source + ": missing '# wavelengths:' header");
  set.spectra.grid = *grid;
  set.spectra.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(grid->size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < grid->size(); ++c) set.spectra.rows(r, c) = rows[r][c];
  return set;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::string join_values(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::string out;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += format_double(row(i));
  }
  return out;
}

std::string grid_line(const WavelengthGrid& grid) {
  std::string out = "# wavelengths: ";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) out += ',';
    out += format_double(grid.points[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << contents;
    out.flush();
    if (!out) throw InputError("cannot write " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw InputError("cannot write " + path.string());
  }
}

ManualTrainingSet parse_labelled(std::istream& in, const std::string& source) { return parse_rows(in, source); }

ManualTrainingSet read_labelled(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_rows(in, path.string());
}

ManualTrainingSet parse_training(std::istream& in, const std::string& source) {
  auto set = parse_rows(in, source);
  if (set.count_of(Component::Normal) == 0 || set.count_of(Component::Metastatic) == 0)
    throw InputError(source + ": single-class file (both normal and metastatic rows are required)");
  return set;
}

ManualTrainingSet read_training(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_training(in, path.string());
}

void write_training(const ManualTrainingSet& set, std::ostream& out) {
  out << grid_line(set.spectra.grid) << '\n';
  for (Eigen::Index r = 0; r < set.spectra.count(); ++r) {
    out << to_string(set.labels[r]) << ',' << set.site_ids[r] << ',' << join_values(set.spectra.rows.row(r)) << '\n';
  }
}

void write_training(const ManualTrainingSet& set, const std::filesystem::path& path) {
  std::ostringstream out;
  write_training(set, out);
  write_atomic(path, out.str());
}

NodeScan parse_node(std::istream& in, const std::string& default_id, const std::string& source) {
  NodeScan node;
  node.node_id = default_id;
  node.spectra.origin = Origin::Scan;
  std::optional<std::pair<int, int>> dims;
  std::optional<WavelengthGrid> grid;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto ctx = where(source, lineno);
    if (t.front() == '#') {
      if (auto v = header_value(t, "grid")) {
        std::istringstream ss{std::string(*v)};
        int r = 0, c = 0;
        if (!(ss >> r >> c) || r <= 0 || c <= 0) throw InputError(ctx + "malformed grid header");
        dims = {r, c};
      } else if (auto w = header_value(t, "wavelengths")) {
        grid = parse_grid(*w, ctx);
      } else if (auto id = header_value(t, "node_id")) {
        node.node_id = std::string(*id);
      } else if (auto tr = header_value(t, "truth")) {
        try {
          node.truth = verdict_from_string(*tr);
        } catch (const InputError& e) {
          throw InputError(ctx + e.what());
        }
      }
      continue;
    }
    if (!dims || !grid) throw InputError(ctx + "data row before '# grid:' and '# wavelengths:' headers");
    const auto fields = split(t, ',');
    if (fields.size() != grid->size()) throw InputError(ctx + "row length mismatch");
    std::vector<double> values;
    values.reserve(fields.size());
    for (auto f : fields) values.push_back(parse_double(f, ctx));
    rows.push_back(std::move(values));
  }
  if (!dims) throw InputError(source + ": missing '# grid: R C' header");
  if (!grid) throw InputError(source + ": missing '# wavelengths:' header");
  node.rows = dims->first;
  node.cols = dims->second;
  const auto expected = static_cast<std::size_t>(node.rows) * static_cast<std::size_t>(node.cols);
  if (rows.size() != expected)
    throw InputError(source + ": expected " + std::to_string(expected) + " rows, found " + std::to_string(rows.size()));
  node.spectra.grid = *grid;
  node.spectra.rows.resize(static_cast<Eigen::Index>(expected), static_cast<Eigen::Index>(grid->size()));
  for (std::size_t r = 0; r < expected; ++r)
    for (std::size_t c = 0; c < grid->size(); ++c) node.spectra.rows(r, c) = rows[r][c];
  return node;
}

NodeScan read_node(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_node(in, path.stem().string(), path.string());
}

void write_node(const NodeScan& node, std::ostream& out) {
  out << "# grid: " << node.rows << ' ' << node.cols << '\n';
  out << grid_line(node.spectra.grid) << '\n';
  out << "# node_id: " << node.node_id << '\n';
  if (node.truth) out << "# truth: " << to_string(*node.truth) << '\n';
  for (Eigen::Index r = 0; r < node.spectra.count(); ++r) out << join_values(node.spectra.rows.row(r)) << '\n';
}

void write_node(const NodeScan& node, const std::filesystem::path& path) {
  std::ostringstream out;
  write_node(node, out);
  write_atomic(path, out.str());
}

void write_result(const ClassifiedNode& node, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["node_id"] = node.node_id;
  j["verdict"] = std::string(to_string(node.verdict));
  j["rows"] = node.rows;
  j["cols"] = node.cols;
  j["labels"] = node.labels;
  j["met_posterior"] = node.met_posterior;
  j["score"] = node.score;
  if (node.truth) j["truth"] = std::string(to_string(*node.truth));
  write_atomic(path, j.dump(1) + "\n");
}

ClassifiedNode read_result(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    in >> j;
    ClassifiedNode node;
    node.node_id = j.at("node_id").get<std::string>();
    node.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    node.labels = j.at("labels").get<std::vector<int>>();
    node.met_posterior = j.at("met_posterior").get<std::vector<double>>();
    node.rows = j.value("rows", 0);
    node.cols = j.value("cols", 0);
    node.score = j.value("score", 0.0);
    if (j.contains("truth")) node.truth = verdict_from_string(j.at("truth").get<std::string>());
    if (node.labels.size() != node.met_posterior.size())
      throw InputError("labels and met_posterior lengths differ");
    for (int l : node.labels)
      if (l < 1 || l > kComponents) throw InputError("label outside {1,2,3}");
    return node;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_label_grid(const std::vector<int>& labels, int rows, int cols, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# grid: " << rows << ' ' << cols << '\n';
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << labels[static_cast<std::size_t>(r * cols + c)];
    }
    out << '\n';
  }
  write_atomic(path, out.str());
}

std::vector<int> read_label_grid(const std::filesystem::path& path, int& rows, int& cols) {
  auto in = open_input(path);
  std::vector<int> labels;
  std::string line;
  rows = cols = 0;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (auto v = header_value(t, "grid")) {
      std::istringstream ss{std::string(*v)};
      ss >> rows >> cols;
      continue;
    }
    for (auto f : split(t, ',')) labels.push_back(static_cast<int>(parse_double(f, path.string() + ": ")));
  }
  if (rows <= 0 || cols <= 0 || labels.size() != static_cast<std::size_t>(rows * cols))
    throw InputError(path.string() + ": malformed label grid");
  return labels;
}

std::map<std::string, Verdict> read_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::map<std::string, Verdict> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = split(t, ',');
    if (fields.size() != 2) throw InputError(where(path.string(), lineno) + "expected 'node_id,truth'");
    if (fields[0] == "node_id") continue;
    try {
      out[std::string(fields[0])] = verdict_from_string(fields[1]);
    } catch (const InputError& e) {
      throw InputError(where(path.string(), lineno) + e.what());
    }
  }
  return out;
}

void write_manifest(const std::map<std::string, Verdict>& manifest, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "node_id,truth\n";
  for (const auto& [id, truth] : manifest) out << id << ',' << to_string(truth) << '\n';
  write_atomic(path, out.str());
}

}  // namespace ingest
}  // namespace nodemap
