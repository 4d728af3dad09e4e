#include "opgeom/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "opgeom/error.hpp"

namespace opgeom {

// ---------------------------------------------------------------------------
// FeatureCloud / LabelVector
// ---------------------------------------------------------------------------

FeatureCloud::FeatureCloud(Matrix points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1) {
    throw InvalidArgument("feature cloud needs n >= 1 and d >= 1");
  }
  if (!points_.allFinite()) {
    throw InvalidArgument("non-finite feature");
  }
}

LabelVector::LabelVector(std::vector<int> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw InvalidArgument("label vector is empty");
  int max_label = -1;
  for (int y : labels_) {
    if (y < 0) throw InvalidArgument("negative label " + std::to_string(y));
    max_label = std::max(max_label, y);
  }
  num_classes_ = max_label + 1;
}

LabelVector::LabelVector(std::vector<int> labels, int num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
  if (labels_.empty()) throw InvalidArgument("label vector is empty");
  if (num_classes_ < 1) throw InvalidArgument("number of classes must be >= 1");
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) {
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
}

std::vector<Index> LabelVector::class_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes_), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void LabelVector::require_all_classes_present() const {
  const auto counts = class_counts();
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (counts[a] == 0) throw InvalidArgument("empty class " + std::to_string(a));
  }
}

void LabelVector::require_size(Index n) const {
  if (static_cast<Index>(labels_.size()) != n) {
    throw InvalidArgument("label count " + std::to_string(labels_.size()) + " does not match point count " +
                          std::to_string(n));
  }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  std::size_t lo = 0;
  std::size_t hi = s.size();
  while (lo < hi && is_space(s[lo])) ++lo;
  while (hi > lo && is_space(s[hi - 1])) --hi;
  std::string out(s.substr(lo, hi - lo));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  if (first == last) return false;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!is_blank(line)) lines.push_back(line);
  }
  if (!lines.empty() && lines.front().rfind("\xEF\xBB\xBF", 0) == 0) lines.front().erase(0, 3);
  return lines;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

Snapshot load_snapshot_csv(const std::filesystem::path& path, const LabelColumn& label_column) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw IoError("empty file: " + path.string());

  const auto header = split_row(lines.front());
  std::size_t label_index = 0;
  if (const auto* name = std::get_if<std::string>(&label_column)) {
    auto it = std::find(header.begin(), header.end(), *name);
    if (it == header.end()) throw IoError("label column '" + *name + "' not found in " + path.string());
    label_index = static_cast<std::size_t>(it - header.begin());
  } else {
    label_index = std::get<std::size_t>(label_column);
    if (label_index >= header.size()) throw IoError("label column index out of range in " + path.string());
  }
  if (header.size() < 2) throw IoError("snapshot needs at least one feature column and a label column");
  if (lines.size() < 2) throw IoError("empty file: no data rows in " + path.string());

  const std::size_t n = lines.size() - 1;
  const std::size_t d = header.size() - 1;
  Matrix points(static_cast<Index>(n), static_cast<Index>(d));
  std::vector<int> labels(n);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_index) names.push_back(header[c]);
  }

  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = split_row(lines[r + 1]);
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    if (cells.size() != header.size()) {
      throw IoError("row has " + std::to_string(cells.size()) + " cells, header has " +
                    std::to_string(header.size()) + " (" + where + ")");
    }
    Index col = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double value = 0.0;
      if (!parse_double(cells[c], value)) {
        throw IoError((c == label_index ? "non-numeric label '" : "non-numeric feature '") + cells[c] + "' (" +
                      where + ")");
      }
      if (c == label_index) {
        if (!std::isfinite(value) || value < 0.0 || value != std::floor(value) ||
            value > static_cast<double>(std::numeric_limits<int>::max())) {
          throw IoError("label must be a nonnegative integer, got '" + cells[c] + "' (" + where + ")");
        }
        labels[r] = static_cast<int>(value);
      } else {
        if (!std::isfinite(value)) throw IoError("non-finite feature '" + cells[c] + "' (" + where + ")");
        points(static_cast<Index>(r), col++) = value;
      }
    }
  }
  return Snapshot{FeatureCloud(std::move(points)), LabelVector(std::move(labels)), std::move(names)};
}

void write_snapshot_csv(const FeatureCloud& cloud, const LabelVector& labels, const std::filesystem::path& path,
                        const std::vector<std::string>& feature_names) {
  labels.require_size(cloud.size());
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != cloud.dim()) {
    throw InvalidArgument("feature name count does not match dimension");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path.string());
  for (Index c = 0; c < cloud.dim(); ++c) {
    out << (feature_names.empty() ? "f" + std::to_string(c) : feature_names[static_cast<std::size_t>(c)]) << ',';
  }
  out << "label\n";
  for (Index i = 0; i < cloud.size(); ++i) {
    for (Index c = 0; c < cloud.dim(); ++c) out << format_double(cloud.points()(i, c)) << ',';
    out << labels[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw IoError("empty file: " + path.string());

  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto cells = split_row(lines[r]);
    std::vector<double> values(cells.size());
    bool ok = true;
    for (std::size_t c = 0; c < cells.size() && ok; ++c) ok = parse_double(cells[c], values[c]);
    if (!ok) {
      if (r == 0) continue;  // header
      throw IoError("non-numeric cell at " + path.string() + ":" + std::to_string(r + 1));
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw IoError("ragged matrix at " + path.string() + ":" + std::to_string(r + 1));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw IoError("no numeric rows in " + path.string());

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (!std::isfinite(rows[r][c])) throw IoError("non-finite value in " + path.string());
      m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Report JSON
// ---------------------------------------------------------------------------

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw IoError("expected a nested array for a matrix");
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows == 0 ? Index{0} : static_cast<Index>(j.front().size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw IoError("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw IoError("expected an array for a vector");
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

void ObservableReport::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("invalid observable report: " + what); };
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) fail("bandwidth must be positive");
  const Index k = separation_matrix.rows();
  if (separation_matrix.cols() != k || coarse_chain.rows() != k || coarse_chain.cols() != k) fail("shape mismatch");
  if (k != num_classes) fail("num_classes does not match matrix shape");
  for (Index a = 0; a < k; ++a) {
    if (separation_matrix(a, a) != 0.0) fail("separation diagonal must be zero");
    for (Index b = 0; b < k; ++b) {
      if (separation_matrix(a, b) != separation_matrix(b, a)) fail("separation matrix must be symmetric");
      if (separation_matrix(a, b) < 0.0) fail("separation entries must be nonnegative");
    }
  }
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(leakage_stationary) || !unit(leakage_raw)) fail("leakage outside [0,1]");
  if (!(soft_radius_rms >= 0.0) || !(label_boundary_energy >= 0.0) || !(mean_separation >= 0.0)) {
    fail("negative nonnegative field");
  }
  if (!std::isfinite(coarse_gap) || !std::isfinite(soft_radius_rms) || !std::isfinite(label_boundary_energy) ||
      !std::isfinite(mean_separation) || !coarse_chain.allFinite() || !separation_matrix.allFinite()) {
    fail("non-finite field");
  }
}

bool ObservableReport::operator==(const ObservableReport& o) const {
  auto same = [](const auto& x, const auto& y) { return x.rows() == y.rows() && x.cols() == y.cols() && x == y; };
  return bandwidth == o.bandwidth && num_points == o.num_points && num_classes == o.num_classes &&
         mean_separation == o.mean_separation && same(separation_matrix, o.separation_matrix) &&
         leakage_stationary == o.leakage_stationary && leakage_raw == o.leakage_raw && coarse_gap == o.coarse_gap &&
         label_boundary_energy == o.label_boundary_energy && soft_radius_rms == o.soft_radius_rms &&
         same(coarse_chain, o.coarse_chain) && same(stationary_distribution, o.stationary_distribution);
}

nlohmann::json to_json(const ObservableReport& r) {
  nlohmann::json j;
  j["bandwidth"] = r.bandwidth;
  j["num_points"] = r.num_points;
  j["num_classes"] = r.num_classes;
  j["mean_separation"] = r.mean_separation;
  j["separation_matrix"] = matrix_to_json(r.separation_matrix);
  j["leakage_stationary"] = r.leakage_stationary;
  j["leakage_raw"] = r.leakage_raw;
  j["coarse_gap"] = r.coarse_gap;
  j["label_boundary_energy"] = r.label_boundary_energy;
  j["soft_radius_rms"] = r.soft_radius_rms;
  j["coarse_chain"] = matrix_to_json(r.coarse_chain);
  j["stationary_distribution"] = vector_to_json(r.stationary_distribution);
  return j;
}

ObservableReport report_from_json(const nlohmann::json& j) {
  try {
    ObservableReport r;
    r.bandwidth = j.at("bandwidth").get<double>();
    r.num_points = j.at("num_points").get<Index>();
    r.num_classes = j.at("num_classes").get<int>();
    r.mean_separation = j.at("mean_separation").get<double>();
    r.separation_matrix = matrix_from_json(j.at("separation_matrix"));
    r.leakage_stationary = j.at("leakage_stationary").get<double>();
    r.leakage_raw = j.at("leakage_raw").get<double>();
    r.coarse_gap = j.at("coarse_gap").get<double>();
    r.label_boundary_energy = j.at("label_boundary_energy").get<double>();
    r.soft_radius_rms = j.at("soft_radius_rms").get<double>();
    r.coarse_chain = matrix_from_json(j.at("coarse_chain"));
    r.stationary_distribution = vector_from_json(j.at("stationary_distribution"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report JSON: ") + e.what());
  }
}

void write_report_json(const ObservableReport& report, std::ostream& out, const nlohmann::json& metadata) {
  report.validate();
  nlohmann::json j = to_json(report);
  if (!metadata.is_null()) j["metadata"] = metadata;
  out << j.dump(2) << '\n';
}

void write_report_json(const ObservableReport& report, const std::filesystem::path& path,
                       const nlohmann::json& metadata) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path.string());
  write_report_json(report, out, metadata);
  if (!out) throw IoError("write failed: " + path.string());
}

ObservableReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace opgeom
