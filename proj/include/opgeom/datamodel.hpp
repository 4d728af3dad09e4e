#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace opgeom {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// n x d matrix of representation-snapshot points, one point per row.
/// Construction rejects empty shapes and non-finite entries.
class FeatureCloud {
 public:
  explicit FeatureCloud(Matrix points);

  const Matrix& points() const noexcept { return points_; }
  Index size() const noexcept { return points_.rows(); }
  Index dim() const noexcept { return points_.cols(); }
  auto point(Index i) const { return points_.row(i); }

  bool operator==(const FeatureCloud& other) const { return points_ == other.points_; }

 private:
  Matrix points_;
};

/// Class index per point. The number of classes defaults to 1 + max label.
class LabelVector {
 public:
  explicit LabelVector(std::vector<int> labels);
  LabelVector(std::vector<int> labels, int num_classes);

  std::size_t size() const noexcept { return labels_.size(); }
  int num_classes() const noexcept { return num_classes_; }
  int operator[](std::size_t i) const { return labels_[i]; }
  std::span<const int> values() const noexcept { return labels_; }
  std::vector<Index> class_counts() const;

  /// Throws InvalidArgument naming the first empty class.
  void require_all_classes_present() const;
  /// Throws InvalidArgument when the label count differs from `n`.
  void require_size(Index n) const;

  bool operator==(const LabelVector&) const = default;

 private:
  std::vector<int> labels_;
  int num_classes_ = 0;
};

struct Snapshot {
  FeatureCloud cloud;
  LabelVector labels;
  std::vector<std::string> feature_names;
};

/// Label column selector: a header name or a zero-based column index.
using LabelColumn = std::variant<std::string, std::size_t>;

/// Reads a snapshot CSV: header row, one point per row, every non-label
/// column numeric, label column holding nonnegative integers.
Snapshot load_snapshot_csv(const std::filesystem::path& path, const LabelColumn& label_column = std::string("label"));

/// Writes features at 17 significant digits followed by a trailing "label" column.
void write_snapshot_csv(const FeatureCloud& cloud, const LabelVector& labels, const std::filesystem::path& path,
                        const std::vector<std::string>& feature_names = {});

/// Reads a plain numeric matrix CSV (means or covariance files). A first
/// line that does not parse as numbers is treated as a header and skipped.
Matrix load_matrix_csv(const std::filesystem::path& path);

/// Named observables computed from one snapshot at one bandwidth.
struct ObservableReport {
  double bandwidth = 0.0;
  Index num_points = 0;
  int num_classes = 0;
  double mean_separation = 0.0;
  Matrix separation_matrix;
  double leakage_stationary = 0.0;
  double leakage_raw = 0.0;
  double coarse_gap = 0.0;
  double label_boundary_energy = 0.0;
  double soft_radius_rms = 0.0;
  Matrix coarse_chain;
  Vector stationary_distribution;

  /// Throws InvalidArgument if a field breaks its documented invariant.
  void validate() const;

  bool operator==(const ObservableReport& other) const;
};

nlohmann::json to_json(const ObservableReport& report);
ObservableReport report_from_json(const nlohmann::json& j);

/// Serializes `report` (plus an optional "metadata" object) with sorted keys.
void write_report_json(const ObservableReport& report, const std::filesystem::path& path,
                       const nlohmann::json& metadata = nlohmann::json());
void write_report_json(const ObservableReport& report, std::ostream& out,
                       const nlohmann::json& metadata = nlohmann::json());
ObservableReport read_report_json(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

/// printf("%.17g"), the lossless text form used by every CSV writer.
std::string format_double(double value);

}  // namespace opgeom
