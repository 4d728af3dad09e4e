#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "opgeom/bridge.hpp"
#include "opgeom/datamodel.hpp"

namespace opgeom {

/// Grid configuration for synthetic balanced Gaussian snapshots.
///
/// Class means are the vertices of a regular simplex centered at the origin
/// in the first K-1 coordinates, scaled so every pair of means is
/// `separation` apart. The shared covariance is sigma2 I + spike e_1 e_1^T.
struct SynthConfig {
  int num_classes = 4;
  int dim = 16;
  int samples_per_class = 250;
  std::vector<double> separations{0.8, 1.4, 2.0, 2.8, 3.8};
  double sigma2 = 1.0;
  double spike = 0.5;
  std::vector<double> bandwidths{0.5, 1.0, 2.0, 4.0};
  int trials = 3;
  std::uint64_t seed = 0;
  double ridge = 1e-8;

  /// The K=4, d=16 grid with 250 samples per class and three trials.
  static SynthConfig paper_grid();

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct GridCell {
  std::size_t separation_index = 0;
  std::size_t bandwidth_index = 0;
  int trial = 0;
};

struct SyntheticSnapshot {
  FeatureCloud cloud;
  LabelVector labels;
  GaussianModel model;
};

/// K x d matrix of simplex means with pairwise distance `separation`.
Matrix simplex_means(int num_classes, int dim, double separation);

GaussianModel synth_model(const SynthConfig& config, double separation);

/// Samples class-major blocks (all of class 0, then class 1, ...). The draw is
/// a pure function of (config.seed, cell).
SyntheticSnapshot sample_gaussian_snapshot(const SynthConfig& config, const GridCell& cell);

struct BridgeObservables {
  double mean_separation = 0.0;
  double leakage = 0.0;
  double gap = 0.0;
};

struct BridgeValidationRow {
  double separation = 0.0;
  double bandwidth = 0.0;
  int trial = 0;
  BridgeObservables empirical;
  BridgeObservables theory;
};

/// Evaluates one grid cell: empirical observables on a fresh sample against
/// the closed-form predictions of the generating model.
BridgeValidationRow run_bridge_cell(const SynthConfig& config, const GridCell& cell);

/// Every (separation, bandwidth, trial) cell in grid order.
std::vector<BridgeValidationRow> run_bridge_validation(const SynthConfig& config);

/// |empirical - theory| / max(theory, floor).
double bridge_relative_error(double empirical, double theory, double floor = 0.02);

struct BridgeAgreement {
  double median_error_separation = 0.0;
  double median_error_leakage = 0.0;
  double median_error_gap = 0.0;
};

BridgeAgreement summarize_bridge(const std::vector<BridgeValidationRow>& rows);

/// CSV with "#"-prefixed metadata lines followed by a header and one row per cell.
void write_bridge_table_csv(const std::vector<BridgeValidationRow>& rows, std::ostream& out,
                            const nlohmann::json& metadata = nlohmann::json());

}  // namespace opgeom
