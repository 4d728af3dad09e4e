#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "opgeom/datamodel.hpp"
#include "opgeom/diffusion_operator.hpp"

namespace opgeom {

/// z~_i = z_i + sigma xi_i with xi_i ~ N(0, I). Deterministic per (seed, stream);
/// sigma = 0 returns the input unchanged.
FeatureCloud perturb_cloud(const FeatureCloud& cloud, double sigma, std::uint64_t seed, std::uint64_t stream = 0);

struct PerturbationConfig {
  double sigma = 1e-3;
  int num_perturbations = 15;
  std::uint64_t seed = 0;
  Index k = 10;
  /// Operator bandwidth; the median heuristic on the unperturbed cloud when unset.
  std::optional<double> epsilon;
  double mass_floor = kDefaultMassFloor;

  void validate() const;
};

struct ObservableStats {
  std::string family;  ///< "operator" or "graph"
  std::string name;
  double baseline = 0.0;
  double mean = 0.0;
  double std = 0.0;           ///< sample standard deviation across perturbations
  double relative_std = 0.0;  ///< std / |mean|, or std when |mean| < 1e-12
};

/// Operator rows: leakage (stationary, self-loop-free coarse chain),
/// label_boundary_energy, soft_radius_rms. Graph rows: leakage,
/// label_disagreement, local_radius.
struct StabilityReport {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  Index k = 0;
  double sigma = 0.0;
  int num_perturbations = 0;
  std::vector<ObservableStats> rows;

  const ObservableStats& find(const std::string& family, const std::string& name) const;
};

/// The six per-snapshot stability observables, in report order.
std::vector<double> stability_observables(const FeatureCloud& cloud, const LabelVector& labels, double epsilon,
                                          Index k, double mass_floor = kDefaultMassFloor);

StabilityReport run_stability_experiment(const FeatureCloud& cloud, const LabelVector& labels,
                                         const PerturbationConfig& config);

/// One CSV row per (seed, observable), preceded by "#"-prefixed metadata lines.
void write_stability_csv(const std::vector<StabilityReport>& reports, std::ostream& out,
                         const nlohmann::json& metadata = nlohmann::json());

/// max_i |z_i - z~_i|.
double max_displacement(const FeatureCloud& z, const FeatureCloud& z_tilde);

/// max over both clouds of |z_i|.
double joint_radius(const FeatureCloud& z, const FeatureCloud& z_tilde);

/// C_P = (4R / eps) exp(R^2 / eps).
double operator_lipschitz_constant(double radius, double epsilon);

/// max_i sum_j |A_ij|.
double row_sum_norm(const Matrix& a);

struct LipschitzCheck {
  double lhs = 0.0;  ///< |P(Z) - P(Z~)|_{inf->inf}
  double rhs = 0.0;  ///< C_P |Z - Z~|_inf
  bool satisfied = false;
};

LipschitzCheck lipschitz_bound_check(const FeatureCloud& z, const FeatureCloud& z_tilde, double epsilon);

struct LemmaCheck {
  double distance_change = 0.0;  ///< max_ij | |z_i - z_j|^2 - |z~_i - z~_j|^2 |
  double distance_bound = 0.0;   ///< 8R |Z - Z~|_inf
  bool distance_ok = false;
  double kernel_change = 0.0;  ///< max_ij |W_ij(Z) - W_ij(Z~)|
  double kernel_bound = 0.0;   ///< (2R/eps) |Z - Z~|_inf
  bool kernel_ok = false;
};

LemmaCheck lemma_bounds_check(const FeatureCloud& z, const FeatureCloud& z_tilde, double epsilon);

struct BoundCheck {
  std::string name;
  double change = 0.0;
  double bound = 0.0;
  bool ok = false;
};

/// Observable-level Lipschitz bounds for fixed labels:
///   raw leakage, raw coarse entries: C_P delta
///   label-boundary energy:            (C_P / eps) delta
///   squared soft radii:               (4 R^2 C_P + 8R) delta
///   self-loop-free coarse entries:    (2 / gamma) |P - P~|_{inf->inf}, gamma = min off-diagonal row mass
std::vector<BoundCheck> observable_bounds_check(const FeatureCloud& z, const FeatureCloud& z_tilde,
                                                const LabelVector& labels, double epsilon);

/// Largest absolute difference over every scalar and matrix entry of two reports.
double max_report_difference(const ObservableReport& lhs, const ObservableReport& rhs);

struct LabeledCloud {
  FeatureCloud cloud;
  LabelVector labels;
};

/// `replicas` copies of the 0/+1/-1 tie triple stacked `spacing` apart along
/// a second axis. The middle and +1 points carry label 0, the -1 point label 1,
/// so under k = 1 each middle point's mutual neighbor decides its label mix.
LabeledCloud near_tie_snapshot(int replicas, double spacing = 10.0);

}  // namespace opgeom
