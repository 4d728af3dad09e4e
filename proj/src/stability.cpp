#include "opgeom/stability.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "opgeom/error.hpp"
#include "opgeom/hardgraph.hpp"
#include "opgeom/observables.hpp"
#include "opgeom/parallel.hpp"
#include "opgeom/random.hpp"

namespace opgeom {

namespace {

void require_same_shape(const FeatureCloud& z, const FeatureCloud& z_tilde) {
  if (z.size() != z_tilde.size() || z.dim() != z_tilde.dim()) {
    throw InvalidArgument("clouds must have the same shape");
  }
}

constexpr double kBoundSlack = 1.0 + 1e-9;

}  // namespace

FeatureCloud perturb_cloud(const FeatureCloud& cloud, double sigma, std::uint64_t seed, std::uint64_t stream) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("perturbation sigma must be nonnegative");
  if (sigma == 0.0) return cloud;
  Rng rng = make_stream(seed, {0x7065727475726dull, stream});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z = cloud.points();
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index c = 0; c < z.cols(); ++c) z(i, c) += sigma * normal(rng);
  }
  return FeatureCloud(std::move(z));
}

void PerturbationConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("perturbation sigma must be positive");
  if (num_perturbations < 2) throw InvalidArgument("need at least two perturbations for a standard deviation");
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (epsilon && !(*epsilon > 0.0)) throw InvalidArgument("bandwidth must be positive");
}

const ObservableStats& StabilityReport::find(const std::string& family, const std::string& name) const {
  for (const auto& r : rows) {
    if (r.family == family && r.name == name) return r;
  }
  throw InvalidArgument("no stability row " + family + "/" + name);
}

std::vector<double> stability_observables(const FeatureCloud& cloud, const LabelVector& labels, double epsilon,
                                          Index k, double mass_floor) {
  const DiffusionOperator op = build_operator(cloud, epsilon);
  const CoarseChain chain = coarse_chain(remove_self_loops(op, mass_floor), labels);
  const MutualKnnGraph graph = build_mutual_knn(cloud, k);
  return {
      stationary_leakage(chain),
      label_boundary_energy(op, labels),
      soft_radius(op, cloud).rms,
      graph_leakage(graph, labels),
      graph_label_disagreement(graph, labels),
      graph_local_radius(graph, cloud).aggregate,
  };
}

StabilityReport run_stability_experiment(const FeatureCloud& cloud, const LabelVector& labels,
                                         const PerturbationConfig& config) {
  config.validate();
  labels.require_size(cloud.size());
  labels.require_all_classes_present();
  const double epsilon = config.epsilon ? *config.epsilon : median_bandwidth(cloud);

  const std::vector<double> baseline = stability_observables(cloud, labels, epsilon, config.k, config.mass_floor);
  const auto reps = static_cast<std::size_t>(config.num_perturbations);
  std::vector<std::vector<double>> samples(reps);
  parallel_for(0, reps, [&](std::size_t r) {
    const FeatureCloud perturbed = perturb_cloud(cloud, config.sigma, config.seed, r);
    try {
      samples[r] = stability_observables(perturbed, labels, epsilon, config.k, config.mass_floor);
    } catch (const NumericalError& e) {
      throw NumericalError("perturbation " + std::to_string(r) + ": " + e.what());
    }
  });

  static const char* const kNames[][2] = {
      {"operator", "leakage"}, {"operator", "label_boundary_energy"}, {"operator", "soft_radius_rms"},
      {"graph", "leakage"},    {"graph", "label_disagreement"},       {"graph", "local_radius"},
  };

  StabilityReport report;
  report.epsilon = epsilon;
  report.seed = config.seed;
  report.k = config.k;
  report.sigma = config.sigma;
  report.num_perturbations = config.num_perturbations;
  for (std::size_t o = 0; o < baseline.size(); ++o) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s[o];
    mean /= static_cast<double>(reps);
    double ss = 0.0;
    for (const auto& s : samples) ss += (s[o] - mean) * (s[o] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(reps - 1));
    ObservableStats row;
    row.family = kNames[o][0];
    row.name = kNames[o][1];
    row.baseline = baseline[o];
    row.mean = mean;
    row.std = sd;
    row.relative_std = std::abs(mean) < 1e-12 ? sd : sd / std::abs(mean);
    report.rows.push_back(row);
  }
  return report;
}

void write_stability_csv(const std::vector<StabilityReport>& reports, std::ostream& out,
                         const nlohmann::json& metadata) {
  if (metadata.is_object()) {
    for (const auto& [key, value] : metadata.items()) out << "# " << key << "=" << value.dump() << '\n';
  }
  out << "seed,family,observable,baseline,mean,std,relative_std,epsilon,k,sigma,num_perturbations\n";
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      out << rep.seed << ',' << r.family << ',' << r.name << ',' << format_double(r.baseline) << ','
          << format_double(r.mean) << ',' << format_double(r.std) << ',' << format_double(r.relative_std) << ','
          << format_double(rep.epsilon) << ',' << rep.k << ',' << format_double(rep.sigma) << ','
          << rep.num_perturbations << '\n';
    }
  }
}

double max_displacement(const FeatureCloud& z, const FeatureCloud& z_tilde) {
  require_same_shape(z, z_tilde);
  return (z.points() - z_tilde.points()).rowwise().norm().maxCoeff();
}

double joint_radius(const FeatureCloud& z, const FeatureCloud& z_tilde) {
  return std::max(z.points().rowwise().norm().maxCoeff(), z_tilde.points().rowwise().norm().maxCoeff());
}

double operator_lipschitz_constant(double radius, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("bandwidth must be positive");
  return 4.0 * radius / epsilon * std::exp(radius * radius / epsilon);
}

double row_sum_norm(const Matrix& a) { return a.rows() == 0 ? 0.0 : a.cwiseAbs().rowwise().sum().maxCoeff(); }

LipschitzCheck lipschitz_bound_check(const FeatureCloud& z, const FeatureCloud& z_tilde, double epsilon) {
  require_same_shape(z, z_tilde);
  const DiffusionOperator p = build_operator(z, epsilon);
  const DiffusionOperator p_tilde = build_operator(z_tilde, epsilon);
  LipschitzCheck out;
  out.lhs = row_sum_norm(p.transition() - p_tilde.transition());
  out.rhs = operator_lipschitz_constant(joint_radius(z, z_tilde), epsilon) * max_displacement(z, z_tilde);
  out.satisfied = out.lhs <= out.rhs * kBoundSlack;
  return out;
}

LemmaCheck lemma_bounds_check(const FeatureCloud& z, const FeatureCloud& z_tilde, double epsilon) {
  require_same_shape(z, z_tilde);
  if (!(epsilon > 0.0)) throw InvalidArgument("bandwidth must be positive");
  const double radius = joint_radius(z, z_tilde);
  const double delta = max_displacement(z, z_tilde);
  const Matrix& a = z.points();
  const Matrix& b = z_tilde.points();
  LemmaCheck out;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = i + 1; j < a.rows(); ++j) {
      const double da = (a.row(i) - a.row(j)).squaredNorm();
      const double db = (b.row(i) - b.row(j)).squaredNorm();
      out.distance_change = std::max(out.distance_change, std::abs(da - db));
      const double wa = std::exp(-da / (4.0 * epsilon));
      const double wb = std::exp(-db / (4.0 * epsilon));
      out.kernel_change = std::max(out.kernel_change, std::abs(wa - wb));
    }
  }
  out.distance_bound = 8.0 * radius * delta;
  out.kernel_bound = 2.0 * radius / epsilon * delta;
  out.distance_ok = out.distance_change <= out.distance_bound * kBoundSlack;
  out.kernel_ok = out.kernel_change <= out.kernel_bound * kBoundSlack;
  return out;
}

std::vector<BoundCheck> observable_bounds_check(const FeatureCloud& z, const FeatureCloud& z_tilde,
                                                const LabelVector& labels, double epsilon) {
  require_same_shape(z, z_tilde);
  labels.require_size(z.size());
  const double radius = joint_radius(z, z_tilde);
  const double delta = max_displacement(z, z_tilde);
  const double cp = operator_lipschitz_constant(radius, epsilon);

  const DiffusionOperator p = build_operator(z, epsilon);
  const DiffusionOperator pt = build_operator(z_tilde, epsilon);

  std::vector<BoundCheck> out;
  auto add = [&out](std::string name, double change, double bound) {
    out.push_back({std::move(name), change, bound, change <= bound * kBoundSlack});
  };

  add("raw_leakage", std::abs(raw_leakage(p, labels) - raw_leakage(pt, labels)), cp * delta);
  add("raw_coarse_transition",
      (raw_coarse_transition(p, labels) - raw_coarse_transition(pt, labels)).cwiseAbs().maxCoeff(), cp * delta);
  add("label_boundary_energy", std::abs(label_boundary_energy(p, labels) - label_boundary_energy(pt, labels)),
      cp / epsilon * delta);
  add("squared_soft_radius", (soft_radius(p, z).squared - soft_radius(pt, z_tilde).squared).cwiseAbs().maxCoeff(),
      (4.0 * radius * radius * cp + 8.0 * radius) * delta);

  const SelfLoopFreeOperator q = remove_self_loops(p);
  const SelfLoopFreeOperator qt = remove_self_loops(pt);
  if (q.all_valid() && qt.all_valid()) {
    const double gamma = std::min(q.off_diagonal_mass.minCoeff(), qt.off_diagonal_mass.minCoeff());
    const double change =
        (coarse_chain(q, labels).transition - coarse_chain(qt, labels).transition).cwiseAbs().maxCoeff();
    add("self_loop_free_coarse_transition", change, 2.0 / gamma * row_sum_norm(p.transition() - pt.transition()));
  }
  return out;
}

double max_report_difference(const ObservableReport& lhs, const ObservableReport& rhs) {
  if (lhs.num_classes != rhs.num_classes) throw InvalidArgument("reports have different class counts");
  double diff = 0.0;
  auto scalar = [&diff](double x, double y) { diff = std::max(diff, std::abs(x - y)); };
  scalar(lhs.bandwidth, rhs.bandwidth);
  scalar(lhs.mean_separation, rhs.mean_separation);
  scalar(lhs.leakage_stationary, rhs.leakage_stationary);
  scalar(lhs.leakage_raw, rhs.leakage_raw);
  scalar(lhs.coarse_gap, rhs.coarse_gap);
  scalar(lhs.label_boundary_energy, rhs.label_boundary_energy);
  scalar(lhs.soft_radius_rms, rhs.soft_radius_rms);
  diff = std::max(diff, (lhs.separation_matrix - rhs.separation_matrix).cwiseAbs().maxCoeff());
  diff = std::max(diff, (lhs.coarse_chain - rhs.coarse_chain).cwiseAbs().maxCoeff());
  diff = std::max(diff, (lhs.stationary_distribution - rhs.stationary_distribution).cwiseAbs().maxCoeff());
  return diff;
}

LabeledCloud near_tie_snapshot(int replicas, double spacing) {
  if (replicas < 1) throw InvalidArgument("need at least one replica");
  if (!(spacing > 2.0)) throw InvalidArgument("replica spacing must exceed the triple width");
  Matrix z(3 * replicas, 2);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(3 * replicas));
  for (int r = 0; r < replicas; ++r) {
    const double y = spacing * r;
    z.row(3 * r) << 0.0, y;
    z.row(3 * r + 1) << 1.0, y;
    z.row(3 * r + 2) << -1.0, y;
    labels.insert(labels.end(), {0, 0, 1});
  }
  return LabeledCloud{FeatureCloud(std::move(z)), LabelVector(std::move(labels))};
}

}  // namespace opgeom
