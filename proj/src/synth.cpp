#include "opgeom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Cholesky>

#include "opgeom/diffusion_operator.hpp"
#include "opgeom/error.hpp"
#include "opgeom/observables.hpp"
#include "opgeom/parallel.hpp"
#include "opgeom/random.hpp"

namespace opgeom {

SynthConfig SynthConfig::paper_grid() { return SynthConfig{}; }

void SynthConfig::validate() const {
  if (num_classes < 1 || dim < 1 || samples_per_class < 1 || trials < 1) {
    throw InvalidArgument("synth config counts must all be >= 1");
  }
  if (num_classes > dim + 1) throw InvalidArgument("simplex of K classes needs K <= d + 1");
  if (separations.empty() || bandwidths.empty()) throw InvalidArgument("separation and bandwidth grids must be nonempty");
  for (double s : separations) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("separations must be finite and nonnegative");
  }
  for (double e : bandwidths) {
    if (!(e > 0.0) || !std::isfinite(e)) throw InvalidArgument("bandwidths must be positive");
  }
  if (!(sigma2 >= 0.0) || !(spike >= 0.0)) throw InvalidArgument("variances must be nonnegative");
  if (!(ridge > 0.0)) throw InvalidArgument("ridge must be positive");
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j;
  j["num_classes"] = c.num_classes;
  j["dim"] = c.dim;
  j["samples_per_class"] = c.samples_per_class;
  j["separations"] = c.separations;
  j["sigma2"] = c.sigma2;
  j["spike"] = c.spike;
  j["bandwidths"] = c.bandwidths;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["ridge"] = c.ridge;
  j["separation_parameterization"] = "pairwise_mean_distance";
  j["spike_direction"] = "e1";
  return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("synth config must be a JSON object");
  SynthConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_classes") c.num_classes = value.get<int>();
      else if (key == "dim") c.dim = value.get<int>();
      else if (key == "samples_per_class") c.samples_per_class = value.get<int>();
      else if (key == "separations") c.separations = value.get<std::vector<double>>();
      else if (key == "sigma2") c.sigma2 = value.get<double>();
      else if (key == "spike") c.spike = value.get<double>();
      else if (key == "bandwidths") c.bandwidths = value.get<std::vector<double>>();
      else if (key == "trials") c.trials = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "ridge") c.ridge = value.get<double>();
      else if (key == "separation_parameterization" || key == "spike_direction") continue;
      else throw InvalidArgument("unknown synth config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed synth config: ") + e.what());
  }
  c.validate();
  return c;
}

Matrix simplex_means(int num_classes, int dim, double separation) {
  if (num_classes < 1 || num_classes > dim + 1) throw InvalidArgument("simplex of K classes needs 1 <= K <= d + 1");
  // Helmert rows are an orthonormal basis of the complement of the all-ones
  // vector, so vertex a sits at the projection of e_a; those are sqrt(2) apart.
  Matrix means = Matrix::Zero(num_classes, dim);
  const double scale = separation / std::sqrt(2.0);
  for (int k = 1; k < num_classes; ++k) {
    const double norm = std::sqrt(static_cast<double>(k) * (k + 1));
    for (int a = 0; a < k; ++a) means(a, k - 1) = scale / norm;
    means(k, k - 1) = -scale * k / norm;
  }
  return means;
}

GaussianModel synth_model(const SynthConfig& config, double separation) {
  Matrix sigma = Matrix::Identity(config.dim, config.dim) * config.sigma2;
  sigma(0, 0) += config.spike;
  return GaussianModel::shared(simplex_means(config.num_classes, config.dim, separation), std::move(sigma));
}

SyntheticSnapshot sample_gaussian_snapshot(const SynthConfig& config, const GridCell& cell) {
  config.validate();
  if (cell.separation_index >= config.separations.size() || cell.bandwidth_index >= config.bandwidths.size() ||
      cell.trial < 0 || cell.trial >= config.trials) {
    throw InvalidArgument("grid cell outside the configured grid");
  }
  GaussianModel model = synth_model(config, config.separations[cell.separation_index]);
  const Index d = config.dim;
  const Index per_class = config.samples_per_class;
  const Index n = per_class * config.num_classes;

  // sigma2 I + spike e1 e1^T is diagonal, so its square root is elementwise.
  const Vector root_diag = model.covariance().diagonal().cwiseSqrt();

  Rng rng = make_stream(config.seed, {cell.separation_index, cell.bandwidth_index,
                                      static_cast<std::uint64_t>(cell.trial)});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix points(n, d);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index a = 0; a < config.num_classes; ++a) {
    for (Index s = 0; s < per_class; ++s) {
      const Index i = a * per_class + s;
      for (Index c = 0; c < d; ++c) points(i, c) = model.means()(a, c) + root_diag(c) * normal(rng);
      labels[static_cast<std::size_t>(i)] = static_cast<int>(a);
    }
  }
  return SyntheticSnapshot{FeatureCloud(std::move(points)), LabelVector(std::move(labels), config.num_classes),
                           std::move(model)};
}

BridgeValidationRow run_bridge_cell(const SynthConfig& config, const GridCell& cell) {
  const SyntheticSnapshot snap = sample_gaussian_snapshot(config, cell);
  const double epsilon = config.bandwidths[cell.bandwidth_index];

  const DiffusionOperator op = build_operator(snap.cloud, epsilon);
  const CoarseChain chain = coarse_chain(remove_self_loops(op), snap.labels);
  const SeparationMatrix sep = empirical_separation(snap.cloud, snap.labels, epsilon, config.ridge);
  const PopulationPrediction theory = predict(snap.model, epsilon);

  BridgeValidationRow row;
  row.separation = config.separations[cell.separation_index];
  row.bandwidth = epsilon;
  row.trial = cell.trial;
  row.empirical = {sep.mean_off_diagonal(), stationary_leakage(chain), coarse_gap(chain)};

  const Index k = theory.c_matrix.rows();
  const double c_bar =
      k > 1 ? (theory.c_matrix.sum() - theory.c_matrix.trace()) / static_cast<double>(k * (k - 1)) : 0.0;
  row.theory = {c_bar, theory.stationary_leakage, theory.coarse_gap};
  return row;
}

std::vector<BridgeValidationRow> run_bridge_validation(const SynthConfig& config) {
  config.validate();
  if (config.num_classes < 2) throw InvalidArgument("bridge validation needs at least two classes");
  std::vector<GridCell> cells;
  for (std::size_t s = 0; s < config.separations.size(); ++s) {
    for (std::size_t b = 0; b < config.bandwidths.size(); ++b) {
      for (int t = 0; t < config.trials; ++t) cells.push_back({s, b, t});
    }
  }
  std::vector<BridgeValidationRow> rows(cells.size());
  parallel_for(0, cells.size(), [&](std::size_t i) { rows[i] = run_bridge_cell(config, cells[i]); });
  return rows;
}

double bridge_relative_error(double empirical, double theory, double floor) {
  return std::abs(empirical - theory) / std::max(theory, floor);
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

BridgeAgreement summarize_bridge(const std::vector<BridgeValidationRow>& rows) {
  std::vector<double> sep;
  std::vector<double> leak;
  std::vector<double> gap;
  for (const auto& r : rows) {
    sep.push_back(bridge_relative_error(r.empirical.mean_separation, r.theory.mean_separation));
    leak.push_back(bridge_relative_error(r.empirical.leakage, r.theory.leakage));
    gap.push_back(bridge_relative_error(r.empirical.gap, r.theory.gap));
  }
  return {median(sep), median(leak), median(gap)};
}

void write_bridge_table_csv(const std::vector<BridgeValidationRow>& rows, std::ostream& out,
                            const nlohmann::json& metadata) {
  if (metadata.is_object()) {
    for (const auto& [key, value] : metadata.items()) out << "# " << key << "=" << value.dump() << '\n';
  }
  out << "separation,bandwidth,trial,empirical_mean_separation,empirical_leakage,empirical_gap,"
         "theory_mean_separation,theory_leakage,theory_gap\n";
  for (const auto& r : rows) {
    out << format_double(r.separation) << ',' << format_double(r.bandwidth) << ',' << r.trial << ','
        << format_double(r.empirical.mean_separation) << ',' << format_double(r.empirical.leakage) << ','
        << format_double(r.empirical.gap) << ',' << format_double(r.theory.mean_separation) << ','
        << format_double(r.theory.leakage) << ',' << format_double(r.theory.gap) << '\n';
  }
}

}  // namespace opgeom
