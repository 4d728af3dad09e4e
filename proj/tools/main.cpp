// opgeom: command-line front end for the diffusion-operator toolkit.
//
// Subcommands: observables, bridge-validate, predict, stability, bandwidth,
// knn-witness. Every output carries a metadata block with the tool version
// and the fully resolved configuration. Errors are reported on stderr as a
// single line "error: <kind>: <message>".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "opgeom/bridge.hpp"
#include "opgeom/datamodel.hpp"
#include "opgeom/diffusion_operator.hpp"
#include "opgeom/error.hpp"
#include "opgeom/hardgraph.hpp"
#include "opgeom/observables.hpp"
#include "opgeom/parallel.hpp"
#include "opgeom/stability.hpp"
#include "opgeom/synth.hpp"
#include "opgeom/version.hpp"

namespace {

using nlohmann::json;
using namespace opgeom;

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error("usage", message) {}
};

// Wall time is opt-in: it would break byte-identical output across runs.
bool g_record_timing = false;
std::chrono::steady_clock::time_point g_start;

struct Common {
  std::string out = "-";
  std::uint64_t seed = 0;
  bool timing = false;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--out", common.out, "Output path ('-' for stdout)")->capture_default_str();
  cmd->add_option("--seed", common.seed, "RNG seed")->capture_default_str();
  cmd->add_flag("--record-timing", common.timing, "Add wall time to the metadata block (breaks byte-identity)");
}

/// Writes `text` to the requested destination.
void emit(const std::string& destination, const std::string& text) {
  if (destination == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(destination, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + destination);
  out << text;
  if (!out) throw IoError("write failed: " + destination);
}

json metadata(const std::string& subcommand, const json& config, std::uint64_t seed) {
  json meta;
  meta["tool"] = "opgeom";
  meta["version"] = kVersion;
  meta["subcommand"] = subcommand;
  meta["seed"] = seed;
  meta["config"] = config;
  if (g_record_timing) {
    meta["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
  }
  return meta;
}

/// "median" or a positive real.
std::optional<double> parse_epsilon(const std::string& text) {
  if (text == "median") return std::nullopt;
  double value = 0.0;
  std::size_t used = 0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw UsageError("--epsilon must be 'median' or a positive number, got '" + text + "'");
  }
  if (used != text.size() || !(value > 0.0) || !std::isfinite(value)) {
    throw UsageError("--epsilon must be 'median' or a positive number, got '" + text + "'");
  }
  return value;
}

struct SnapshotArgs {
  std::string input;
  std::string label_column = "label";
  int label_index = -1;

  Snapshot load() const {
    if (label_index >= 0) return load_snapshot_csv(input, static_cast<std::size_t>(label_index));
    return load_snapshot_csv(input, label_column);
  }

  void describe(json& config) const {
    config["input"] = input;
    if (label_index >= 0) config["label_index"] = label_index;
    else config["label_column"] = label_column;
  }
};

void add_snapshot(CLI::App* cmd, SnapshotArgs& args) {
  cmd->add_option("snapshot", args.input, "Snapshot CSV")->required();
  cmd->add_option("--label-column", args.label_column, "Label column name")->capture_default_str();
  cmd->add_option("--label-index", args.label_index, "Zero-based label column index (overrides --label-column)");
}

// --- observables -----------------------------------------------------------

struct ObservablesArgs {
  SnapshotArgs snapshot;
  std::string epsilon = "median";
  double ridge = kDefaultRidge;
  std::string k_classes = "auto";
  double mass_floor = kDefaultMassFloor;
  std::size_t bandwidth_cap = kDefaultBandwidthSubsample;
  Common common;
};

std::string run_observables(const ObservablesArgs& args) {
  const auto requested_eps = parse_epsilon(args.epsilon);
  if (!(args.ridge > 0.0)) throw UsageError("--ridge must be positive");
  Snapshot snap = args.snapshot.load();
  LabelVector labels = snap.labels;
  if (args.k_classes != "auto") {
    int k = 0;
    try {
      k = std::stoi(args.k_classes);
    } catch (const std::exception&) {
      throw UsageError("--k-classes must be 'auto' or a positive integer");
    }
    labels = LabelVector(std::vector<int>(snap.labels.values().begin(), snap.labels.values().end()), k);
  }
  const double epsilon =
      requested_eps ? *requested_eps : median_bandwidth(snap.cloud, args.bandwidth_cap, args.common.seed);
  const ObservableReport report = compute_observables(snap.cloud, labels, epsilon, {args.ridge, args.mass_floor});

  json config;
  args.snapshot.describe(config);
  config["epsilon_mode"] = requested_eps ? "fixed" : "median";
  config["epsilon"] = epsilon;
  config["ridge"] = args.ridge;
  config["k_classes"] = labels.num_classes();
  config["mass_floor"] = args.mass_floor;
  config["bandwidth_subsample_cap"] = args.bandwidth_cap;
  config["num_points"] = snap.cloud.size();
  config["dim"] = snap.cloud.dim();
  std::ostringstream out;
  write_report_json(report, out, metadata("observables", config, args.common.seed));
  return out.str();
}

// --- bridge-validate -------------------------------------------------------

struct BridgeArgs {
  std::string config_path;
  bool paper_grid = false;
  int trials = 0;
  Common common;
};

std::string run_bridge(const BridgeArgs& args, const CLI::App& cmd) {
  SynthConfig config = SynthConfig::paper_grid();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open file: " + args.config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw IoError("cannot parse " + args.config_path + ": " + e.what());
    }
    config = synth_config_from_json(j);
  }
  if (cmd.count("--seed") > 0 || args.config_path.empty()) config.seed = args.common.seed;
  if (args.trials > 0) config.trials = args.trials;
  config.validate();

  const auto rows = run_bridge_validation(config);
  const BridgeAgreement agreement = summarize_bridge(rows);
  json meta = metadata("bridge-validate", to_json(config), config.seed);
  meta["preset"] = args.config_path.empty() ? "paper-grid" : "config-file";
  meta["median_relative_error"] = {{"mean_separation", agreement.median_error_separation},
                                   {"leakage", agreement.median_error_leakage},
                                   {"gap", agreement.median_error_gap}};
  std::ostringstream out;
  write_bridge_table_csv(rows, out, meta);
  return out.str();
}

// --- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string means;
  std::string covariance;
  double epsilon = 0.0;
  Common common;
};

std::string run_predict(const PredictArgs& args) {
  if (!(args.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
  const Matrix means = load_matrix_csv(args.means);
  const Matrix cov = load_matrix_csv(args.covariance);
  if (cov.rows() != cov.cols()) {
    throw InvalidArgument("covariance must be square, got " + std::to_string(cov.rows()) + "x" +
                          std::to_string(cov.cols()));
  }
  if (cov.rows() != means.cols()) {
    throw InvalidArgument("dimension mismatch: means have d=" + std::to_string(means.cols()) +
                          ", covariance is " + std::to_string(cov.rows()) + "x" + std::to_string(cov.cols()));
  }
  const GaussianModel model = GaussianModel::shared(means, cov);
  json j = to_json(predict(model, args.epsilon));
  json config;
  config["means"] = args.means;
  config["covariance"] = args.covariance;
  config["epsilon"] = args.epsilon;
  config["num_classes"] = model.num_classes();
  config["dim"] = model.dim();
  config["homogeneity_tolerance"] = 1e-9;
  j["metadata"] = metadata("predict", config, args.common.seed);
  return j.dump(2) + "\n";
}

// --- stability -------------------------------------------------------------

struct StabilityArgs {
  SnapshotArgs snapshot;
  double sigma = 1e-3;
  int reps = 15;
  Index k = 10;
  int seeds = 1;
  std::string epsilon = "median";
  Common common;
};

std::string run_stability(const StabilityArgs& args) {
  if (args.reps < 2) throw UsageError("--reps must be at least 2");
  if (!(args.sigma > 0.0)) throw UsageError("--sigma must be positive");
  if (args.seeds < 1) throw UsageError("--seeds must be at least 1");
  if (args.k < 1) throw UsageError("--k must be at least 1");
  const auto requested_eps = parse_epsilon(args.epsilon);
  const Snapshot snap = args.snapshot.load();
  const double epsilon = requested_eps ? *requested_eps : median_bandwidth(snap.cloud, kDefaultBandwidthSubsample,
                                                                           args.common.seed);
  std::vector<StabilityReport> reports;
  for (int s = 0; s < args.seeds; ++s) {
    PerturbationConfig config;
    config.sigma = args.sigma;
    config.num_perturbations = args.reps;
    config.seed = args.common.seed + static_cast<std::uint64_t>(s);
    config.k = args.k;
    config.epsilon = epsilon;
    reports.push_back(run_stability_experiment(snap.cloud, snap.labels, config));
  }
  json config;
  args.snapshot.describe(config);
  config["sigma"] = args.sigma;
  config["reps"] = args.reps;
  config["k"] = args.k;
  config["seeds"] = args.seeds;
  config["epsilon_mode"] = requested_eps ? "fixed" : "median";
  config["epsilon"] = epsilon;
  config["graph_local_radius_aggregate"] = "node_mean_of_per_node_rms";
  config["operator_leakage"] = "stationary";
  std::ostringstream out;
  write_stability_csv(reports, out, metadata("stability", config, args.common.seed));
  return out.str();
}

// --- bandwidth -------------------------------------------------------------

struct BandwidthArgs {
  SnapshotArgs snapshot;
  std::size_t cap = kDefaultBandwidthSubsample;
  Common common;
};

std::string run_bandwidth(const BandwidthArgs& args) {
  if (args.cap < 2) throw UsageError("--cap must be at least 2");
  const Snapshot snap = args.snapshot.load();
  json j;
  j["epsilon"] = median_bandwidth(snap.cloud, args.cap, args.common.seed);
  j["num_points"] = snap.cloud.size();
  json config;
  args.snapshot.describe(config);
  config["subsample_cap"] = args.cap;
  config["subsampled"] = static_cast<std::size_t>(snap.cloud.size()) > args.cap;
  j["metadata"] = metadata("bandwidth", config, args.common.seed);
  return j.dump(2) + "\n";
}

// --- knn-witness -----------------------------------------------------------

struct WitnessArgs {
  double perturbation = 1e-9;
  Common common;
};

std::string run_witness(const WitnessArgs& args) {
  if (!(args.perturbation > 0.0)) throw UsageError("--perturbation must be positive");
  const DiscontinuityWitness w = discontinuity_witness(args.perturbation);
  const double epsilon = median_bandwidth(w.base);
  const LabelVector labels(std::vector<int>{0, 0, 1});
  const LipschitzCheck lip = lipschitz_bound_check(w.plus, w.minus, epsilon);
  const double observable_change =
      max_report_difference(compute_observables(w.plus, labels, epsilon), compute_observables(w.minus, labels, epsilon));

  json j;
  j["adjacency_diff"] = w.adjacency_diff;
  j["k"] = w.k;
  j["epsilon"] = epsilon;
  j["perturbation_norm"] = max_displacement(w.plus, w.minus);
  j["operator_row_sum_diff"] = lip.lhs;
  j["operator_bound"] = lip.rhs;
  j["operator_bound_satisfied"] = lip.satisfied;
  j["max_observable_change"] = observable_change;
  j["base"] = matrix_to_json(w.base.points());
  j["plus"] = matrix_to_json(w.plus.points());
  j["minus"] = matrix_to_json(w.minus.points());
  json config;
  config["perturbation"] = args.perturbation;
  config["labels"] = {0, 0, 1};
  config["epsilon_mode"] = "median";
  j["metadata"] = metadata("knn-witness", config, args.common.seed);
  return j.dump(2) + "\n";
}

void finish(const Common& common, const std::string& text) { emit(common.out, text); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-operator geometry of labeled feature clouds"};
  app.set_version_flag("--version", std::string(opgeom::kVersion));
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();

  ObservablesArgs obs;
  auto* obs_cmd = app.add_subcommand("observables", "Operator observables of one snapshot");
  add_snapshot(obs_cmd, obs.snapshot);
  obs_cmd->add_option("--epsilon", obs.epsilon, "Bandwidth: 'median' or a positive real")->capture_default_str();
  obs_cmd->add_option("--ridge", obs.ridge, "Separation ridge")->capture_default_str();
  obs_cmd->add_option("--k-classes", obs.k_classes, "'auto' or number of classes")->capture_default_str();
  obs_cmd->add_option("--mass-floor", obs.mass_floor, "Self-loop-free row mass floor")->capture_default_str();
  obs_cmd->add_option("--bandwidth-cap", obs.bandwidth_cap, "Median-heuristic subsample cap")->capture_default_str();
  add_common(obs_cmd, obs.common);

  BridgeArgs bridge;
  auto* bridge_cmd = app.add_subcommand("bridge-validate", "Synthetic Gaussian bridge validation table");
  auto* config_opt = bridge_cmd->add_option("--config", bridge.config_path, "Synth config JSON");
  bridge_cmd->add_flag("--paper-grid", bridge.paper_grid, "K=4, d=16 reference grid (the default)")->excludes(config_opt);
  bridge_cmd->add_option("--trials", bridge.trials, "Override trials per cell");
  add_common(bridge_cmd, bridge.common);

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Closed-form population predictions");
  pred_cmd->add_option("--means", pred.means, "K x d means CSV")->required();
  pred_cmd->add_option("--covariance", pred.covariance, "d x d covariance CSV")->required();
  pred_cmd->add_option("--epsilon", pred.epsilon, "Bandwidth")->required();
  add_common(pred_cmd, pred.common);

  StabilityArgs stab;
  auto* stab_cmd = app.add_subcommand("stability", "Perturbation stability of operator vs mutual k-NN observables");
  add_snapshot(stab_cmd, stab.snapshot);
  stab_cmd->add_option("--sigma", stab.sigma, "Perturbation std")->capture_default_str();
  stab_cmd->add_option("--reps", stab.reps, "Perturbations per seed")->capture_default_str();
  stab_cmd->add_option("--k", stab.k, "Mutual k-NN neighbor count")->capture_default_str();
  stab_cmd->add_option("--seeds", stab.seeds, "Number of perturbation seeds")->capture_default_str();
  stab_cmd->add_option("--epsilon", stab.epsilon, "Bandwidth: 'median' or a positive real")->capture_default_str();
  add_common(stab_cmd, stab.common);

  BandwidthArgs bw;
  auto* bw_cmd = app.add_subcommand("bandwidth", "Median-heuristic bandwidth");
  add_snapshot(bw_cmd, bw.snapshot);
  bw_cmd->add_option("--cap", bw.cap, "Subsample cap")->capture_default_str();
  add_common(bw_cmd, bw.common);

  WitnessArgs wit;
  auto* wit_cmd = app.add_subcommand("knn-witness", "Hard k-NN discontinuity vs operator continuity");
  wit_cmd->add_option("--perturbation", wit.perturbation, "Perturbation size")->capture_default_str();
  add_common(wit_cmd, wit.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: usage: " << msg << '\n';
    return 2;
  }

  opgeom::set_thread_count(threads);
  g_start = std::chrono::steady_clock::now();
  for (const Common* c : {&obs.common, &bridge.common, &pred.common, &stab.common, &bw.common, &wit.common})
    g_record_timing = g_record_timing || c->timing;
  try {
    if (*obs_cmd) finish(obs.common, run_observables(obs));
    else if (*bridge_cmd) finish(bridge.common, run_bridge(bridge, *bridge_cmd));
    else if (*pred_cmd) finish(pred.common, run_predict(pred));
    else if (*stab_cmd) finish(stab.common, run_stability(stab));
    else if (*bw_cmd) finish(bw.common, run_bandwidth(bw));
    else if (*wit_cmd) finish(wit.common, run_witness(wit));
  } catch (const opgeom::Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << e.kind() << ": " << msg << '\n';
    return e.kind() == "usage" ? 2 : 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: internal: " << msg << '\n';
    return 1;
  }
  return 0;
}
