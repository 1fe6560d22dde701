#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madmix/baselines.hpp"
#include "madmix/mixflow.hpp"

namespace madmix {

/// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public MadmixError {
 public:
  using MadmixError::MadmixError;
};

struct ExperimentConfig {
  std::string experiment = "toy1d";  ///< toy1d | toy2d | toy3d | ising | gmm | spikeslab
  std::string method = "madmix";     ///< madmix | gibbs | meanfield
  std::size_t n_flow = 0;            ///< 0 selects the per-experiment default
  double xi = std::numbers::pi / 16.0;
  std::uint64_t seed = 0;
  std::size_t samples = 0;           ///< 0 selects the per-experiment default
  std::size_t leapfrog_steps = 10;
  double step_size = 0.05;
  std::string data;                  ///< optional CSV; last column is y for spikeslab
  std::string out_dir;

  std::uint64_t target_seed = 0;     ///< seed of the random toy PMF / synthetic data
  std::size_t n_u = 32;              ///< uniform draws per state for marginal PMFs
  std::size_t timing_reps = 10;

  std::size_t ising_m = 5;
  double ising_beta = 1.0;
  std::size_t gmm_k = 2;
  std::size_t gmm_n = 50;
  std::size_t gmm_d = 2;
  double gmm_separation = 3.0;
  std::size_t ss_n = 100;
  std::size_t ss_p = 8;
  std::size_t ss_nonzero = 3;
  double ss_snr = 5.0;
  double reference_scale = 0.1;

  /// Fills zero-valued defaults and checks every field; throws ConfigError.
  ExperimentConfig resolved() const;
  bool enumerable() const;
  bool mixed() const { return experiment == "gmm" || experiment == "spikeslab"; }
};

std::size_t default_flow_length(const std::string& experiment, std::size_t ising_m);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Unknown keys are rejected with ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

struct ResultRecord {
  std::string method;
  std::string experiment;
  std::string metric;  ///< kl | neg_elbo | tv | seconds_density | seconds_sample
  double value = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  bool available = true;

  friend bool operator==(const ResultRecord& a, const ResultRecord& b);
};

nlohmann::json to_json(const ResultRecord& r);
ResultRecord record_from_json(const nlohmann::json& j);
std::string records_to_csv(const std::vector<ResultRecord>& records);
std::vector<ResultRecord> records_from_csv(const std::string& text);

/// Discrete target of an enumerable or Ising experiment.
TargetPtr make_discrete_target(const ExperimentConfig& cfg);
MixedTargetPtr make_mixed_target(const ExperimentConfig& cfg);

struct PmfTable {
  std::vector<double> exact;
  std::vector<double> approx;
  std::vector<std::size_t> shape;
};

/// Flattened exact and approximate PMFs for an enumerable experiment.
PmfTable pmf_table(const ExperimentConfig& cfg);

struct ExperimentOutput {
  std::vector<ResultRecord> records;
  std::optional<PmfTable> pmf;
  std::string samples_csv;  ///< mixed experiments: typed sample dump
};

ExperimentOutput run_experiment_full(const ExperimentConfig& cfg);
std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg);
std::vector<ResultRecord> timing_probe(const ExperimentConfig& cfg);

/// Median wall-clock seconds of one Gibbs sweep and one MAD forward pass
/// on the same target, over `reps` repetitions of `batch` operations each.
struct PassCosts {
  double gibbs_sweep = 0.0;
  double mad_pass = 0.0;
};
PassCosts measure_pass_costs(const FullConditionalTarget& target, std::size_t reps,
                             std::size_t batch, std::uint64_t seed);

/// Two-block target on {0..7}^2 whose mass sits on {0..3}^2 and {4..7}^2
/// with identical within-block tables, with flows started on each block.
struct WeightProblem {
  TargetPtr target;
  std::shared_ptr<WeightedPair> pair;
};
WeightProblem two_mode_weight_problem(std::size_t n_flow, std::uint64_t seed);

struct WeightDemo {
  WeightFit fit;
  Estimate gradient_at_start;
  Estimate finite_difference;
};
WeightDemo weight_demo(const ExperimentConfig& cfg, const WeightOptions& options);

/// CSV with continuous columns as %.17g floats and discrete columns as integers.
std::string mixed_samples_csv(const MixedTarget& target, const std::vector<MixedState>& states);

/// Writes records.csv, manifest.json and any PMF/sample dumps into `dir`.
void write_outputs(const std::string& dir, const ExperimentConfig& cfg,
                   const ExperimentOutput& out, const std::string& prefix);

/// Output directory: explicit value, else $MADMIX_OUT_DIR, else "madmix_out".
std::string resolve_out_dir(const std::string& explicit_dir);

}  // namespace madmix
