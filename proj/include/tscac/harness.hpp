#pragma once

// Experiment plumbing: a flat `key = value` config, single runs with metrics
// and report files, λ / γ sweeps, algorithm comparisons and the critic
// correlation study.
//
// Every run draws its randomness from master_seed:
//   derive(master_seed, "data")    simulator-generated offline datasets
//   derive(master_seed, "eval")    evaluation episodes
//   derive(master_seed, "kl")      reference states for KL diagnostics
//   master_seed itself             trainer seed (see the trainers for the
//                                  per-stage labels below it)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tscac/review.hpp"
#include "tscac/simulator.hpp"
#include "tscac/stochastic.hpp"

namespace tscac {

enum class Algorithm {
  bc,
  a3c_weighted,
  rcpo,
  ddpg_weighted,
  constrained_stochastic,
  constrained_deterministic,
};

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

enum class EnvKind { simulator, review, dataset };
enum class Setting { online, offline };

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  Algorithm algorithm = Algorithm::constrained_stochastic;
  Setting setting = Setting::online;

  EnvKind env = EnvKind::simulator;
  std::string dataset_path;
  SimConfig sim;
  std::size_t data_trajectories = 400;  // simulator offline data, uniform behavior
  ReviewDatasetConfig review;

  // Empty lambdas: 1 for every auxiliary. Empty discounts: 0.9 for the main
  // response, 0 for the auxiliaries. Empty reward_weights: all ones.
  std::vector<double> lambdas;
  std::vector<double> discounts;
  std::vector<double> reward_weights;
  std::vector<std::size_t> actor_hidden{32};
  std::vector<std::size_t> critic_hidden{32};
  double actor_lr = 1e-3;
  double critic_lr = 1e-2;
  std::size_t stage1_iterations = 1000;
  std::size_t stage2_iterations = 2000;
  std::size_t iterations = 2000;
  std::size_t episodes_per_iteration = 16;
  std::size_t batch_size = 64;
  double clip_max = 20.0;
  bool normalize_advantage = false;
  double entropy_bonus = 0.0;
  std::string is_mode = "first_order";
  double ratio_clip = 10.0;
  double min_behavior_prob = 1e-6;
  std::size_t target_refresh = 100;
  std::size_t critic_warmup = 0;
  double divergence_threshold = 1e8;
  std::size_t divergence_patience = 5;

  std::size_t eval_episodes = 200;
  double ncis_cap = 10.0;
  double inverse_temperature = 2.0;  // deterministic action -> item distribution
  std::size_t kl_reference_episodes = 50;

  std::string sweep_parameter;  // lambda | gamma | any config key
  std::vector<std::string> sweep_values;
  std::size_t sweep_replicates = 1;

  std::vector<Algorithm> compare_algorithms;

  std::size_t critic_iterations = 2000;
  double critic_study_lr = 3e-3;
  double critic_shared_gamma = 0.95;
  bool critic_shared_bottom = false;

  // Number of responses of the configured environment.
  std::size_t m() const;
  // Defaults filled in for an environment with m responses.
  std::vector<double> resolved_lambdas() const;
  std::vector<double> resolved_discounts() const;
  std::vector<double> resolved_reward_weights() const;

  // Throws ConfigError on missing or inconsistent settings.
  void validate() const;
};

// Parses `key = value` lines ('#' starts a comment). Unknown keys, repeated
// keys and malformed values raise ConfigError.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sets one key from its text form (the same keys parse_config accepts).
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

// Every key with its resolved value, one per line, in a fixed order; parsing
// the echo gives back an equivalent config.
std::string echo_config(const ExperimentConfig& config);

struct RunReport {
  Algorithm algorithm = Algorithm::bc;
  Setting setting = Setting::online;
  std::uint64_t seed = 0;
  std::string evaluator;             // how scores were produced
  std::vector<double> scores;        // per response
  std::vector<double> kl;            // per auxiliary, constrained_stochastic
  std::vector<double> similarity;    // per auxiliary, constrained_deterministic
  std::optional<double> effective_sample_size;
  bool failed = false;
  std::string failure;
  double wall_clock_seconds = 0.0;
  std::filesystem::path metrics_path;
  std::string config_echo;
  std::vector<MetricRow> metrics;

  double mean_auxiliary_score() const;
  double mean_kl() const;
};

// Shared between the runs of one sweep; holds stage-one results of online
// two-stage runs so points that differ only in stage-two settings reuse them.
struct RunCache {
  std::map<std::string, std::shared_ptr<const TrainResult>> stage_one;
};

struct RunOptions {
  bool write_files = true;
  std::filesystem::path output_dir;  // empty: config.output_dir
  RunCache* cache = nullptr;
};

// Trains and evaluates one config. Divergence gives a report with failed set;
// invalid configs throw before any work or output.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

void write_report_csv(std::ostream& os, const RunReport& report);

struct SweepRow {
  std::string value;
  double numeric_value = 0.0;
  std::vector<double> scores;  // mean over replicates
  double mean_auxiliary = 0.0;
  double mean_kl = 0.0;        // NaN when not measured
  bool flagged = false;
  std::string note;
};

struct SweepTable {
  std::string parameter;
  std::size_t m = 0;
  std::vector<SweepRow> rows;
};

// One row per value, in order. `parameter` is "lambda" (every lambda_i set to
// the value), "gamma" (main-response discount) or any config key.
SweepTable run_sweep(const ExperimentConfig& base, const std::string& parameter,
                     const std::vector<std::string>& values, const RunOptions& options = {});
SweepTable sweep_lambda(const ExperimentConfig& base, const std::vector<double>& lambdas,
                        const RunOptions& options = {});
SweepTable sweep_gamma(const ExperimentConfig& base, const std::vector<double>& gammas,
                       const RunOptions& options = {});

std::vector<double> default_lambda_grid();
std::vector<double> default_gamma_grid();

void write_sweep_csv(std::ostream& os, const SweepTable& table);

// Trend statistics used on sweep tables.
std::vector<double> average_ranks(const std::vector<double>& values);
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);
// Adjacent pairs that break the requested direction.
std::size_t count_inversions(const std::vector<double>& values, bool increasing);

struct ComparisonTable {
  std::vector<std::string> algorithms;
  std::vector<std::vector<double>> scores;  // [row][response]
  std::vector<bool> failed;
  std::vector<std::vector<bool>> best;      // [row][response]
};

// Configs must share environment and master seed.
ComparisonTable compare_algorithms(const std::vector<ExperimentConfig>& configs,
                                   const RunOptions& options = {});
// Marks, per column, every non-failed row holding the column maximum.
std::vector<std::vector<bool>> column_best(const std::vector<std::vector<double>>& scores,
                                           const std::vector<bool>& failed);
void write_comparison_csv(std::ostream& os, const ComparisonTable& table);

struct CriticStudyRow {
  std::size_t response = 0;
  std::optional<double> separate;
  std::optional<double> single;
  std::optional<double> difference;
};

std::vector<CriticStudyRow> critic_study(const ExperimentConfig& config, const RunOptions& options = {});
void write_critic_study_csv(std::ostream& os, const std::vector<CriticStudyRow>& rows);

// The offline dataset the config describes (generated or loaded).
ReplayDataset experiment_dataset(const ExperimentConfig& config);

}  // namespace tscac
