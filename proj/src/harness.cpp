#include "tscac/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "tscac/dataset_io.hpp"
#include "tscac/deterministic.hpp"
#include "tscac/errors.hpp"
#include "tscac/offline.hpp"
#include "tscac/text.hpp"

namespace tscac {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_deterministic(Algorithm a) {
  return a == Algorithm::ddpg_weighted || a == Algorithm::constrained_deterministic ||
         a == Algorithm::rcpo;
}

ISConfig is_config(const ExperimentConfig& c) {
  ISConfig is;
  is.mode = c.is_mode == "full_product" ? ISMode::full_product : ISMode::first_order;
  is.ratio_clip = c.ratio_clip;
  is.min_behavior_prob = c.min_behavior_prob;
  return is;
}

ActorOptions actor_options(const ExperimentConfig& c) {
  ActorOptions a;
  a.normalize_advantage = c.normalize_advantage;
  a.clip_max = c.clip_max;
  a.entropy_bonus = c.entropy_bonus;
  return a;
}

TwoStageConfig two_stage_config(const ExperimentConfig& c) {
  TwoStageConfig t;
  t.actor_hidden = c.actor_hidden;
  t.critic_hidden = c.critic_hidden;
  t.actor_step_size = c.actor_lr;
  t.critic_step_size = c.critic_lr;
  t.stage1_iterations = c.stage1_iterations;
  t.stage2_iterations = c.stage2_iterations;
  t.episodes_per_iteration = c.episodes_per_iteration;
  t.lambdas = c.resolved_lambdas();
  t.discounts = c.resolved_discounts();
  t.actor = actor_options(c);
  t.divergence_threshold = c.divergence_threshold;
  t.divergence_patience = c.divergence_patience;
  t.seed = c.master_seed;
  return t;
}

CombinedConfig combined_config(const ExperimentConfig& c) {
  CombinedConfig t;
  t.actor_hidden = c.actor_hidden;
  t.critic_hidden = c.critic_hidden;
  t.actor_step_size = c.actor_lr;
  t.critic_step_size = c.critic_lr;
  t.iterations = c.iterations;
  t.episodes_per_iteration = c.episodes_per_iteration;
  t.lambdas = c.resolved_lambdas();
  t.reward_weights = c.resolved_reward_weights();
  t.discounts = c.resolved_discounts();
  t.actor = actor_options(c);
  t.divergence_threshold = c.divergence_threshold;
  t.divergence_patience = c.divergence_patience;
  t.seed = c.master_seed;
  return t;
}

OfflineStochasticConfig offline_stochastic_config(const ExperimentConfig& c) {
  OfflineStochasticConfig t;
  t.actor_hidden = c.actor_hidden;
  t.critic_hidden = c.critic_hidden;
  t.actor_step_size = c.actor_lr;
  t.critic_step_size = c.critic_lr;
  t.stage1_iterations = c.stage1_iterations;
  t.stage2_iterations = c.algorithm == Algorithm::a3c_weighted ? c.iterations : c.stage2_iterations;
  t.batch_size = c.batch_size;
  t.lambdas = c.resolved_lambdas();
  t.discounts = c.resolved_discounts();
  t.reward_weights = c.resolved_reward_weights();
  t.is = is_config(c);
  t.actor = actor_options(c);
  t.divergence_threshold = c.divergence_threshold;
  t.divergence_patience = c.divergence_patience;
  t.seed = c.master_seed;
  return t;
}

OfflineDetConfig offline_det_config(const ExperimentConfig& c) {
  OfflineDetConfig t;
  t.actor_hidden = c.actor_hidden;
  t.critic_hidden = c.critic_hidden;
  t.actor_step_size = c.actor_lr;
  t.critic_step_size = c.critic_lr;
  t.critic_warmup = c.critic_warmup;
  t.iterations = c.iterations;
  t.batch_size = c.batch_size;
  t.target_refresh = c.target_refresh;
  t.lambdas = c.resolved_lambdas();
  t.discounts = c.resolved_discounts();
  t.reward_weights = c.resolved_reward_weights();
  t.divergence_threshold = c.divergence_threshold;
  t.divergence_patience = c.divergence_patience;
  t.seed = c.master_seed;
  return t;
}

std::size_t dataset_items(const ReplayDataset& ds) {
  if (auto it = ds.metadata.find("n_items"); it != ds.metadata.end()) return parse_size(it->second);
  std::size_t n = 0;
  for (const auto& traj : ds.trajectories) {
    for (const auto& tr : traj.transitions) {
      if (tr.action_index) n = std::max(n, *tr.action_index + 1);
    }
  }
  return n;
}

// Evaluation states for the KL diagnostic: uniform-policy sessions.
std::vector<Transition> reference_states(const ExperimentConfig& c) {
  SessionSimulator sim(c.sim);
  Rng rng = make_rng(derive_seed(derive_seed(c.master_seed, "kl"), "actions"));
  std::uniform_int_distribution<std::size_t> pick(0, c.sim.n_items - 1);
  std::vector<Transition> out;
  collect_episodes(
      sim, [&](const StateVec&) { return pick(rng); }, c.kl_reference_episodes,
      derive_seed(derive_seed(c.master_seed, "kl"), "episodes"), &out);
  return out;
}

std::vector<Transition> all_transitions(const ReplayDataset& ds) {
  std::vector<Transition> out;
  out.reserve(ds.transition_count());
  for (const auto& traj : ds.trajectories) {
    out.insert(out.end(), traj.transitions.begin(), traj.transitions.end());
  }
  return out;
}

// Stage-one cache key: the echo without the settings stage one ignores.
std::string stage_one_key(const ExperimentConfig& c) {
  ExperimentConfig k = c;
  k.lambdas = std::vector<double>(c.m() - 1, 1.0);
  k.discounts = c.resolved_discounts();
  k.discounts[0] = 0.0;
  k.stage2_iterations = 0;
  k.output_dir = "-";
  k.eval_episodes = 1;
  k.sweep_parameter.clear();
  k.sweep_values.clear();
  k.sweep_replicates = 1;
  k.compare_algorithms.clear();
  return echo_config(k);
}

void train_online_two_stage(const ExperimentConfig& c, const RunOptions& options, TrainResult& result) {
  const auto tcfg = two_stage_config(c);
  const auto& env = c.sim;
  std::shared_ptr<const TrainResult> first;
  std::string key;
  if (options.cache) {
    key = stage_one_key(c);
    if (auto it = options.cache->stage_one.find(key); it != options.cache->stage_one.end()) first = it->second;
  }
  if (!first) {
    auto fresh = std::make_shared<TrainResult>();
    fresh->policies = init_policy_set(env.state_dim, env.n_items, tcfg);
    train_stage_one(env, tcfg, *fresh);
    first = fresh;
    if (options.cache) options.cache->stage_one[key] = first;
  }
  result = *first;
  // Only stage two reads these.
  result.policies.lambdas = LagrangeWeights{tcfg.lambdas};
  result.policies.discounts = DiscountVector(tcfg.discounts);
  result.policies.main_critic.gamma = tcfg.discounts[0];
  if (!result.diverged) train_stage_two(env, tcfg, result);
}

std::vector<double> online_scores(const ExperimentConfig& c, const StochasticPolicy& policy) {
  return evaluate_online(
      c.sim, [&](const StateVec& s) { return policy.greedy(s); }, c.eval_episodes,
      derive_seed(c.master_seed, "eval"));
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

double RunReport::mean_auxiliary_score() const {
  if (scores.size() < 2) return kNaN;
  return std::accumulate(scores.begin() + 1, scores.end(), 0.0) / static_cast<double>(scores.size() - 1);
}

double RunReport::mean_kl() const {
  if (kl.empty()) return kNaN;
  return std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(kl.size());
}

ReplayDataset experiment_dataset(const ExperimentConfig& c) {
  switch (c.env) {
    case EnvKind::simulator:
      return generate_offline_dataset(c.sim, uniform_behavior(c.sim.n_items), c.data_trajectories,
                                      derive_seed(c.master_seed, "data"));
    case EnvKind::review: {
      ReviewLoadOptions opt;
      opt.min_trajectory_length = c.review.min_trajectory_length;
      opt.encoding = ReviewEncoding{c.review.id_dim, c.review.history_window};
      auto ds = prepare_review_dataset(generate_review_dataset(c.review), opt);
      if (ds.trajectories.empty()) throw ConfigError("review: no session reaches min_trajectory_length");
      return ds;
    }
    case EnvKind::dataset: {
      auto ds = read_dataset(fs::path(c.dataset_path));
      if (auto it = ds.metadata.find("source"); it != ds.metadata.end() && it->second == "review") {
        ReviewLoadOptions opt;
        opt.min_trajectory_length = c.review.min_trajectory_length;
        opt.encoding = ReviewEncoding{c.review.id_dim, c.review.history_window};
        ds = prepare_review_dataset(std::move(ds), opt);
      }
      if (ds.transition_count() == 0) throw ConfigError("dataset '" + c.dataset_path + "' is empty");
      return ds;
    }
  }
  throw ConfigError("unknown environment");
}

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunReport rep;
  rep.algorithm = config.algorithm;
  rep.setting = config.setting;
  rep.seed = config.master_seed;
  rep.config_echo = echo_config(config);
  const std::size_t m = config.m();

  if (config.setting == Setting::online) {
    rep.evaluator = "online greedy rollouts: " + std::to_string(config.eval_episodes) +
                    " episodes, seed derive(master_seed, eval)";
    if (config.algorithm == Algorithm::constrained_stochastic) {
      TrainResult result;
      train_online_two_stage(config, options, result);
      rep.metrics = std::move(result.metrics);
      rep.failed = result.diverged;
      rep.failure = result.failure;
      if (!rep.failed) {
        rep.scores = online_scores(config, result.policies.main_policy);
        const auto ref = reference_states(config);
        for (const auto& aux : result.policies.aux_policies) {
          rep.kl.push_back(tscac::mean_kl(result.policies.main_policy, aux, ref));
        }
      }
    } else {
      const auto signal =
          config.algorithm == Algorithm::rcpo ? CombinedSignal::rcpo : CombinedSignal::weighted_sum;
      auto result = train_combined(config.sim, combined_config(config), signal);
      rep.metrics = std::move(result.metrics);
      rep.failed = result.diverged;
      rep.failure = result.failure;
      if (!rep.failed) rep.scores = online_scores(config, result.policy);
    }
  } else {
    const auto ds = experiment_dataset(config);
    if (ds.m != m) throw ConfigError("dataset has m = " + std::to_string(ds.m) + ", config expects " + std::to_string(m));
    NCISConfig ncfg;
    ncfg.cap = config.ncis_cap;
    rep.evaluator = "NCIS over " + std::to_string(ds.transition_count()) +
                    " logged transitions, cap " + format_double(config.ncis_cap);
    auto score_stochastic = [&](const StochasticPolicy& p) {
      const auto r = ncis_evaluate(action_prob(p), ds, ncfg);
      rep.scores = r.scores;
      rep.effective_sample_size = r.effective_sample_size;
    };
    if (is_deterministic(config.algorithm)) {
      const std::size_t n_items = dataset_items(ds);
      const auto table = build_item_table(ds, n_items);
      const auto data = embed_actions(ds, table);
      const auto alg = config.algorithm == Algorithm::rcpo            ? DetAlgorithm::rcpo
                       : config.algorithm == Algorithm::ddpg_weighted ? DetAlgorithm::ddpg_weighted
                                                                      : DetAlgorithm::constrained;
      auto result = train_offline_deterministic(data, m, offline_det_config(config), alg);
      rep.metrics = std::move(result.metrics);
      rep.failed = result.diverged;
      rep.failure = result.failure;
      rep.evaluator += ", items softmax(" + format_double(config.inverse_temperature) + " <a, e_j>)";
      if (!rep.failed) {
        const auto& policy = result.policy;
        const ActionProb pi = [&](const StateVec& s, std::size_t a) {
          return item_distribution(policy.act(s), table, config.inverse_temperature)[a];
        };
        const auto r = ncis_evaluate(pi, ds, ncfg);
        rep.scores = r.scores;
        rep.effective_sample_size = r.effective_sample_size;
        for (const auto& aux : result.aux) {
          double h = 0.0;
          for (const auto& tr : data) h += h_similarity(policy.act(tr.state), aux.act(tr.state));
          rep.similarity.push_back(h / static_cast<double>(data.size()));
        }
      }
    } else if (config.algorithm == Algorithm::bc) {
      BehaviorCloneConfig b;
      b.hidden = config.actor_hidden;
      b.step_size = config.actor_lr;
      b.iterations = config.iterations;
      b.batch_size = config.batch_size;
      b.seed = config.master_seed;
      const auto data = all_transitions(ds);
      auto result = train_behavior_clone(data, dataset_items(ds), m, b);
      rep.metrics = std::move(result.metrics);
      score_stochastic(result.policy);
    } else if (config.algorithm == Algorithm::a3c_weighted) {
      auto result = train_offline_weighted(ds, offline_stochastic_config(config));
      rep.metrics = std::move(result.metrics);
      rep.failed = result.diverged;
      rep.failure = result.failure;
      if (!rep.failed) score_stochastic(result.policy);
    } else {
      auto result = train_offline_two_stage(ds, offline_stochastic_config(config));
      rep.metrics = std::move(result.metrics);
      rep.failed = result.diverged;
      rep.failure = result.failure;
      if (!rep.failed) {
        score_stochastic(result.policies.main_policy);
        const auto data = all_transitions(ds);
        for (const auto& aux : result.policies.aux_policies) {
          rep.kl.push_back(tscac::mean_kl(result.policies.main_policy, aux, data));
        }
      }
    }
  }

  rep.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (options.write_files) {
    const fs::path dir = options.output_dir.empty() ? fs::path(config.output_dir) : options.output_dir;
    fs::create_directories(dir);
    rep.metrics_path = dir / "metrics.csv";
    std::ostringstream metrics;
    write_metrics_csv(metrics, rep.metrics, m, is_deterministic(config.algorithm) && config.setting == Setting::offline);
    write_file(rep.metrics_path, metrics.str());
    write_file(dir / "config.echo", rep.config_echo);
    std::ostringstream report;
    write_report_csv(report, rep);
    write_file(dir / "report.csv", report.str());
  }
  return rep;
}

void write_report_csv(std::ostream& os, const RunReport& r) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + "\"";
  };
  os << "field,value\n";
  os << "algorithm," << to_string(r.algorithm) << "\n";
  os << "setting," << (r.setting == Setting::online ? "online" : "offline") << "\n";
  os << "seed," << r.seed << "\n";
  os << "status," << (r.failed ? "failed" : "ok") << "\n";
  os << "failure," << quote(r.failure) << "\n";
  os << "evaluator," << quote(r.evaluator) << "\n";
  for (std::size_t i = 0; i < r.scores.size(); ++i) os << "score_r" << i << "," << format_double(r.scores[i]) << "\n";
  for (std::size_t i = 0; i < r.kl.size(); ++i) os << "kl_aux" << i + 1 << "," << format_double(r.kl[i]) << "\n";
  for (std::size_t i = 0; i < r.similarity.size(); ++i) {
    os << "similarity_aux" << i + 1 << "," << format_double(r.similarity[i]) << "\n";
  }
  if (r.effective_sample_size) os << "ncis_ess," << format_double(*r.effective_sample_size) << "\n";
  os << "metrics," << quote(r.metrics_path.string()) << "\n";
  os << "config_echo,config.echo\n";
  os << "wall_clock_seconds," << format_double(r.wall_clock_seconds) << "\n";
}

// --- sweeps ------------------------------------------------------------------

std::vector<double> default_lambda_grid() { return {1e-8, 2.56e-6, 1e-4, 1.6e-3, 1.0, 1e4}; }

std::vector<double> default_gamma_grid() { return {0.5, 0.7, 0.9, 0.99, 0.999}; }

namespace {

void apply_sweep_value(ExperimentConfig& c, const std::string& parameter, const std::string& value) {
  if (parameter == "lambda") {
    double v = 0.0;
    try {
      v = parse_double(value);
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + value + "' is not a number");
    }
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("lambda sweep values must be finite and >= 0");
    c.lambdas.assign(c.m() - 1, v);
  } else if (parameter == "gamma") {
    double v = 0.0;
    try {
      v = parse_double(value);
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + value + "' is not a number");
    }
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError("gamma sweep values must lie in [0, 1)");
    c.discounts = c.resolved_discounts();
    c.discounts[0] = v;
  } else {
    set_config_value(c, parameter, value);
  }
}

double numeric_or_nan(const std::string& s) {
  try {
    return parse_double(s);
  } catch (const std::exception&) {
    return kNaN;
  }
}

}  // namespace

SweepTable run_sweep(const ExperimentConfig& base, const std::string& parameter,
                     const std::vector<std::string>& values, const RunOptions& options) {
  base.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (parameter == "lambda" && values.size() < 2) throw ConfigError("lambda sweep needs at least two values");
  // Every point is checked before the first one runs.
  std::vector<ExperimentConfig> points;
  for (const auto& v : values) {
    ExperimentConfig c = base;
    c.sweep_parameter.clear();
    c.sweep_values.clear();
    apply_sweep_value(c, parameter, v);
    c.validate();
    points.push_back(std::move(c));
  }

  RunCache local;
  RunOptions run_opts = options;
  if (!run_opts.cache) run_opts.cache = &local;
  const fs::path root = options.output_dir.empty() ? fs::path(base.output_dir) : options.output_dir;

  SweepTable table;
  table.parameter = parameter;
  table.m = base.m();
  for (std::size_t k = 0; k < points.size(); ++k) {
    SweepRow row;
    row.value = values[k];
    row.numeric_value = numeric_or_nan(values[k]);
    row.scores.assign(table.m, 0.0);
    double kl = 0.0;
    std::size_t ok = 0;
    bool has_kl = true;
    for (std::size_t r = 0; r < base.sweep_replicates; ++r) {
      ExperimentConfig c = points[k];
      c.master_seed = base.master_seed + r;
      fs::path dir = root / ("point_" + std::to_string(k));
      if (base.sweep_replicates > 1) dir /= "rep_" + std::to_string(r);
      run_opts.output_dir = dir;
      try {
        const auto rep = run_experiment(c, run_opts);
        if (rep.failed) {
          row.flagged = true;
          row.note += (row.note.empty() ? "" : "; ") + rep.failure;
          continue;
        }
        for (std::size_t i = 0; i < table.m; ++i) row.scores[i] += rep.scores[i];
        if (rep.kl.empty()) has_kl = false;
        else kl += rep.mean_kl();
        ++ok;
      } catch (const Error& e) {
        row.flagged = true;
        row.note += (row.note.empty() ? "" : "; ") + std::string(e.what());
      }
    }
    if (ok == 0) {
      row.scores.assign(table.m, kNaN);
      row.mean_auxiliary = kNaN;
      row.mean_kl = kNaN;
    } else {
      for (double& s : row.scores) s /= static_cast<double>(ok);
      row.mean_auxiliary = std::accumulate(row.scores.begin() + 1, row.scores.end(), 0.0) /
                           static_cast<double>(table.m - 1);
      row.mean_kl = has_kl ? kl / static_cast<double>(ok) : kNaN;
    }
    table.rows.push_back(std::move(row));
  }

  if (options.write_files) {
    fs::create_directories(root);
    std::ostringstream os;
    write_sweep_csv(os, table);
    write_file(root / "sweep.csv", os.str());
  }
  return table;
}

SweepTable sweep_lambda(const ExperimentConfig& base, const std::vector<double>& lambdas,
                        const RunOptions& options) {
  std::vector<std::string> values;
  for (double l : lambdas) values.push_back(format_double(l));
  return run_sweep(base, "lambda", values, options);
}

SweepTable sweep_gamma(const ExperimentConfig& base, const std::vector<double>& gammas,
                       const RunOptions& options) {
  std::vector<std::string> values;
  for (double g : gammas) values.push_back(format_double(g));
  return run_sweep(base, "gamma", values, options);
}

void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  os << t.parameter;
  for (std::size_t i = 0; i < t.m; ++i) os << ",score_r" << i;
  os << ",mean_aux,mean_kl,flagged,note\n";
  for (const auto& r : t.rows) {
    os << r.value;
    for (double s : r.scores) os << "," << format_double(s);
    os << "," << format_double(r.mean_auxiliary) << "," << format_double(r.mean_kl) << ","
       << (r.flagged ? 1 : 0) << ",\"";
    for (char ch : r.note) os << (ch == '"' ? '\'' : ch);
    os << "\"\n";
  }
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman: lengths differ");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) return std::nullopt;
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::size_t count_inversions(const std::vector<double>& values, bool increasing) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const bool bad = increasing ? values[i + 1] < values[i] : values[i + 1] > values[i];
    if (bad || std::isnan(values[i]) || std::isnan(values[i + 1])) ++n;
  }
  return n;
}

// --- comparisons -------------------------------------------------------------

namespace {

// The parts of a config that define the environment and seeds.
std::string environment_signature(const ExperimentConfig& c) {
  std::string sig;
  std::istringstream is(echo_config(c));
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("master_seed", 0) == 0 || line.rfind("setting", 0) == 0 || line.rfind("env.", 0) == 0 ||
        line.rfind("sim.", 0) == 0 || line.rfind("review.", 0) == 0 || line.rfind("data.", 0) == 0 ||
        line.rfind("eval.", 0) == 0) {
      sig += line + "\n";
    }
  }
  return sig;
}

}  // namespace

std::vector<std::vector<bool>> column_best(const std::vector<std::vector<double>>& scores,
                                           const std::vector<bool>& failed) {
  std::vector<std::vector<bool>> best(scores.size());
  const std::size_t cols = scores.empty() ? 0 : scores.front().size();
  for (std::size_t r = 0; r < scores.size(); ++r) best[r].assign(scores[r].size(), false);
  for (std::size_t c = 0; c < cols; ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t r = 0; r < scores.size(); ++r) {
      if (failed[r] || std::isnan(scores[r][c])) continue;
      mx = std::max(mx, scores[r][c]);
      any = true;
    }
    if (!any) continue;
    for (std::size_t r = 0; r < scores.size(); ++r) {
      if (!failed[r] && scores[r][c] == mx) best[r][c] = true;
    }
  }
  return best;
}

ComparisonTable compare_algorithms(const std::vector<ExperimentConfig>& configs, const RunOptions& options) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  for (const auto& c : configs) c.validate();
  const std::string sig = environment_signature(configs.front());
  for (const auto& c : configs) {
    if (environment_signature(c) != sig) {
      throw ConfigError("compared configs must share environment, evaluation and master_seed");
    }
  }
  const std::size_t m = configs.front().m();
  const fs::path root = options.output_dir.empty() ? fs::path(configs.front().output_dir) : options.output_dir;
  ComparisonTable t;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const auto& c = configs[k];
    t.algorithms.push_back(to_string(c.algorithm));
    RunOptions o = options;
    o.output_dir = root / (std::to_string(k) + "_" + to_string(c.algorithm));
    try {
      const auto rep = run_experiment(c, o);
      t.failed.push_back(rep.failed);
      t.scores.push_back(rep.failed ? std::vector<double>(m, kNaN) : rep.scores);
    } catch (const Error&) {
      t.failed.push_back(true);
      t.scores.push_back(std::vector<double>(m, kNaN));
    }
  }
  t.best = column_best(t.scores, t.failed);
  if (options.write_files) {
    fs::create_directories(root);
    std::ostringstream os;
    write_comparison_csv(os, t);
    write_file(root / "compare.csv", os.str());
  }
  return t;
}

void write_comparison_csv(std::ostream& os, const ComparisonTable& t) {
  const std::size_t m = t.scores.empty() ? 0 : t.scores.front().size();
  os << "algorithm,status";
  for (std::size_t i = 0; i < m; ++i) os << ",score_r" << i;
  os << "\n";
  for (std::size_t r = 0; r < t.algorithms.size(); ++r) {
    os << t.algorithms[r] << "," << (t.failed[r] ? "failed" : "ok");
    for (std::size_t i = 0; i < m; ++i) {
      os << "," << format_double(t.scores[r][i]);
      if (t.best[r][i]) os << "*";
    }
    os << "\n";
  }
}

// --- critic study ------------------------------------------------------------

std::vector<CriticStudyRow> critic_study(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto ds = experiment_dataset(config);
  const auto discounts = config.resolved_discounts();
  MultiCriticConfig base;
  base.discounts = discounts;
  base.shared_gamma = config.critic_shared_gamma;
  base.hidden = config.critic_hidden;
  base.step_size = config.critic_study_lr;
  base.iterations = config.critic_iterations;
  base.batch_size = config.batch_size;
  base.shared_bottom = config.critic_shared_bottom;
  base.seed = config.master_seed;

  MultiCriticConfig sep = base;
  sep.mode = CriticMode::separate;
  MultiCriticConfig single = base;
  single.mode = CriticMode::single_summed;
  const auto a = multi_critic_train(ds, sep);
  const auto b = multi_critic_train(ds, single);
  std::vector<std::size_t> responses(ds.m);
  std::iota(responses.begin(), responses.end(), 0);
  const DiscountVector dv(discounts);
  const auto ca = critic_return_correlation(a, ds, dv, responses);
  const auto cb = critic_return_correlation(b, ds, dv, responses);
  std::vector<CriticStudyRow> rows;
  for (std::size_t i = 0; i < ds.m; ++i) {
    CriticStudyRow row;
    row.response = i;
    row.separate = ca[i];
    row.single = cb[i];
    if (ca[i] && cb[i]) row.difference = *ca[i] - *cb[i];
    rows.push_back(row);
  }
  if (options.write_files) {
    const fs::path dir = options.output_dir.empty() ? fs::path(config.output_dir) : options.output_dir;
    fs::create_directories(dir);
    std::ostringstream os;
    write_critic_study_csv(os, rows);
    write_file(dir / "critic_study.csv", os.str());
    write_file(dir / "config.echo", echo_config(config));
  }
  return rows;
}

void write_critic_study_csv(std::ostream& os, const std::vector<CriticStudyRow>& rows) {
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("undefined"); };
  os << "response,separate,single_summed,difference\n";
  for (const auto& r : rows) {
    os << r.response << "," << cell(r.separate) << "," << cell(r.single) << "," << cell(r.difference) << "\n";
  }
}

}  // namespace tscac
