#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>

#include "tscac/errors.hpp"
#include "tscac/harness.hpp"
#include "tscac/text.hpp"

namespace tscac {

namespace {

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string fmt_size(std::size_t v) { return std::to_string(v); }

std::vector<std::string> list_items(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) {
    const auto t = trim(part);
    if (t.empty()) throw std::invalid_argument("empty list entry");
    out.emplace_back(t);
  }
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : list_items(s)) out.push_back(parse_double(item));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : list_items(s)) out.push_back(parse_size(item));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

bool parse_bool(const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw std::invalid_argument("expected true or false");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string env_name(EnvKind e) {
  switch (e) {
    case EnvKind::simulator:
      return "simulator";
    case EnvKind::review:
      return "review";
    case EnvKind::dataset:
      return "dataset";
  }
  return "simulator";
}

EnvKind parse_env(const std::string& s) {
  if (s == "simulator") return EnvKind::simulator;
  if (s == "review") return EnvKind::review;
  if (s == "dataset") return EnvKind::dataset;
  throw std::invalid_argument("expected simulator, review or dataset");
}

Setting parse_setting(const std::string& s) {
  if (s == "online") return Setting::online;
  if (s == "offline") return Setting::offline;
  throw std::invalid_argument("expected online or offline");
}

#define TSCAC_DOUBLE(key, field)                                                          \
  Key {                                                                                   \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(v); },   \
        [](const ExperimentConfig& c) { return format_double(c.field); }                  \
  }
#define TSCAC_SIZE(key, field)                                                          \
  Key {                                                                                 \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_size(v); },   \
        [](const ExperimentConfig& c) { return fmt_size(c.field); }                     \
  }
#define TSCAC_U64(key, field)                                                          \
  Key {                                                                                \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_u64(v); },   \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }              \
  }
#define TSCAC_BOOL(key, field)                                                          \
  Key {                                                                                 \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(v); },   \
        [](const ExperimentConfig& c) { return fmt_bool(c.field); }                     \
  }
#define TSCAC_DOUBLES(key, field)                                                        \
  Key {                                                                                  \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_list(v); },    \
        [](const ExperimentConfig& c) { return join_doubles(c.field, ','); }             \
  }
#define TSCAC_SIZES(key, field)                                                             \
  Key {                                                                                     \
    key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_size_list(v); },  \
        [](const ExperimentConfig& c) { return join_sizes(c.field); }                       \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      TSCAC_U64("master_seed", master_seed),
      Key{"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = std::string(trim(v)); },
          [](const ExperimentConfig& c) { return c.output_dir; }},
      Key{"algorithm", [](ExperimentConfig& c, const std::string& v) { c.algorithm = parse_algorithm(std::string(trim(v))); },
          [](const ExperimentConfig& c) { return to_string(c.algorithm); }},
      Key{"setting", [](ExperimentConfig& c, const std::string& v) { c.setting = parse_setting(std::string(trim(v))); },
          [](const ExperimentConfig& c) { return std::string(c.setting == Setting::online ? "online" : "offline"); }},
      Key{"env.kind", [](ExperimentConfig& c, const std::string& v) { c.env = parse_env(std::string(trim(v))); },
          [](const ExperimentConfig& c) { return env_name(c.env); }},
      Key{"env.path", [](ExperimentConfig& c, const std::string& v) { c.dataset_path = std::string(trim(v)); },
          [](const ExperimentConfig& c) { return c.dataset_path; }},
      TSCAC_SIZE("sim.n_items", sim.n_items),
      TSCAC_SIZE("sim.state_dim", sim.state_dim),
      TSCAC_SIZE("sim.embed_dim", sim.embed_dim),
      TSCAC_SIZE("sim.m", sim.m),
      TSCAC_DOUBLE("sim.sparse_prob_scale", sim.sparse_prob_scale),
      TSCAC_SIZE("sim.session_length_min", sim.session_length_range.first),
      TSCAC_SIZE("sim.session_length_max", sim.session_length_range.second),
      TSCAC_DOUBLE("sim.dense_noise_std", sim.dense_noise_std),
      TSCAC_DOUBLE("sim.dense_scale", sim.dense_scale),
      TSCAC_U64("sim.seed", sim.seed),
      TSCAC_SIZE("data.trajectories", data_trajectories),
      TSCAC_SIZE("review.n_users", review.n_users),
      TSCAC_SIZE("review.n_items", review.n_items),
      TSCAC_SIZE("review.n_reviews", review.n_reviews),
      TSCAC_SIZE("review.min_trajectory_length", review.min_trajectory_length),
      TSCAC_SIZE("review.history_window", review.history_window),
      TSCAC_SIZE("review.length_min", review.review_length_range.first),
      TSCAC_SIZE("review.length_max", review.review_length_range.second),
      TSCAC_SIZE("review.id_dim", review.id_dim),
      TSCAC_SIZE("review.latent_dim", review.latent_dim),
      TSCAC_DOUBLE("review.behavior_sharpness", review.behavior_sharpness),
      TSCAC_DOUBLE("review.behavior_uniform_mix", review.behavior_uniform_mix),
      TSCAC_DOUBLE("review.score_noise_std", review.score_noise_std),
      TSCAC_U64("review.seed", review.seed),
      TSCAC_DOUBLES("train.lambdas", lambdas),
      TSCAC_DOUBLES("train.discounts", discounts),
      TSCAC_DOUBLES("train.reward_weights", reward_weights),
      TSCAC_SIZES("train.actor_hidden", actor_hidden),
      TSCAC_SIZES("train.critic_hidden", critic_hidden),
      TSCAC_DOUBLE("train.actor_lr", actor_lr),
      TSCAC_DOUBLE("train.critic_lr", critic_lr),
      TSCAC_SIZE("train.stage1_iterations", stage1_iterations),
      TSCAC_SIZE("train.stage2_iterations", stage2_iterations),
      TSCAC_SIZE("train.iterations", iterations),
      TSCAC_SIZE("train.episodes_per_iteration", episodes_per_iteration),
      TSCAC_SIZE("train.batch_size", batch_size),
      TSCAC_DOUBLE("train.clip_max", clip_max),
      TSCAC_BOOL("train.normalize_advantage", normalize_advantage),
      TSCAC_DOUBLE("train.entropy_bonus", entropy_bonus),
      Key{"train.is_mode", [](ExperimentConfig& c, const std::string& v) { c.is_mode = std::string(trim(v)); },
          [](const ExperimentConfig& c) { return c.is_mode; }},
      TSCAC_DOUBLE("train.ratio_clip", ratio_clip),
      TSCAC_DOUBLE("train.min_behavior_prob", min_behavior_prob),
      TSCAC_SIZE("train.target_refresh", target_refresh),
      TSCAC_SIZE("train.critic_warmup", critic_warmup),
      TSCAC_DOUBLE("train.divergence_threshold", divergence_threshold),
      TSCAC_SIZE("train.divergence_patience", divergence_patience),
      TSCAC_SIZE("eval.episodes", eval_episodes),
      TSCAC_DOUBLE("eval.ncis_cap", ncis_cap),
      TSCAC_DOUBLE("eval.inverse_temperature", inverse_temperature),
      TSCAC_SIZE("eval.kl_reference_episodes", kl_reference_episodes),
      Key{"sweep.parameter", [](ExperimentConfig& c, const std::string& v) { c.sweep_parameter = std::string(trim(v)); },
          [](const ExperimentConfig& c) { return c.sweep_parameter; }},
      Key{"sweep.values", [](ExperimentConfig& c, const std::string& v) { c.sweep_values = list_items(v); },
          [](const ExperimentConfig& c) { return join_strings(c.sweep_values); }},
      TSCAC_SIZE("sweep.replicates", sweep_replicates),
      Key{"compare.algorithms",
          [](ExperimentConfig& c, const std::string& v) {
            c.compare_algorithms.clear();
            for (const auto& a : list_items(v)) c.compare_algorithms.push_back(parse_algorithm(a));
          },
          [](const ExperimentConfig& c) {
            std::vector<std::string> names;
            for (auto a : c.compare_algorithms) names.push_back(to_string(a));
            return join_strings(names);
          }},
      TSCAC_SIZE("critic.iterations", critic_iterations),
      TSCAC_DOUBLE("critic.lr", critic_study_lr),
      TSCAC_DOUBLE("critic.shared_gamma", critic_shared_gamma),
      TSCAC_BOOL("critic.shared_bottom", critic_shared_bottom),
  };
  return table;
}

#undef TSCAC_DOUBLE
#undef TSCAC_SIZE
#undef TSCAC_U64
#undef TSCAC_BOOL
#undef TSCAC_DOUBLES
#undef TSCAC_SIZES

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

// Response count of a dataset file from its header, without reading the body.
std::size_t dataset_file_m(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("env.path: cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line) && line.rfind("#", 0) == 0) {
    const auto body = trim(std::string_view(line).substr(1));
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) continue;
    if (trim(body.substr(0, eq)) == "m") {
      try {
        return parse_size(body.substr(eq + 1));
      } catch (const std::exception&) {
        break;
      }
    }
  }
  throw ConfigError("env.path: '" + path + "' has no '# m = ' header");
}

bool online_capable(Algorithm a) {
  return a == Algorithm::a3c_weighted || a == Algorithm::rcpo || a == Algorithm::constrained_stochastic;
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::bc:
      return "bc";
    case Algorithm::a3c_weighted:
      return "a3c_weighted";
    case Algorithm::rcpo:
      return "rcpo";
    case Algorithm::ddpg_weighted:
      return "ddpg_weighted";
    case Algorithm::constrained_stochastic:
      return "constrained_stochastic";
    case Algorithm::constrained_deterministic:
      return "constrained_deterministic";
  }
  return "bc";
}

Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::bc, Algorithm::a3c_weighted, Algorithm::rcpo, Algorithm::ddpg_weighted,
                 Algorithm::constrained_stochastic, Algorithm::constrained_deterministic}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + s + "'");
}

std::size_t ExperimentConfig::m() const {
  switch (env) {
    case EnvKind::simulator:
      return sim.m;
    case EnvKind::review:
      return review.m;
    case EnvKind::dataset:
      return dataset_file_m(dataset_path);
  }
  return 0;
}

std::vector<double> ExperimentConfig::resolved_lambdas() const {
  if (!lambdas.empty()) return lambdas;
  return std::vector<double>(m() - 1, 1.0);
}

std::vector<double> ExperimentConfig::resolved_discounts() const {
  if (!discounts.empty()) return discounts;
  std::vector<double> d(m(), 0.0);
  d[0] = 0.9;
  return d;
}

std::vector<double> ExperimentConfig::resolved_reward_weights() const {
  if (!reward_weights.empty()) return reward_weights;
  return std::vector<double>(m(), 1.0);
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  try {
    if (env == EnvKind::simulator) sim.validate();
    if (env == EnvKind::review) review.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  require(env != EnvKind::dataset || !dataset_path.empty(), "env.kind = dataset needs env.path");
  require(!output_dir.empty(), "output_dir must not be empty");
  if (env != EnvKind::simulator) {
    require(setting == Setting::offline, "env.kind = " + env_name(env) + " only supports setting = offline");
  }
  if (setting == Setting::online) {
    require(online_capable(algorithm),
            "algorithm " + to_string(algorithm) + " learns from logged data; use setting = offline");
  }
  const std::size_t n = m();
  require(n >= 2, "environment needs at least two responses");
  require(lambdas.empty() || lambdas.size() == n - 1,
          "train.lambdas needs " + std::to_string(n - 1) + " entries (one per auxiliary response)");
  require(discounts.empty() || discounts.size() == n,
          "train.discounts needs " + std::to_string(n) + " entries");
  require(reward_weights.empty() || reward_weights.size() == n,
          "train.reward_weights needs " + std::to_string(n) + " entries");
  for (double l : resolved_lambdas()) {
    require(std::isfinite(l) && l >= 0.0, "train.lambdas entries must be finite and >= 0");
  }
  for (double g : resolved_discounts()) {
    require(g >= 0.0 && g < 1.0, "train.discounts entries must lie in [0, 1)");
  }
  for (double w : resolved_reward_weights()) require(std::isfinite(w), "train.reward_weights must be finite");
  if (algorithm == Algorithm::constrained_stochastic || algorithm == Algorithm::constrained_deterministic) {
    double sum = 0.0;
    for (double l : resolved_lambdas()) sum += l;
    require(sum > 0.0, "constrained algorithms need at least one positive lambda");
  }
  for (std::size_t h : actor_hidden) require(h > 0, "train.actor_hidden widths must be positive");
  for (std::size_t h : critic_hidden) require(h > 0, "train.critic_hidden widths must be positive");
  require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  require(episodes_per_iteration > 0, "train.episodes_per_iteration must be positive");
  require(batch_size > 0, "train.batch_size must be positive");
  require(target_refresh > 0, "train.target_refresh must be positive");
  require(clip_max > 0.0, "train.clip_max must be positive");
  require(is_mode == "first_order" || is_mode == "full_product",
          "train.is_mode must be first_order or full_product");
  require(ratio_clip >= 1.0, "train.ratio_clip must be >= 1");
  require(min_behavior_prob > 0.0 && min_behavior_prob <= 1.0, "train.min_behavior_prob must lie in (0, 1]");
  require(divergence_patience > 0, "train.divergence_patience must be positive");
  require(eval_episodes > 0, "eval.episodes must be positive");
  require(ncis_cap > 0.0, "eval.ncis_cap must be positive");
  require(inverse_temperature > 0.0, "eval.inverse_temperature must be positive");
  require(kl_reference_episodes > 0, "eval.kl_reference_episodes must be positive");
  require(env != EnvKind::simulator || setting == Setting::online || data_trajectories > 0,
          "data.trajectories must be positive");
  require(sweep_parameter.empty() == sweep_values.empty(),
          "sweep.parameter and sweep.values must be given together");
  require(sweep_replicates > 0, "sweep.replicates must be positive");
  require(critic_iterations > 0 && critic_study_lr > 0.0, "critic study settings must be positive");
  require(critic_shared_gamma >= 0.0 && critic_shared_gamma < 1.0, "critic.shared_gamma must lie in [0, 1)");
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  try {
    k->set(config, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in);
}

std::string echo_config(const ExperimentConfig& config) {
  ExperimentConfig resolved = config;
  resolved.lambdas = config.resolved_lambdas();
  resolved.discounts = config.resolved_discounts();
  resolved.reward_weights = config.resolved_reward_weights();
  std::ostringstream os;
  for (const auto& k : keys()) os << k.name << " = " << k.get(resolved) << "\n";
  return os.str();
}

}  // namespace tscac
