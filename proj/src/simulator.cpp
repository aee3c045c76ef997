#include "tscac/simulator.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tscac/errors.hpp"

namespace tscac {

namespace {

constexpr double kInterestDecay = 0.9;
constexpr double kEngagementDecay = 0.85;
constexpr double kTraceDecay = 0.5;
constexpr double kDepthCost = 1.5;
constexpr double kMaxDepth = 0.35;
constexpr double kInteractionBoost = 0.02;
constexpr double kPersonalWeight = 0.5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(const double* a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

void SimConfig::validate() const {
  if (n_items == 0) throw InvalidArgument("sim: n_items must be positive");
  if (embed_dim == 0) throw InvalidArgument("sim: embed_dim must be positive");
  if (m < 2) throw InvalidArgument("sim: m must be >= 2 (one main + one auxiliary response)");
  if (state_dim < embed_dim + 2 + m) {
    throw InvalidArgument("sim: state_dim must be >= embed_dim + 2 + m = " +
                          std::to_string(embed_dim + 2 + m));
  }
  if (!(sparse_prob_scale > 0.0 && sparse_prob_scale <= 1.0)) {
    throw InvalidArgument("sim: sparse_prob_scale must lie in (0, 1]");
  }
  const auto [lo, hi] = session_length_range;
  if (lo == 0 || lo > hi) throw InvalidArgument("sim: session length range must satisfy 1 <= min <= max");
  if (!(dense_noise_std >= 0.0)) throw InvalidArgument("sim: dense_noise_std must be >= 0");
  if (!(dense_scale > 0.0)) throw InvalidArgument("sim: dense_scale must be positive");
}

SessionSimulator::SessionSimulator(SimConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng = make_rng(derive_seed(config_.seed, "sim/latent"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t n = config_.n_items;
  const std::size_t k = config_.embed_dim;
  const double vec_scale = 1.5 / std::sqrt(static_cast<double>(k));

  item_vectors_.assign(config_.m, std::vector<std::vector<double>>(n, std::vector<double>(k)));
  item_bias_.assign(config_.m, std::vector<double>(n));
  item_topic_.assign(n, std::vector<double>(k));
  depth_.resize(n);
  quality_.resize(n);
  for (std::size_t i = 0; i < config_.m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (auto& v : item_vectors_[i][j]) v = vec_scale * normal(rng);
      item_bias_[i][j] = i == 0 ? 0.0 : -1.0 + 1.2 * normal(rng);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (auto& v : item_topic_[j]) v = normal(rng) / std::sqrt(static_cast<double>(k));
    depth_[j] = kMaxDepth * unif(rng);
    quality_[j] = -kDepthCost * depth_[j] + 0.05 * normal(rng);
  }
  state_.terminal = true;
}

double SessionSimulator::affinity(const StateVec& state, std::size_t item,
                                  std::size_t response) const {
  if (item >= config_.n_items) throw InvalidArgument("sim: item out of range");
  if (response >= config_.m) throw InvalidArgument("sim: response index out of range");
  if (state.features.size() != config_.state_dim) throw DimensionError("sim: state dimension");
  return item_bias_[response][item] + dot(state.features.data(), item_vectors_[response][item]);
}

double SessionSimulator::dense_mean(const StateVec& state, std::size_t item) const {
  const double engagement = state.features[config_.embed_dim];
  return 1.0 + quality_[item] + engagement + kPersonalWeight * affinity(state, item, 0);
}

double SessionSimulator::sparse_fire_probability(const StateVec& state, std::size_t item,
                                                 std::size_t response) const {
  if (response == 0) throw InvalidArgument("sim: response 0 is dense");
  return config_.sparse_prob_scale * sigmoid(affinity(state, item, response));
}

double SessionSimulator::remaining_fraction() const {
  return static_cast<double>(length_ - steps_) /
         static_cast<double>(config_.session_length_range.second);
}

StateVec SessionSimulator::reset(std::uint64_t episode_seed) {
  rng_ = make_rng(derive_seed(derive_seed(config_.seed, "sim/episode"), episode_seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto [lo, hi] = config_.session_length_range;
  std::uniform_int_distribution<std::size_t> len(lo, hi);
  length_ = len(rng_);
  steps_ = 0;
  state_ = StateVec{std::vector<double>(config_.state_dim, 0.0), false};
  for (std::size_t k = 0; k < config_.embed_dim; ++k) state_.features[k] = 0.7 * normal(rng_);
  state_.features[config_.embed_dim + 1 + config_.m] = remaining_fraction();
  for (std::size_t k = config_.embed_dim + 2 + config_.m; k < config_.state_dim; ++k) {
    state_.features[k] = normal(rng_);
  }
  return state_;
}

std::vector<double> SessionSimulator::fold(const StateVec& state, std::size_t item,
                                           const ResponseVector& response) const {
  std::vector<double> f = state.features;
  const std::size_t k = config_.embed_dim;
  for (std::size_t d = 0; d < k; ++d) {
    f[d] = kInterestDecay * f[d] + (1.0 - kInterestDecay) * item_topic_[item][d];
  }
  double interactions = 0.0;
  for (std::size_t i = 1; i < config_.m; ++i) interactions += response[i];
  f[k] = kEngagementDecay * f[k] + depth_[item] + kInteractionBoost * interactions;
  for (std::size_t i = 0; i < config_.m; ++i) {
    const double r = i == 0 ? response[0] / config_.dense_scale : response[i];
    f[k + 1 + i] = kTraceDecay * f[k + 1 + i] + (1.0 - kTraceDecay) * r;
  }
  f[k + 1 + config_.m] = remaining_fraction();
  return f;
}

StepResult SessionSimulator::step(std::size_t item) {
  if (state_.terminal) throw InvalidArgument("sim: step called on a terminal state");
  if (item >= config_.n_items) {
    throw InvalidArgument("sim: item " + std::to_string(item) + " out of range [0, " +
                          std::to_string(config_.n_items) + ")");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ResponseVector r{std::vector<double>(config_.m, 0.0)};
  const double noise = config_.dense_noise_std > 0.0 ? config_.dense_noise_std * normal(rng_) : 0.0;
  r.values[0] = config_.dense_scale * std::max(0.0, dense_mean(state_, item) + noise);
  for (std::size_t i = 1; i < config_.m; ++i) {
    r.values[i] = unif(rng_) < sparse_fire_probability(state_, item, i) ? 1.0 : 0.0;
  }
  ++steps_;
  const bool done = steps_ >= length_;
  StepResult out;
  out.response = r;
  out.done = done;
  if (done) {
    out.next_state = StateVec{std::vector<double>(config_.state_dim, 0.0), true};
  } else {
    out.next_state = StateVec{fold(state_, item, r), false};
  }
  state_ = out.next_state;
  return out;
}

BehaviorPolicy uniform_behavior(std::size_t n_items) {
  return [n_items](const StateVec&) {
    return std::vector<double>(n_items, 1.0 / static_cast<double>(n_items));
  };
}

ReplayDataset generate_offline_dataset(const SimConfig& config, const BehaviorPolicy& behavior,
                                       std::size_t n_trajectories, std::uint64_t seed) {
  SessionSimulator sim(config);
  ReplayDataset ds;
  ds.m = config.m;
  ds.metadata["source"] = "simulator";
  ds.metadata["n_items"] = std::to_string(config.n_items);
  ds.metadata["sim_seed"] = std::to_string(config.seed);
  ds.metadata["generator_seed"] = std::to_string(seed);
  Rng rng = make_rng(derive_seed(seed, "dataset/actions"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::uint64_t episode_root = derive_seed(seed, "dataset/episodes");
  for (std::size_t e = 0; e < n_trajectories; ++e) {
    Trajectory traj;
    traj.session_id = "s" + std::to_string(e);
    StateVec s = sim.reset(derive_seed(episode_root, e));
    while (true) {
      const auto probs = behavior(s);
      if (probs.size() != config.n_items) {
        throw DimensionError("behavior policy returned " + std::to_string(probs.size()) +
                             " probabilities for " + std::to_string(config.n_items) + " items");
      }
      for (std::size_t j = 0; j < probs.size(); ++j) {
        if (!(probs[j] > 0.0)) {
          throw InvalidArgument("behavior policy assigns zero probability to item " +
                                std::to_string(j) + " in session " + traj.session_id +
                                "; importance ratios would be undefined");
        }
      }
      const double u = unif(rng);
      std::size_t a = probs.size() - 1;
      double cum = 0.0;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        cum += probs[j];
        if (u < cum) {
          a = j;
          break;
        }
      }
      auto res = sim.step(a);
      Transition tr;
      tr.state = s;
      tr.action = ActionEmbed::one_hot(config.n_items, a);
      tr.action_index = a;
      tr.behavior_prob = probs[a];
      tr.response = res.response;
      tr.next_state = res.next_state;
      tr.done = res.done;
      traj.transitions.push_back(std::move(tr));
      if (res.done) break;
      s = res.next_state;
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

}  // namespace tscac
