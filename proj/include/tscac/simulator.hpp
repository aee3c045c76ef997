#pragma once

// Synthetic short-video session simulator.
//
// Response 0 is a dense watch-time analogue observed on every step; responses
// 1..m-1 are sparse Bernoulli interactions. Affinities are low rank: a user
// interest vector (part of the state) dotted with per-response item vectors,
// plus per-response item biases. Every item also carries an immediate
// quality and a "depth" that feeds a slowly decaying engagement level, so
// items that pay off immediately and items that pay off over the rest of the
// session trade off against each other.
//
// State layout (state_dim >= embed_dim + 2 + m):
//   [0, embed_dim)                 user interest
//   [embed_dim]                    engagement
//   [embed_dim+1, embed_dim+1+m)   decayed trace of recent responses
//   [embed_dim+1+m]                steps left in the session / longest session length
//   [embed_dim+2+m, state_dim)     static session context
// A terminal state carries zero features.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tscac/cmdp.hpp"
#include "tscac/seeding.hpp"

namespace tscac {

struct SimConfig {
  std::size_t n_items = 20;
  std::size_t state_dim = 12;
  std::size_t embed_dim = 4;
  std::size_t m = 4;
  double sparse_prob_scale = 0.3;
  std::pair<std::size_t, std::size_t> session_length_range{8, 16};
  std::uint64_t seed = 1;
  double dense_noise_std = 0.1;
  // Unit of the dense response. Watch time is reported in thousands of
  // model time units, which puts advantages near 1e-3.
  double dense_scale = 1e-3;

  void validate() const;
};

struct StepResult {
  StateVec next_state;
  ResponseVector response;
  bool done = false;
};

class SessionSimulator {
 public:
  explicit SessionSimulator(SimConfig config);

  const SimConfig& config() const { return config_; }

  // Deterministic in (config.seed, episode_seed).
  StateVec reset(std::uint64_t episode_seed);
  StepResult step(std::size_t item);

  const StateVec& state() const { return state_; }
  std::size_t session_length() const { return length_; }
  std::size_t steps_taken() const { return steps_; }

  // Noise-free per-response affinity of showing `item` in `state`.
  double affinity(const StateVec& state, std::size_t item, std::size_t response) const;
  // Dense response before noise and clipping, in dense_scale units.
  double dense_mean(const StateVec& state, std::size_t item) const;
  // Probability that sparse response `response` (>= 1) fires.
  double sparse_fire_probability(const StateVec& state, std::size_t item,
                                 std::size_t response) const;
  // How much showing `item` raises engagement on later steps.
  double item_depth(std::size_t item) const { return depth_.at(item); }

 private:
  double remaining_fraction() const;
  std::vector<double> fold(const StateVec& state, std::size_t item,
                           const ResponseVector& response) const;

  SimConfig config_;
  // Latent structure, generated from config.seed.
  std::vector<std::vector<std::vector<double>>> item_vectors_;  // [response][item][embed]
  std::vector<std::vector<double>> item_bias_;                  // [response][item]
  std::vector<std::vector<double>> item_topic_;                 // [item][embed]
  std::vector<double> depth_;                                   // [item]
  std::vector<double> quality_;                                 // [item]

  Rng rng_;
  StateVec state_;
  std::size_t length_ = 0;
  std::size_t steps_ = 0;
};

// Probability vector over items for a state.
using BehaviorPolicy = std::function<std::vector<double>(const StateVec&)>;

BehaviorPolicy uniform_behavior(std::size_t n_items);

// Rolls out n_trajectories sessions under `behavior`, recording the
// probability of each logged action. Throws InvalidArgument when the behavior
// assigns zero probability to any item.
ReplayDataset generate_offline_dataset(const SimConfig& config, const BehaviorPolicy& behavior,
                                       std::size_t n_trajectories, std::uint64_t seed);

}  // namespace tscac
