#pragma once

// Deterministic actors emitting action embeddings, Q critics with target
// networks, the softly constrained deterministic objective, the RCPO
// combination and behavior cloning, plus offline trainers over a
// ReplayDataset of discrete item choices.
//
// Items are scored against an action embedding by dot product. Logged item
// choices are embedded with a fixed item table so that Q critics see the
// same kind of action vector the actors emit.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tscac/approximator.hpp"
#include "tscac/cmdp.hpp"
#include "tscac/seeding.hpp"
#include "tscac/stochastic.hpp"

namespace tscac {

struct DeterministicPolicy {
  ApproxSpec spec;
  ParamVector params;
  double exploration_noise_std = 0.1;
  std::size_t response = 0;

  std::size_t action_dim() const { return spec.output_dim; }
  // Entries in (-1, 1).
  std::vector<double> act(const StateVec& s) const;
  // act(s) plus Gaussian exploration noise; data collection only.
  std::vector<double> explore(const StateVec& s, Rng& rng) const;
};

DeterministicPolicy make_deterministic_policy(std::size_t state_dim, std::size_t action_dim,
                                              std::vector<std::size_t> hidden, std::uint64_t seed,
                                              std::size_t response);

struct CriticQ {
  ApproxSpec spec;  // input = state ++ action
  ParamVector params;
  std::size_t response = 0;
  double gamma = 0.0;
  std::vector<double> reward_weights;  // non-empty: learn sum_k w_k r_k

  // 0 at terminal states.
  double value(const StateVec& s, std::span<const double> a) const;
  // dQ/da at (s, a).
  std::vector<double> action_gradient(const StateVec& s, std::span<const double> a) const;
  double reward(const ResponseVector& r) const;
};

CriticQ make_q_critic(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                      std::uint64_t seed, std::size_t response, double gamma);

// One step on mean (r + gamma Q_target(s', pi_target(s')) - Q(s, a))^2 where
// a is the dense action stored in each transition. Non-finite loss skips.
UpdateStats q_critic_update(CriticQ& critic, const CriticQ& target_critic,
                            const DeterministicPolicy& target_policy,
                            std::span<const Transition> batch, OptState& opt);

// mean_s Q(s, pi(s)) and its ascent step.
double ddpg_objective(const DeterministicPolicy& policy, const CriticQ& critic,
                      std::span<const Transition> batch);
ParamVector ddpg_objective_gradient(const DeterministicPolicy& policy, const CriticQ& critic,
                                    std::span<const Transition> batch);
UpdateStats ddpg_actor_update(DeterministicPolicy& policy, const CriticQ& critic,
                              std::span<const Transition> batch, OptState& opt);

// exp(-|a - b|^2 / 2).
double h_similarity(std::span<const double> a, std::span<const double> b);

// prod_i h(pi_1(s), pi_i(s))^(lambda_i / sum) * Q_1(s, pi_1(s)) / sum.
double constrained_det_objective(const StateVec& state, const DeterministicPolicy& policy,
                                 std::span<const DeterministicPolicy> aux,
                                 const CriticQ& critic, const LagrangeWeights& lambdas);

struct ConstrainedDetStats {
  UpdateStats update;
  double mean_h = 0.0;
  double mean_q = 0.0;
};

double constrained_det_batch_objective(const DeterministicPolicy& policy,
                                       std::span<const DeterministicPolicy> aux,
                                       const CriticQ& critic, const LagrangeWeights& lambdas,
                                       std::span<const Transition> batch);
ParamVector constrained_det_gradient(const DeterministicPolicy& policy,
                                     std::span<const DeterministicPolicy> aux,
                                     const CriticQ& critic, const LagrangeWeights& lambdas,
                                     std::span<const Transition> batch);
ConstrainedDetStats constrained_det_update(DeterministicPolicy& policy,
                                           std::span<const DeterministicPolicy> aux,
                                           const CriticQ& critic, const LagrangeWeights& lambdas,
                                           std::span<const Transition> batch, OptState& opt);

// adv[0] + sum_{i>=1} lambdas[i-1] * adv[i].
double rcpo_combined_advantage(std::span<const double> adv, std::span<const double> lambdas);

// Mean negative log-likelihood of the logged actions, and one descent step on it.
double behavior_nll(const StochasticPolicy& policy, std::span<const Transition> batch);
UpdateStats behavior_clone_update(StochasticPolicy& policy, std::span<const Transition> batch,
                                  OptState& opt);

// --- item embeddings -------------------------------------------------------------

struct ItemTable {
  std::vector<std::vector<double>> rows;  // [item][dim]

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }
};

// Per-item mean logged response vector, standardized per dimension across
// items; items never logged get zeros.
ItemTable build_item_table(const ReplayDataset& dataset, std::size_t n_items);

// Copies of the transitions with the logged item replaced by its embedding.
std::vector<Transition> embed_actions(const ReplayDataset& dataset, const ItemTable& table);

// Item distribution softmax(beta * <action, row_j>).
std::vector<double> item_distribution(std::span<const double> action, const ItemTable& table,
                                      double inverse_temperature);

// --- offline trainers --------------------------------------------------------------

enum class DetAlgorithm { ddpg_weighted, rcpo, constrained };

struct OfflineDetConfig {
  std::vector<std::size_t> actor_hidden{32};
  std::vector<std::size_t> critic_hidden{32};
  double actor_step_size = 1e-3;
  double critic_step_size = 1e-3;
  std::size_t critic_warmup = 0;       // critic-only steps before actors move
  std::size_t iterations = 2000;       // per stage
  std::size_t batch_size = 64;
  std::size_t target_refresh = 100;
  std::vector<double> lambdas;         // m - 1
  std::vector<double> discounts;       // m
  std::vector<double> reward_weights;  // m, ddpg_weighted
  double divergence_threshold = 1e8;
  std::size_t divergence_patience = 5;
  std::uint64_t seed = 1;
};

struct OfflineDetResult {
  DeterministicPolicy policy;
  std::vector<DeterministicPolicy> aux;
  std::vector<MetricRow> metrics;
  bool diverged = false;
  std::string failure;
};

// `data` holds transitions with dense (embedded) actions.
OfflineDetResult train_offline_deterministic(std::span<const Transition> data, std::size_t m,
                                             const OfflineDetConfig& config, DetAlgorithm algorithm);

struct BehaviorCloneConfig {
  std::vector<std::size_t> hidden{32};
  double step_size = 3e-3;
  std::size_t iterations = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
};

struct BehaviorCloneResult {
  StochasticPolicy policy;
  std::vector<MetricRow> metrics;
};

BehaviorCloneResult train_behavior_clone(std::span<const Transition> data, std::size_t n_items,
                                         std::size_t m, const BehaviorCloneConfig& config);

}  // namespace tscac
