#pragma once

// Learning from logged data: importance-corrected actor updates, critics
// trained jointly on one dataset, critic/Monte-Carlo correlation and the
// normalised capped importance sampling (NCIS) evaluator.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tscac/cmdp.hpp"
#include "tscac/seeding.hpp"
#include "tscac/stochastic.hpp"

namespace tscac {

// Probability a policy assigns to item `a` in state `s`.
using ActionProb = std::function<double(const StateVec& s, std::size_t a)>;

ActionProb action_prob(const StochasticPolicy& policy);

enum class ISMode { full_product, first_order };

struct ISConfig {
  ISMode mode = ISMode::first_order;
  double ratio_clip = 10.0;
  double min_behavior_prob = 1e-6;

  void validate() const;
};

// min(ratio_clip, pi(a|s) / pi_beta(a|s)) for one logged transition.
double first_order_ratio(const Transition& tr, const ActionProb& pi, const ISConfig& config);
double first_order_ratio(const Transition& tr, const StochasticPolicy& policy, const ISConfig& config);

// min(ratio_clip, prod_{k<=t} pi(a_k|s_k) / pi_beta(a_k|s_k)).
double full_trajectory_ratio(const Trajectory& traj, std::size_t t, const ActionProb& pi,
                             const ISConfig& config);
double full_trajectory_ratio(const Trajectory& traj, std::size_t t, const StochasticPolicy& policy,
                             const ISConfig& config);

// A logged transition together with its session, so trajectory-level
// ratios can be formed.
struct OfflineSample {
  const Trajectory* trajectory = nullptr;
  std::size_t t = 0;

  const Transition& transition() const { return trajectory->transitions[t]; }
};

std::vector<OfflineSample> all_samples(const ReplayDataset& dataset);
std::vector<OfflineSample> sample_offline_batch(const ReplayDataset& dataset, std::size_t size, Rng& rng);
std::vector<Transition> transitions_of(std::span<const OfflineSample> batch);

std::vector<double> importance_ratios(std::span<const OfflineSample> batch, const ActionProb& pi,
                                      const ISConfig& config);

// Ascent on mean ratio * A_i * log pi(a|s), ratio from the policy being updated.
UpdateStats offline_actor_update_aux(StochasticPolicy& policy, const CriticV& critic,
                                     std::span<const OfflineSample> batch, const ISConfig& config,
                                     OptState& opt, const ActorOptions& options = {});

// Ascent on mean min(clip, prod_i (pi_i(a|s) / pi_beta(a|s))^(l_i/sum) exp(A_1/sum)) * log pi(a|s).
UpdateStats offline_actor_update_main(PolicySet& set, std::span<const OfflineSample> batch,
                                      const ISConfig& config, OptState& opt,
                                      const ActorOptions& options = {});

// --- offline trainers for softmax policies -------------------------------------

struct OfflineStochasticConfig {
  std::vector<std::size_t> actor_hidden{32};
  std::vector<std::size_t> critic_hidden{32};
  double actor_step_size = 1e-3;
  double critic_step_size = 3e-3;
  std::size_t stage1_iterations = 2000;  // per auxiliary response
  std::size_t stage2_iterations = 2000;  // main policy; also the weighted-sum budget
  std::size_t batch_size = 64;
  std::vector<double> lambdas;         // m - 1, two-stage
  std::vector<double> discounts;       // m
  std::vector<double> reward_weights;  // m, weighted sum
  ISConfig is;
  ActorOptions actor;
  double divergence_threshold = 1e8;
  std::size_t divergence_patience = 5;
  std::uint64_t seed = 1;
};

// Two-stage training from logged sessions: importance-corrected actor
// updates for each auxiliary policy, then the constrained main update with
// the logged behavior probability as denominator.
TrainResult train_offline_two_stage(const ReplayDataset& dataset, const OfflineStochasticConfig& config);

// One softmax policy on the advantage of a critic of sum_k w_k r_k.
CombinedResult train_offline_weighted(const ReplayDataset& dataset, const OfflineStochasticConfig& config);

// --- critics on a shared dataset ------------------------------------------------

enum class CriticMode { separate, single_summed };

struct MultiCriticConfig {
  CriticMode mode = CriticMode::separate;
  std::vector<double> discounts;  // separate: one per response
  double shared_gamma = 0.95;     // single_summed
  std::vector<std::size_t> hidden{32};
  double step_size = 3e-3;
  std::size_t iterations = 2000;
  std::size_t batch_size = 64;
  // separate mode: one network with one linear head per response instead of
  // independent networks (hidden layers shared).
  bool shared_bottom = false;
  std::uint64_t seed = 1;
};

struct MultiCritic {
  CriticMode mode = CriticMode::separate;
  bool shared_bottom = false;
  std::vector<CriticV> critics;  // separate (independent nets) or the single summed critic
  ApproxSpec shared_spec;        // shared_bottom only
  ParamVector shared_params;
  std::vector<double> shared_gammas;

  std::size_t heads() const;
  // Value of head k (0 at terminal states).
  double head_value(std::size_t k, const StateVec& s) const;
  // Sum over heads: V_single, or V_separate = sum_i V_i.
  double combined_value(const StateVec& s) const;
  // Value compared against response r's return: V_single for the summed
  // critic; V_0 + V_r for separate heads (all heads summed for r = 0).
  double comparison_value(std::size_t response, const StateVec& s) const;
};

MultiCritic multi_critic_train(const ReplayDataset& dataset, const MultiCriticConfig& config);

// Pearson correlation of comparison_value(r, s) with the discounted
// Monte-Carlo return of response r from s; nullopt when either side has
// zero variance.
std::vector<std::optional<double>> critic_return_correlation(
    const MultiCritic& critic, const ReplayDataset& dataset, const DiscountVector& discounts,
    std::span<const std::size_t> responses);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// --- NCIS ----------------------------------------------------------------------------

struct NCISConfig {
  double cap = 10.0;  // may be +infinity
  std::vector<std::size_t> score_responses;  // empty: all responses

  void validate() const;
};

struct NCISReport {
  std::vector<std::size_t> responses;
  std::vector<double> scores;
  double mean_weight = 0.0;
  double max_weight = 0.0;
  double effective_sample_size = 0.0;
  std::size_t n = 0;
};

// Per response: sum w r / sum w over all transitions with w = min(pi/pi_beta, cap).
// pi_beta is the logged behavior probability unless `behavior` is given.
NCISReport ncis_evaluate(const ActionProb& pi, const ReplayDataset& dataset, const NCISConfig& config,
                         const ActionProb& behavior = nullptr);

}  // namespace tscac
