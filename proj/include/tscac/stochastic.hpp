#pragma once

// Softmax policies and state-value critics, the per-response advantage
// actor-critic of stage one and the constrained main-policy update of stage
// two, plus the on-policy two-stage trainer over the session simulator.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tscac/approximator.hpp"
#include "tscac/cmdp.hpp"
#include "tscac/seeding.hpp"
#include "tscac/simulator.hpp"

namespace tscac {

struct StochasticPolicy {
  ApproxSpec spec;
  ParamVector params;
  std::size_t response = 0;

  std::size_t n_actions() const { return spec.output_dim; }
  std::vector<double> probs(const StateVec& s) const;
  double prob(const StateVec& s, std::size_t a) const;
  std::size_t sample(const StateVec& s, Rng& rng) const;
  std::size_t greedy(const StateVec& s) const;
};

StochasticPolicy make_stochastic_policy(std::size_t state_dim, std::size_t n_items,
                                        std::vector<std::size_t> hidden, std::uint64_t seed,
                                        std::size_t response);

struct CriticV {
  ApproxSpec spec;
  ParamVector params;
  std::size_t response = 0;
  double gamma = 0.0;
  // When non-empty the critic learns sum_k reward_weights[k] * r_k instead of
  // r_response (used by summed single-critic baselines).
  std::vector<double> reward_weights;

  // 0 at terminal states.
  double value(const StateVec& s) const;
  double reward(const ResponseVector& r) const;
};

CriticV make_critic(std::size_t state_dim, std::vector<std::size_t> hidden, std::uint64_t seed,
                    std::size_t response, double gamma);

struct LagrangeWeights {
  std::vector<double> lambdas;  // one per auxiliary response, each >= 0

  double sum() const;
  // Non-negative finite entries; with require_positive_sum, sum() > 0.
  void validate(bool require_positive_sum) const;
};

struct PolicySet {
  StochasticPolicy main_policy;
  CriticV main_critic;
  std::vector<StochasticPolicy> aux_policies;
  std::vector<CriticV> aux_critics;
  LagrangeWeights lambdas;
  DiscountVector discounts;

  std::size_t m() const { return aux_policies.size() + 1; }
  void validate() const;
};

struct UpdateStats {
  double loss = 0.0;
  std::size_t used = 0;
  std::size_t dropped = 0;
  bool skipped = false;
  double mean_weight = 0.0;
};

// One optimizer step on the mean squared TD error with V(s') from a frozen
// copy of the pre-update parameters. A non-finite loss skips the step.
UpdateStats critic_update(CriticV& critic, std::span<const Transition> batch, OptState& opt);

struct ActorOptions {
  bool normalize_advantage = false;
  double clip_max = 20.0;
  double entropy_bonus = 0.0;
};

// mean_k weights[k] * log pi(a_k|s_k) (+ entropy_bonus * mean entropy).
double weighted_log_likelihood(const StochasticPolicy& policy, std::span<const Transition> batch,
                               std::span<const double> weights, double entropy_bonus = 0.0);
ParamVector weighted_log_likelihood_gradient(const StochasticPolicy& policy,
                                             std::span<const Transition> batch,
                                             std::span<const double> weights,
                                             double entropy_bonus = 0.0);

// Advantages of `batch` under `critic`; entries are NaN where not finite.
std::vector<double> batch_advantages(const CriticV& critic, std::span<const Transition> batch);

// Ascent step on mean weight * log pi over entries with finite weights.
UpdateStats ascend_weighted(StochasticPolicy& policy, std::span<const Transition> batch,
                            std::span<const double> weights, OptState& opt, double entropy_bonus);

UpdateStats actor_update_aux(StochasticPolicy& policy, const CriticV& critic,
                             std::span<const Transition> batch, OptState& opt,
                             const ActorOptions& options = {});

// min(clip_max, prod_i (aux_probs[i] / cur_prob)^(lambda_i / sum) * exp(advantage / sum)).
double constrained_weight(std::span<const double> aux_probs, double cur_prob,
                          const LagrangeWeights& lambdas, double advantage, double clip_max);

// Constrained weights of a batch with `denominator(k)` as the probability the
// ratios are taken against (the current main policy online, the logged
// behavior offline).
std::vector<double> constrained_weights(const PolicySet& set, std::span<const Transition> batch,
                                        std::span<const double> advantages,
                                        const std::function<double(std::size_t)>& denominator,
                                        double clip_max);

UpdateStats actor_update_main(PolicySet& set, std::span<const Transition> batch, OptState& opt,
                              const ActorOptions& options = {});

// Mean over the batch states of KL(p || q) between two softmax policies.
double mean_kl(const StochasticPolicy& p, const StochasticPolicy& q,
               std::span<const Transition> batch);

std::vector<double> normalize(std::vector<double> values);

// --- on-policy two-stage training -------------------------------------------

struct TwoStageConfig {
  std::vector<std::size_t> actor_hidden{32};
  std::vector<std::size_t> critic_hidden{32};
  double actor_step_size = 3e-3;
  double critic_step_size = 3e-3;
  std::size_t stage1_iterations = 300;
  std::size_t stage2_iterations = 300;
  std::size_t episodes_per_iteration = 8;
  std::size_t critic_steps_per_iteration = 1;
  std::vector<double> lambdas;    // m - 1 entries
  std::vector<double> discounts;  // m entries
  ActorOptions actor;
  double divergence_threshold = 1e8;
  std::size_t divergence_patience = 5;
  std::uint64_t seed = 1;
};

struct MetricRow {
  std::size_t iteration = 0;
  std::string stage;
  std::size_t response = 0;
  std::vector<double> mean_return;  // per response, mean cumulative reward of the batch episodes
  double critic_loss = 0.0;
  double mean_weight = 0.0;
  std::vector<double> kl;           // per auxiliary; empty when not measured
  // Deterministic-family extras.
  std::optional<double> mean_h;
  std::optional<double> mean_q;
};

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows, std::size_t m,
                       bool deterministic_columns = false);

struct TrainResult {
  PolicySet policies;
  std::vector<MetricRow> metrics;
  bool diverged = false;
  std::string failure;
};

PolicySet init_policy_set(std::size_t state_dim, std::size_t n_items, const TwoStageConfig& config);

// Rolls out `episodes` sessions choosing items with `choose`, appending their
// transitions to `out`; returns per-response cumulative reward summed over
// episodes.
std::vector<double> collect_episodes(SessionSimulator& sim,
                                     const std::function<std::size_t(const StateVec&)>& choose,
                                     std::size_t episodes, std::uint64_t episode_root,
                                     std::vector<Transition>* out);

TrainResult train_two_stage(const SimConfig& env, const TwoStageConfig& config);

// The two halves of train_two_stage, for callers that share one stage-one
// result between several stage-two runs. `result` must come from
// init_policy_set with the same config; metrics are appended.
void train_stage_one(const SimConfig& env, const TwoStageConfig& config, TrainResult& result);
void train_stage_two(const SimConfig& env, const TwoStageConfig& config, TrainResult& result);

// Single-policy on-policy actor-critic with a combined learning signal: the
// weighted-sum baseline (advantage of a critic on sum_k w_k r_k) and RCPO
// (adv_main + sum_i lambda_i adv_i from separate critics).
enum class CombinedSignal { weighted_sum, rcpo };

struct CombinedConfig {
  std::vector<std::size_t> actor_hidden{32};
  std::vector<std::size_t> critic_hidden{32};
  double actor_step_size = 3e-3;
  double critic_step_size = 3e-3;
  std::size_t iterations = 300;
  std::size_t episodes_per_iteration = 8;
  std::vector<double> lambdas;         // rcpo
  std::vector<double> reward_weights;  // weighted_sum, m entries
  std::vector<double> discounts;
  ActorOptions actor;
  double divergence_threshold = 1e8;
  std::size_t divergence_patience = 5;
  std::uint64_t seed = 1;
};

struct CombinedResult {
  StochasticPolicy policy;
  std::vector<MetricRow> metrics;
  bool diverged = false;
  std::string failure;
};

CombinedResult train_combined(const SimConfig& env, const CombinedConfig& config,
                              CombinedSignal signal);

// Mean per-response cumulative reward over `episodes` fresh sessions.
std::vector<double> evaluate_online(const SimConfig& env,
                                    const std::function<std::size_t(const StateVec&)>& choose,
                                    std::size_t episodes, std::uint64_t seed);

}  // namespace tscac
