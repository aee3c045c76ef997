#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gen.hpp"
#include "tscac/errors.hpp"
#include "tscac/stochastic.hpp"

using namespace tscac;

namespace {

std::vector<Transition> flat(const Trajectory& tr) { return tr.transitions; }

// Transitions from random states with random actions and responses.
std::vector<Transition> random_batch(Gen& gen, std::size_t n, std::size_t dim, std::size_t n_actions,
                                     std::size_t m) {
  std::vector<Transition> b;
  for (std::size_t k = 0; k < n; ++k) {
    Transition x;
    x.state = gen.state(dim);
    const std::size_t a = gen.index(n_actions);
    x.action = ActionEmbed::one_hot(n_actions, a);
    x.action_index = a;
    x.response = ResponseVector{gen.vec(m, -1, 1)};
    x.done = gen.index(4) == 0;
    x.next_state = x.done ? StateVec{std::vector<double>(dim, 0.0), true} : gen.state(dim);
    b.push_back(x);
  }
  return b;
}

std::vector<double> fd_wll(StochasticPolicy p, const std::vector<Transition>& batch,
                           const std::vector<double>& w, double entropy) {
  std::vector<double> g(p.params.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double keep = p.params[i];
    p.params[i] = keep + 1e-6;
    const double up = weighted_log_likelihood(p, batch, w, entropy);
    p.params[i] = keep - 1e-6;
    const double dn = weighted_log_likelihood(p, batch, w, entropy);
    p.params[i] = keep;
    g[i] = (up - dn) / 2e-6;
  }
  return g;
}

LagrangeWeights lw(std::vector<double> v) { return LagrangeWeights{std::move(v)}; }

}  // namespace

TEST(CriticUpdate, FixedPointLeavesParams) {
  // linear critic on one-hot states whose weights already solve Bellman
  auto tr = chain({{0}, {0}, {1}});
  auto critic = make_critic(3, {}, 1, 0, 0.9);
  critic.params = ParamVector(std::vector<double>{0.81, 0.9, 1.0, 0.0});
  const auto before = critic.params;
  auto opt = OptState::for_params(critic.params.size(), 0.1);
  const auto st = critic_update(critic, flat(tr), opt);
  EXPECT_NEAR(st.loss, 0.0, 1e-28);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(critic.params[i], before[i], 1e-12);
}

TEST(CriticUpdate, ThreeStateChainSolvesLinearSystem) {
  // V = r + 0.9 V' with V(terminal) = 0: V2 = 1, V1 = 0.9, V0 = 0.81
  const auto batch = flat(chain({{0}, {0}, {1}}));
  auto critic = make_critic(3, {}, 4, 0, 0.9);
  auto opt = OptState::for_params(critic.params.size(), 0.01);
  for (int k = 0; k < 5000; ++k) critic_update(critic, batch, opt);
  const double want[] = {0.81, 0.9, 1.0};
  for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(critic.value(one_hot_state(3, s)), want[s], 1e-3);
}

TEST(CriticUpdate, MyopicRegressesToConstant) {
  Gen gen(2);
  auto batch = random_batch(gen, 32, 3, 2, 1);
  for (auto& x : batch) x.response = ResponseVector{{0.7}};
  auto critic = make_critic(3, {8}, 4, 0, 0.0);
  auto opt = OptState::for_params(critic.params.size(), 0.01);
  for (int k = 0; k < 2000; ++k) critic_update(critic, batch, opt);
  for (const auto& x : batch) EXPECT_NEAR(critic.value(x.state), 0.7, 1e-2);
}

TEST(CriticUpdate, TerminalValueIsZero) {
  auto critic = make_critic(3, {4}, 4, 0, 0.9);
  EXPECT_EQ(critic.value(StateVec{{1, 2, 3}, true}), 0.0);
}

TEST(CriticUpdate, SummedRewardWeights) {
  auto critic = make_critic(1, {}, 4, 1, 0.0);
  EXPECT_EQ(critic.reward(ResponseVector{{1, 2, 3}}), 2.0);
  critic.reward_weights = {1, 0.5, 2};
  EXPECT_EQ(critic.reward(ResponseVector{{1, 2, 3}}), 8.0);
}

TEST(ActorAux, ZeroAdvantageZeroGradient) {
  Gen gen(3);
  const auto batch = random_batch(gen, 10, 4, 3, 1);
  const auto policy = make_stochastic_policy(4, 3, {5}, 8, 1);
  const auto g = weighted_log_likelihood_gradient(policy, batch, std::vector<double>(10, 0.0));
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(ActorAux, PositiveAdvantageRaisesProbability) {
  // one state, two actions, action 0 with reward 1 and a zero critic: A = +1
  Trajectory tr = chain({{1.0}});
  auto policy = make_stochastic_policy(1, 2, {}, 3, 0);
  auto critic = make_critic(1, {}, 3, 0, 0.0);
  critic.params = ParamVector::zeros(critic.params.size());
  const double before = policy.prob(tr.transitions[0].state, 0);
  auto opt = OptState::for_params(policy.params.size(), 0.01);
  actor_update_aux(policy, critic, flat(tr), opt);
  EXPECT_GT(policy.prob(tr.transitions[0].state, 0), before);
}

TEST(ActorAux, GradientMatchesFiniteDifferences) {
  Gen gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto batch = random_batch(gen, 6, 3, 4, 1);
    const auto policy = make_stochastic_policy(3, 4, {5}, gen.engine()(), 0);
    const auto w = gen.vec(6, -2, 2);
    const double ent = trial % 2 ? 0.1 : 0.0;
    const auto g = weighted_log_likelihood_gradient(policy, batch, w, ent);
    EXPECT_LT(max_rel_error(g.values(), fd_wll(policy, batch, w, ent)), 1e-4);
  }
}

TEST(ActorAux, PoliciesStayDistributions) {
  Gen gen(6);
  const auto batch = random_batch(gen, 16, 3, 5, 1);
  auto policy = make_stochastic_policy(3, 5, {6}, 1, 1);
  auto critic = make_critic(3, {6}, 2, 0, 0.5);
  auto opt = OptState::for_params(policy.params.size(), 0.05);
  for (int k = 0; k < 200; ++k) actor_update_aux(policy, critic, batch, opt);
  for (const auto& x : batch) {
    const auto p = policy.probs(x.state);
    double s = 0.0;
    for (double v : p) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ConstrainedWeight, NeutralPoint) {
  EXPECT_EQ(constrained_weight(std::vector<double>{0.3, 0.3}, 0.3, lw({1, 2}), 0.0, 20), 1.0);
}

TEST(ConstrainedWeight, ZeroMultiplierIgnoresItsPolicy) {
  Gen gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> aux = gen.vec(3, 0.01, 1);
    const double cur = gen.uniform(0.01, 1), a = gen.uniform(-2, 2);
    const auto l = lw({gen.uniform(0.1, 2), 0.0, gen.uniform(0.1, 2)});
    const double w = constrained_weight(aux, cur, l, a, 1e9);
    aux[1] = gen.uniform(0.01, 1);
    EXPECT_EQ(constrained_weight(aux, cur, l, a, 1e9), w);
  }
}

TEST(ConstrainedWeight, ExpLn2) {
  EXPECT_NEAR(constrained_weight(std::vector<double>{0.5}, 0.5, lw({1}), std::log(2.0), 20), 2.0, 1e-12);
}

TEST(ConstrainedWeight, ClosedFormAndClip) {
  // (0.4/0.2)^(1/3) (0.1/0.2)^(2/3) exp(0.6/3)
  const double expected = std::pow(2.0, 1.0 / 3) * std::pow(0.5, 2.0 / 3) * std::exp(0.2);
  EXPECT_NEAR(constrained_weight(std::vector<double>{0.4, 0.1}, 0.2, lw({1, 2}), 0.6, 20), expected, 1e-12);
  EXPECT_EQ(constrained_weight(std::vector<double>{0.4}, 0.2, lw({1}), 10.0, 20), 20.0);
}

TEST(ConstrainedWeight, RejectsAllZeroMultipliers) {
  EXPECT_THROW(constrained_weight(std::vector<double>{0.5}, 0.5, lw({0}), 0.0, 20), InvalidArgument);
  EXPECT_THROW(constrained_weight(std::vector<double>{0.5, 0.5}, 0.5, lw({1}), 0.0, 20), DimensionError);
}

TEST(ConstrainedWeightProperty, IncreasingInAdvantage) {
  Gen gen(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto aux = gen.vec(2, 0.01, 1);
    const double cur = gen.uniform(0.01, 1);
    const auto l = lw(gen.vec(2, 0.1, 3));
    const double a = gen.uniform(-3, 3), b = a + gen.uniform(1e-3, 1);
    EXPECT_LT(constrained_weight(aux, cur, l, a, 1e12), constrained_weight(aux, cur, l, b, 1e12));
  }
}

TEST(ConstrainedWeightProperty, ScalingLambdasWithZeroAdvantage) {
  Gen gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    const auto aux = gen.vec(3, 0.01, 1);
    const double cur = gen.uniform(0.01, 1), c = gen.uniform(0.01, 100);
    const auto l = gen.vec(3, 0.1, 3);
    auto scaled = l;
    for (auto& v : scaled) v *= c;
    EXPECT_NEAR(constrained_weight(aux, cur, lw(l), 0.0, 1e12),
                constrained_weight(aux, cur, lw(scaled), 0.0, 1e12), 1e-12);
    // with an advantage only the temperature changes
    const double a = gen.uniform(-1, 1);
    const double ratio_part = constrained_weight(aux, cur, lw(l), 0.0, 1e12);
    const double sum = l[0] + l[1] + l[2];
    EXPECT_NEAR(constrained_weight(aux, cur, lw(scaled), a, 1e12), ratio_part * std::exp(a / (c * sum)),
                1e-9 * ratio_part * std::exp(a / (c * sum)));
  }
}

namespace {

PolicySet small_set(std::size_t dim, std::size_t n, std::vector<double> lambdas) {
  TwoStageConfig c;
  c.actor_hidden = {4};
  c.critic_hidden = {4};
  c.lambdas = lambdas;
  c.discounts.assign(lambdas.size() + 1, 0.5);
  return init_policy_set(dim, n, c);
}

}  // namespace

TEST(ActorMain, SelfRatioReducesToExponentiatedAdvantage) {
  Gen gen(10);
  auto set = small_set(3, 4, {0.7});
  set.aux_policies[0].params = set.main_policy.params;
  const auto batch = random_batch(gen, 12, 3, 4, 2);
  const auto adv = batch_advantages(set.main_critic, batch);
  const auto w = constrained_weights(
      set, batch, adv, [&](std::size_t k) { return set.main_policy.prob(batch[k].state, *batch[k].action_index); },
      1e9);
  for (std::size_t k = 0; k < batch.size(); ++k) EXPECT_NEAR(w[k], std::exp(adv[k] / 0.7), 1e-12 * w[k]);
}

TEST(ActorMain, NeutralConfigurationHasUnitWeights) {
  Gen gen(11);
  auto set = small_set(3, 4, {1, 2});
  for (auto& p : set.aux_policies) p.params = set.main_policy.params;
  const auto batch = random_batch(gen, 12, 3, 4, 3);
  const std::vector<double> zero(batch.size(), 0.0);
  const auto w = constrained_weights(
      set, batch, zero, [&](std::size_t k) { return set.main_policy.prob(batch[k].state, *batch[k].action_index); },
      20);
  for (double v : w) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(ActorMain, RejectsAllZeroMultipliers) {
  Gen gen(12);
  auto set = small_set(3, 4, {0, 0});
  const auto batch = random_batch(gen, 4, 3, 4, 3);
  auto opt = OptState::for_params(set.main_policy.params.size());
  EXPECT_THROW(actor_update_main(set, batch, opt), InvalidArgument);
}

TEST(ActorMain, FrozenWeightObjectiveMatchesFiniteDifferences) {
  Gen gen(13);
  auto set = small_set(3, 4, {0.5, 1.5});
  const auto batch = random_batch(gen, 8, 3, 4, 3);
  const auto adv = batch_advantages(set.main_critic, batch);
  const auto w = constrained_weights(
      set, batch, adv, [&](std::size_t k) { return set.main_policy.prob(batch[k].state, *batch[k].action_index); },
      20);
  const auto g = weighted_log_likelihood_gradient(set.main_policy, batch, w);
  EXPECT_LT(max_rel_error(g.values(), fd_wll(set.main_policy, batch, w, 0.0)), 1e-4);
}

TEST(ActorMain, HugeLambdaPullsTowardAuxiliary) {
  // zero rewards and critic: weights are the ratio pi_aux / pi_main, so
  // on-policy updates descend the cross-entropy to the auxiliary
  const std::size_t n = 4;
  auto set = small_set(2, n, {1e4});
  set.main_critic.params = ParamVector::zeros(set.main_critic.params.size());
  auto& aux = set.aux_policies[0];
  for (std::size_t i = 0; i < aux.params.size(); ++i) aux.params[i] *= 6.0;
  Gen gen(14);
  std::vector<Transition> states;
  for (int k = 0; k < 32; ++k) states.push_back(random_batch(gen, 1, 2, n, 2)[0]);
  const double kl0 = mean_kl(set.main_policy, aux, states);
  auto opt = OptState::for_params(set.main_policy.params.size(), 0.01);
  Rng rng(3);
  double prev = kl0;
  int rises = 0;
  for (int it = 0; it < 300; ++it) {
    std::vector<Transition> batch;
    for (auto x : states) {
      const std::size_t a = set.main_policy.sample(x.state, rng);
      x.action = ActionEmbed::one_hot(n, a);
      x.action_index = a;
      x.response = ResponseVector{{0.0, 0.0}};
      batch.push_back(x);
    }
    actor_update_main(set, batch, opt);
    if (it % 50 == 49) {
      const double kl = mean_kl(set.main_policy, aux, states);
      rises += kl > prev;
      prev = kl;
    }
  }
  EXPECT_LT(prev, 0.5 * kl0);
  EXPECT_LE(rises, 1);
}

TEST(TwoStage, ZeroStageTwoKeepsInitialMain) {
  SimConfig env;
  env.m = 2;
  TwoStageConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.stage1_iterations = 3;
  c.stage2_iterations = 0;
  c.episodes_per_iteration = 2;
  c.lambdas = {1};
  c.discounts = {0.9, 0};
  const auto init = init_policy_set(env.state_dim, env.n_items, c);
  const auto r = train_two_stage(env, c);
  EXPECT_EQ(r.policies.main_policy.params, init.main_policy.params);
  EXPECT_NE(r.policies.aux_policies[0].params, init.aux_policies[0].params);
}

TEST(TwoStage, BitReproducible) {
  SimConfig env;
  TwoStageConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.stage1_iterations = 4;
  c.stage2_iterations = 4;
  c.episodes_per_iteration = 2;
  c.lambdas = {1, 1, 1};
  c.discounts = {0.9, 0, 0, 0};
  const auto a = train_two_stage(env, c), b = train_two_stage(env, c);
  std::ostringstream sa, sb;
  write_metrics_csv(sa, a.metrics, 4);
  write_metrics_csv(sb, b.metrics, 4);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.policies.main_policy.params, b.policies.main_policy.params);
  // split halves give the same result
  TrainResult split;
  split.policies = init_policy_set(env.state_dim, env.n_items, c);
  train_stage_one(env, c, split);
  train_stage_two(env, c, split);
  EXPECT_EQ(split.policies.main_policy.params, a.policies.main_policy.params);
}

TEST(TwoStage, RejectsMismatchedDiscounts) {
  SimConfig env;
  TwoStageConfig c;
  c.lambdas = {1};
  c.discounts = {0.9, 0};
  EXPECT_THROW(train_two_stage(env, c), InvalidArgument);
}

TEST(Combined, RcpoAndWeightedSumRun) {
  SimConfig env;
  CombinedConfig c;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.iterations = 3;
  c.episodes_per_iteration = 2;
  c.lambdas = {1, 1, 1};
  c.reward_weights = {1, 1, 1, 1};
  c.discounts = {0.9, 0, 0, 0};
  for (auto sig : {CombinedSignal::rcpo, CombinedSignal::weighted_sum}) {
    const auto r = train_combined(env, c, sig);
    EXPECT_FALSE(r.diverged);
    EXPECT_EQ(r.metrics.size(), 3u);
  }
}

TEST(Evaluate, UniformPolicyIsDeterministicInSeed) {
  SimConfig env;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    return evaluate_online(env, [&](const StateVec&) { return std::size_t(rng() % env.n_items); }, 20, seed);
  };
  EXPECT_EQ(run(4), run(4));
}
