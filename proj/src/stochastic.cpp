#include "tscac/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "tscac/deterministic.hpp"
#include "tscac/errors.hpp"

namespace tscac {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

std::size_t action_of(const Transition& tr) {
  if (tr.action_index) return *tr.action_index;
  if (auto h = tr.action.hot_index()) return *h;
  throw InvalidArgument("policy update needs discrete action indices");
}

// Consecutive-failure counter shared by the trainers.
struct DivergenceWatch {
  double threshold;
  std::size_t patience;
  std::size_t streak = 0;

  bool observe(double loss) {
    if (!std::isfinite(loss) || loss > threshold) {
      ++streak;
    } else {
      streak = 0;
    }
    return streak >= patience;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

// --- policies and critics ----------------------------------------------------

std::vector<double> StochasticPolicy::probs(const StateVec& s) const {
  return forward(spec, params, s.features);
}

double StochasticPolicy::prob(const StateVec& s, std::size_t a) const {
  if (a >= n_actions()) throw InvalidArgument("action index out of range");
  return probs(s)[a];
}

std::size_t StochasticPolicy::sample(const StateVec& s, Rng& rng) const {
  const auto p = probs(s);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    cum += p[j];
    if (u < cum) return j;
  }
  return p.size() - 1;
}

std::size_t StochasticPolicy::greedy(const StateVec& s) const { return argmax(probs(s)); }

StochasticPolicy make_stochastic_policy(std::size_t state_dim, std::size_t n_items,
                                        std::vector<std::size_t> hidden, std::uint64_t seed,
                                        std::size_t response) {
  StochasticPolicy p;
  p.spec = ApproxSpec{state_dim, std::move(hidden), n_items, OutputActivation::softmax, seed};
  p.spec.validate();
  p.params = init_params(p.spec);
  p.response = response;
  return p;
}

double CriticV::value(const StateVec& s) const {
  if (s.terminal) return 0.0;
  return forward(spec, params, s.features)[0];
}

double CriticV::reward(const ResponseVector& r) const {
  if (reward_weights.empty()) {
    if (response >= r.size()) throw DimensionError("critic response index out of range");
    return r[response];
  }
  if (reward_weights.size() != r.size()) throw DimensionError("reward weights length differs from m");
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) s += reward_weights[k] * r[k];
  return s;
}

CriticV make_critic(std::size_t state_dim, std::vector<std::size_t> hidden, std::uint64_t seed,
                    std::size_t response, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("critic gamma must lie in [0, 1)");
  CriticV c;
  c.spec = ApproxSpec{state_dim, std::move(hidden), 1, OutputActivation::linear, seed};
  c.spec.validate();
  c.params = init_params(c.spec);
  c.response = response;
  c.gamma = gamma;
  return c;
}

double LagrangeWeights::sum() const { return std::accumulate(lambdas.begin(), lambdas.end(), 0.0); }

void LagrangeWeights::validate(bool require_positive_sum) const {
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw InvalidArgument("Lagrange multipliers must be finite and >= 0");
    }
  }
  if (require_positive_sum && !(sum() > 0.0)) {
    throw InvalidArgument("constrained update needs at least one positive Lagrange multiplier");
  }
}

void PolicySet::validate() const {
  if (aux_critics.size() != aux_policies.size()) {
    throw DimensionError("policy set: auxiliary actor and critic counts differ");
  }
  if (lambdas.lambdas.size() != aux_policies.size()) {
    throw DimensionError("policy set: need one Lagrange multiplier per auxiliary response");
  }
  if (discounts.size() != m()) throw DimensionError("policy set: need one discount per response");
  lambdas.validate(false);
}

// --- updates -------------------------------------------------------------------

UpdateStats critic_update(CriticV& critic, std::span<const Transition> batch, OptState& opt) {
  if (batch.empty()) throw InvalidArgument("critic_update: empty batch");
  const CriticV frozen = critic;
  const double n = static_cast<double>(batch.size());
  UpdateStats st;
  ParamVector grad = ParamVector::zeros(critic.params.size());
  double loss = 0.0;
  for (const auto& tr : batch) {
    const double target =
        td_target(critic.reward(tr.response), critic.gamma, frozen.value(tr.next_state), tr.done);
    const double delta = target - critic.value(tr.state);
    loss += delta * delta;
    if (!std::isfinite(loss)) break;
    const double up = -2.0 * delta / n;
    grad.add_scaled(gradient(critic.spec, critic.params, tr.state.features, std::span(&up, 1)), 1.0);
  }
  st.loss = loss / n;
  if (!std::isfinite(st.loss) || !grad.all_finite()) {
    st.skipped = true;
    st.dropped = batch.size();
    return st;
  }
  optimizer_step(critic.params, grad, opt, Direction::minimize);
  st.used = batch.size();
  return st;
}

double weighted_log_likelihood(const StochasticPolicy& policy, std::span<const Transition> batch,
                               std::span<const double> weights, double entropy_bonus) {
  if (weights.size() != batch.size()) throw DimensionError("one weight per transition required");
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto p = policy.probs(batch[k].state);
    total += weights[k] * std::log(p[action_of(batch[k])]);
    if (entropy_bonus != 0.0) {
      double h = 0.0;
      for (double q : p) h -= q * std::log(q);
      total += entropy_bonus * h;
    }
  }
  return total / static_cast<double>(batch.size());
}

ParamVector weighted_log_likelihood_gradient(const StochasticPolicy& policy,
                                             std::span<const Transition> batch,
                                             std::span<const double> weights,
                                             double entropy_bonus) {
  if (weights.size() != batch.size()) throw DimensionError("one weight per transition required");
  ParamVector grad = ParamVector::zeros(policy.params.size());
  if (batch.empty()) return grad;
  const double n = static_cast<double>(batch.size());
  std::vector<double> up(policy.n_actions());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto p = policy.probs(batch[k].state);
    const std::size_t a = action_of(batch[k]);
    // d log p_a / d z = e_a - p
    for (std::size_t j = 0; j < p.size(); ++j) up[j] = -weights[k] * p[j];
    up[a] += weights[k];
    if (entropy_bonus != 0.0) {
      double h = 0.0;
      for (double q : p) h -= q * std::log(q);
      for (std::size_t j = 0; j < p.size(); ++j) up[j] -= entropy_bonus * p[j] * (std::log(p[j]) + h);
    }
    for (double& u : up) u /= n;
    grad.add_scaled(backward(policy.spec, policy.params, batch[k].state.features, up,
                             SeedPoint::pre_activation)
                        .params,
                    1.0);
  }
  return grad;
}

std::vector<double> batch_advantages(const CriticV& critic, std::span<const Transition> batch) {
  std::vector<double> out(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& tr = batch[k];
    try {
      out[k] = advantage(critic.reward(tr.response), critic.gamma, critic.value(tr.next_state),
                         critic.value(tr.state), tr.done);
    } catch (const NumericError&) {
      out[k] = kNaN;
    }
  }
  return out;
}

std::vector<double> normalize(std::vector<double> values) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  if (n == 0) return values;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  for (double& v : values) {
    if (std::isfinite(v)) v = sd > 1e-12 ? (v - mean) / sd : v - mean;
  }
  return values;
}

UpdateStats ascend_weighted(StochasticPolicy& policy, std::span<const Transition> batch,
                            std::span<const double> weights, OptState& opt, double entropy_bonus) {
  if (weights.size() != batch.size()) throw DimensionError("one weight per transition required");
  std::vector<Transition> kept;
  std::vector<double> w;
  kept.reserve(batch.size());
  w.reserve(batch.size());
  UpdateStats st;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (std::isfinite(weights[k])) {
      kept.push_back(batch[k]);
      w.push_back(weights[k]);
    } else {
      ++st.dropped;
    }
  }
  st.used = kept.size();
  if (kept.empty()) {
    st.skipped = true;
    return st;
  }
  st.mean_weight = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  const auto grad = weighted_log_likelihood_gradient(policy, kept, w, entropy_bonus);
  if (!grad.all_finite()) {
    st.skipped = true;
    return st;
  }
  st.loss = -weighted_log_likelihood(policy, kept, w, entropy_bonus);
  optimizer_step(policy.params, grad, opt, Direction::maximize);
  return st;
}

UpdateStats actor_update_aux(StochasticPolicy& policy, const CriticV& critic,
                             std::span<const Transition> batch, OptState& opt,
                             const ActorOptions& options) {
  if (batch.empty()) throw InvalidArgument("actor update: empty batch");
  auto adv = batch_advantages(critic, batch);
  if (options.normalize_advantage) adv = normalize(std::move(adv));
  return ascend_weighted(policy, batch, adv, opt, options.entropy_bonus);
}

double constrained_weight(std::span<const double> aux_probs, double cur_prob,
                          const LagrangeWeights& lambdas, double advantage, double clip_max) {
  if (aux_probs.size() != lambdas.lambdas.size()) {
    throw DimensionError("constrained_weight: one auxiliary probability per multiplier required");
  }
  lambdas.validate(true);
  if (!(cur_prob > 0.0)) throw InvalidArgument("constrained_weight: current probability must be > 0");
  if (!(clip_max > 0.0)) throw InvalidArgument("constrained_weight: clip_max must be > 0");
  const double total = lambdas.sum();
  double log_w = advantage / total;
  for (std::size_t i = 0; i < aux_probs.size(); ++i) {
    if (lambdas.lambdas[i] == 0.0) continue;
    if (!(aux_probs[i] > 0.0)) {
      throw InvalidArgument("constrained_weight: auxiliary probabilities must be > 0");
    }
    log_w += lambdas.lambdas[i] / total * std::log(aux_probs[i] / cur_prob);
  }
  return std::min(clip_max, std::exp(log_w));
}

std::vector<double> constrained_weights(const PolicySet& set, std::span<const Transition> batch,
                                        std::span<const double> advantages,
                                        const std::function<double(std::size_t)>& denominator,
                                        double clip_max) {
  set.lambdas.validate(true);
  std::vector<double> out(batch.size());
  std::vector<double> aux(set.aux_policies.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (!std::isfinite(advantages[k])) {
      out[k] = kNaN;
      continue;
    }
    const std::size_t a = action_of(batch[k]);
    for (std::size_t i = 0; i < aux.size(); ++i) {
      aux[i] = set.lambdas.lambdas[i] == 0.0 ? 1.0 : set.aux_policies[i].prob(batch[k].state, a);
    }
    out[k] = constrained_weight(aux, denominator(k), set.lambdas, advantages[k], clip_max);
  }
  return out;
}

UpdateStats actor_update_main(PolicySet& set, std::span<const Transition> batch, OptState& opt,
                              const ActorOptions& options) {
  if (batch.empty()) throw InvalidArgument("actor update: empty batch");
  auto adv = batch_advantages(set.main_critic, batch);
  if (options.normalize_advantage) adv = normalize(std::move(adv));
  const auto& main = set.main_policy;
  const auto weights = constrained_weights(
      set, batch, adv,
      [&](std::size_t k) { return main.prob(batch[k].state, action_of(batch[k])); },
      options.clip_max);
  return ascend_weighted(set.main_policy, batch, weights, opt, options.entropy_bonus);
}

double mean_kl(const StochasticPolicy& p, const StochasticPolicy& q,
               std::span<const Transition> batch) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& tr : batch) {
    if (tr.state.terminal) continue;
    const auto a = p.probs(tr.state);
    const auto b = q.probs(tr.state);
    double kl = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) kl += a[j] * (std::log(a[j]) - std::log(b[j]));
    total += kl;
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

// --- metrics -------------------------------------------------------------------

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows, std::size_t m,
                       bool deterministic_columns) {
  os << "iteration,stage,response";
  for (std::size_t i = 0; i < m; ++i) os << ",return_" << i;
  os << ",critic_loss,mean_weight";
  for (std::size_t i = 1; i < m; ++i) os << ",kl_" << i;
  if (deterministic_columns) os << ",mean_h,mean_q";
  os << "\n";
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.stage << ',' << r.response;
    for (std::size_t i = 0; i < m; ++i) {
      os << ',';
      if (i < r.mean_return.size()) os << fmt(r.mean_return[i]);
    }
    os << ',' << fmt(r.critic_loss) << ',' << fmt(r.mean_weight);
    for (std::size_t i = 1; i < m; ++i) {
      os << ',';
      if (i - 1 < r.kl.size()) os << fmt(r.kl[i - 1]);
    }
    if (deterministic_columns) {
      os << ',';
      if (r.mean_h) os << fmt(*r.mean_h);
      os << ',';
      if (r.mean_q) os << fmt(*r.mean_q);
    }
    os << "\n";
  }
}

// --- training ------------------------------------------------------------------

PolicySet init_policy_set(std::size_t state_dim, std::size_t n_items, const TwoStageConfig& config) {
  const std::size_t m = config.discounts.size();
  if (m < 2) throw InvalidArgument("two-stage training needs m >= 2 discounts");
  if (config.lambdas.size() != m - 1) {
    throw InvalidArgument("two-stage training needs " + std::to_string(m - 1) +
                          " Lagrange multipliers, got " + std::to_string(config.lambdas.size()));
  }
  const std::uint64_t root = derive_seed(config.seed, "init");
  PolicySet set;
  set.discounts = DiscountVector(config.discounts);
  set.lambdas = LagrangeWeights{config.lambdas};
  set.main_policy = make_stochastic_policy(state_dim, n_items, config.actor_hidden,
                                           derive_seed(root, "actor/0"), 0);
  set.main_critic = make_critic(state_dim, config.critic_hidden, derive_seed(root, "critic/0"), 0,
                                config.discounts[0]);
  for (std::size_t i = 1; i < m; ++i) {
    set.aux_policies.push_back(make_stochastic_policy(
        state_dim, n_items, config.actor_hidden, derive_seed(derive_seed(root, "actor"), i), i));
    set.aux_critics.push_back(make_critic(state_dim, config.critic_hidden,
                                          derive_seed(derive_seed(root, "critic"), i), i,
                                          config.discounts[i]));
  }
  set.validate();
  return set;
}

std::vector<double> collect_episodes(SessionSimulator& sim,
                                     const std::function<std::size_t(const StateVec&)>& choose,
                                     std::size_t episodes, std::uint64_t episode_root,
                                     std::vector<Transition>* out) {
  const std::size_t m = sim.config().m;
  const std::size_t n = sim.config().n_items;
  std::vector<double> sums(m, 0.0);
  for (std::size_t e = 0; e < episodes; ++e) {
    StateVec s = sim.reset(derive_seed(episode_root, e));
    while (true) {
      const std::size_t a = choose(s);
      auto res = sim.step(a);
      for (std::size_t i = 0; i < m; ++i) sums[i] += res.response[i];
      if (out) {
        Transition tr;
        tr.state = s;
        tr.action = ActionEmbed::one_hot(n, a);
        tr.action_index = a;
        tr.response = res.response;
        tr.next_state = res.next_state;
        tr.done = res.done;
        out->push_back(std::move(tr));
      }
      if (res.done) break;
      s = std::move(res.next_state);
    }
  }
  return sums;
}

namespace {

std::vector<double> per_episode(std::vector<double> sums, std::size_t episodes) {
  for (double& v : sums) v /= static_cast<double>(std::max<std::size_t>(episodes, 1));
  return sums;
}

}  // namespace

namespace {

void check_two_stage(const SimConfig& env, const TwoStageConfig& config) {
  env.validate();
  if (config.discounts.size() != env.m) {
    throw InvalidArgument("discount vector length must equal the simulator's m");
  }
  if (config.episodes_per_iteration == 0) throw InvalidArgument("episodes_per_iteration must be positive");
}

}  // namespace

void train_stage_one(const SimConfig& env, const TwoStageConfig& config, TrainResult& result) {
  check_two_stage(env, config);
  auto& set = result.policies;
  SessionSimulator sim(env);
  const std::uint64_t stage1_root = derive_seed(config.seed, "stage1");
  for (std::size_t i = 0; i + 1 < env.m; ++i) {
    auto& policy = set.aux_policies[i];
    auto& critic = set.aux_critics[i];
    auto opt_a = OptState::for_params(policy.params.size(), config.actor_step_size);
    auto opt_c = OptState::for_params(critic.params.size(), config.critic_step_size);
    DivergenceWatch watch{config.divergence_threshold, config.divergence_patience};
    const std::uint64_t aux_root = derive_seed(stage1_root, i + 1);
    for (std::size_t it = 0; it < config.stage1_iterations; ++it) {
      const std::uint64_t it_root = derive_seed(aux_root, it);
      Rng rng = make_rng(derive_seed(it_root, "actions"));
      std::vector<Transition> batch;
      const auto sums = collect_episodes(
          sim, [&](const StateVec& s) { return policy.sample(s, rng); },
          config.episodes_per_iteration, derive_seed(it_root, "episodes"), &batch);
      actor_update_aux(policy, critic, batch, opt_a, config.actor);
      double loss = 0.0;
      for (std::size_t c = 0; c < config.critic_steps_per_iteration; ++c) {
        loss = critic_update(critic, batch, opt_c).loss;
      }
      MetricRow row;
      row.iteration = it;
      row.stage = "stage1";
      row.response = i + 1;
      row.mean_return = per_episode(sums, config.episodes_per_iteration);
      row.critic_loss = loss;
      result.metrics.push_back(std::move(row));
      if (watch.observe(loss)) {
        result.diverged = true;
        result.failure = "stage one critic " + std::to_string(i + 1) + " diverged at iteration " +
                         std::to_string(it) + " (loss " + fmt(loss) + ")";
        return;
      }
    }
  }
}

void train_stage_two(const SimConfig& env, const TwoStageConfig& config, TrainResult& result) {
  check_two_stage(env, config);
  auto& set = result.policies;
  if (config.stage2_iterations > 0) set.lambdas.validate(true);
  SessionSimulator sim(env);
  const std::uint64_t stage2_root = derive_seed(config.seed, "stage2");
  auto opt_a = OptState::for_params(set.main_policy.params.size(), config.actor_step_size);
  auto opt_c = OptState::for_params(set.main_critic.params.size(), config.critic_step_size);
  DivergenceWatch watch{config.divergence_threshold, config.divergence_patience};
  for (std::size_t it = 0; it < config.stage2_iterations; ++it) {
    const std::uint64_t it_root = derive_seed(stage2_root, it);
    Rng rng = make_rng(derive_seed(it_root, "actions"));
    std::vector<Transition> batch;
    const auto sums = collect_episodes(
        sim, [&](const StateVec& s) { return set.main_policy.sample(s, rng); },
        config.episodes_per_iteration, derive_seed(it_root, "episodes"), &batch);
    const auto st = actor_update_main(set, batch, opt_a, config.actor);
    double loss = 0.0;
    for (std::size_t c = 0; c < config.critic_steps_per_iteration; ++c) {
      loss = critic_update(set.main_critic, batch, opt_c).loss;
    }
    MetricRow row;
    row.iteration = it;
    row.stage = "stage2";
    row.response = 0;
    row.mean_return = per_episode(sums, config.episodes_per_iteration);
    row.critic_loss = loss;
    row.mean_weight = st.mean_weight;
    for (const auto& aux : set.aux_policies) row.kl.push_back(mean_kl(set.main_policy, aux, batch));
    result.metrics.push_back(std::move(row));
    if (watch.observe(loss)) {
      result.diverged = true;
      result.failure = "stage two critic diverged at iteration " + std::to_string(it) + " (loss " +
                       fmt(loss) + ")";
      return;
    }
  }
}

TrainResult train_two_stage(const SimConfig& env, const TwoStageConfig& config) {
  check_two_stage(env, config);
  TrainResult result;
  result.policies = init_policy_set(env.state_dim, env.n_items, config);
  if (config.stage2_iterations > 0) result.policies.lambdas.validate(true);
  train_stage_one(env, config, result);
  if (!result.diverged) train_stage_two(env, config, result);
  return result;
}

CombinedResult train_combined(const SimConfig& env, const CombinedConfig& config,
                              CombinedSignal signal) {
  env.validate();
  const std::size_t m = env.m;
  if (config.discounts.size() != m) throw InvalidArgument("discount vector length must equal m");
  if (config.episodes_per_iteration == 0) throw InvalidArgument("episodes_per_iteration must be positive");
  if (signal == CombinedSignal::rcpo && config.lambdas.size() != m - 1) {
    throw InvalidArgument("rcpo needs m - 1 Lagrange multipliers");
  }
  if (signal == CombinedSignal::weighted_sum && config.reward_weights.size() != m) {
    throw InvalidArgument("weighted-sum baseline needs m reward weights");
  }
  DiscountVector discounts(config.discounts);
  const std::uint64_t root = derive_seed(config.seed, "init");
  CombinedResult result;
  result.policy = make_stochastic_policy(env.state_dim, env.n_items, config.actor_hidden,
                                         derive_seed(root, "actor/0"), 0);
  std::vector<CriticV> critics;
  if (signal == CombinedSignal::weighted_sum) {
    critics.push_back(make_critic(env.state_dim, config.critic_hidden, derive_seed(root, "critic/0"),
                                  0, discounts[0]));
    critics.back().reward_weights = config.reward_weights;
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      critics.push_back(make_critic(env.state_dim, config.critic_hidden,
                                    i == 0 ? derive_seed(root, "critic/0")
                                           : derive_seed(derive_seed(root, "critic"), i),
                                    i, discounts[i]));
    }
  }
  auto opt_a = OptState::for_params(result.policy.params.size(), config.actor_step_size);
  std::vector<OptState> opt_c;
  for (const auto& c : critics) opt_c.push_back(OptState::for_params(c.params.size(), config.critic_step_size));
  DivergenceWatch watch{config.divergence_threshold, config.divergence_patience};
  SessionSimulator sim(env);
  const std::uint64_t train_root = derive_seed(config.seed, "train");
  const std::vector<double> lambdas =
      signal == CombinedSignal::rcpo ? config.lambdas : std::vector<double>{};

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const std::uint64_t it_root = derive_seed(train_root, it);
    Rng rng = make_rng(derive_seed(it_root, "actions"));
    std::vector<Transition> batch;
    const auto sums = collect_episodes(
        sim, [&](const StateVec& s) { return result.policy.sample(s, rng); },
        config.episodes_per_iteration, derive_seed(it_root, "episodes"), &batch);
    std::vector<double> signal_adv;
    if (signal == CombinedSignal::weighted_sum) {
      signal_adv = batch_advantages(critics[0], batch);
    } else {
      std::vector<std::vector<double>> per(m);
      for (std::size_t i = 0; i < m; ++i) per[i] = batch_advantages(critics[i], batch);
      signal_adv.resize(batch.size());
      std::vector<double> adv(m);
      for (std::size_t k = 0; k < batch.size(); ++k) {
        for (std::size_t i = 0; i < m; ++i) adv[i] = per[i][k];
        signal_adv[k] = rcpo_combined_advantage(adv, lambdas);
      }
    }
    if (config.actor.normalize_advantage) signal_adv = normalize(std::move(signal_adv));
    ascend_weighted(result.policy, batch, signal_adv, opt_a, config.actor.entropy_bonus);
    double loss = 0.0;
    for (std::size_t c = 0; c < critics.size(); ++c) loss += critic_update(critics[c], batch, opt_c[c]).loss;
    MetricRow row;
    row.iteration = it;
    row.stage = signal == CombinedSignal::rcpo ? "rcpo" : "weighted_sum";
    row.mean_return = per_episode(sums, config.episodes_per_iteration);
    row.critic_loss = loss;
    result.metrics.push_back(std::move(row));
    if (watch.observe(loss)) {
      result.diverged = true;
      result.failure = "critic diverged at iteration " + std::to_string(it) + " (loss " + fmt(loss) + ")";
      return result;
    }
  }
  return result;
}

std::vector<double> evaluate_online(const SimConfig& env,
                                    const std::function<std::size_t(const StateVec&)>& choose,
                                    std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw InvalidArgument("evaluation needs at least one episode");
  SessionSimulator sim(env);
  return per_episode(collect_episodes(sim, choose, episodes, derive_seed(seed, "eval"), nullptr),
                     episodes);
}

}  // namespace tscac
