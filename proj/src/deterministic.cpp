#include "tscac/deterministic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "tscac/errors.hpp"

namespace tscac {

namespace {

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> v(a.begin(), a.end());
  v.insert(v.end(), b.begin(), b.end());
  return v;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("action embeddings differ in dimension");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return d;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<double> batch_mean_response(std::span<const Transition> batch, std::size_t m) {
  std::vector<double> out(m, 0.0);
  for (const auto& tr : batch) {
    for (std::size_t i = 0; i < m; ++i) out[i] += tr.response[i];
  }
  for (double& v : out) v /= static_cast<double>(std::max<std::size_t>(batch.size(), 1));
  return out;
}

}  // namespace

// --- actors and critics ------------------------------------------------------

std::vector<double> DeterministicPolicy::act(const StateVec& s) const {
  return forward(spec, params, s.features);
}

std::vector<double> DeterministicPolicy::explore(const StateVec& s, Rng& rng) const {
  auto a = act(s);
  if (exploration_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, exploration_noise_std);
    for (double& v : a) v += noise(rng);
  }
  return a;
}

DeterministicPolicy make_deterministic_policy(std::size_t state_dim, std::size_t action_dim,
                                              std::vector<std::size_t> hidden, std::uint64_t seed,
                                              std::size_t response) {
  DeterministicPolicy p;
  p.spec = ApproxSpec{state_dim, std::move(hidden), action_dim, OutputActivation::tanh, seed};
  p.spec.validate();
  p.params = init_params(p.spec);
  p.response = response;
  return p;
}

double CriticQ::value(const StateVec& s, std::span<const double> a) const {
  if (s.terminal) return 0.0;
  return forward(spec, params, concat(s.features, a))[0];
}

std::vector<double> CriticQ::action_gradient(const StateVec& s, std::span<const double> a) const {
  const double one = 1.0;
  const auto in = backward(spec, params, concat(s.features, a), std::span(&one, 1)).input;
  return {in.begin() + static_cast<std::ptrdiff_t>(s.features.size()), in.end()};
}

double CriticQ::reward(const ResponseVector& r) const {
  if (reward_weights.empty()) {
    if (response >= r.size()) throw DimensionError("critic response index out of range");
    return r[response];
  }
  if (reward_weights.size() != r.size()) throw DimensionError("reward weights length differs from m");
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) s += reward_weights[k] * r[k];
  return s;
}

CriticQ make_q_critic(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                      std::uint64_t seed, std::size_t response, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("critic gamma must lie in [0, 1)");
  CriticQ c;
  c.spec = ApproxSpec{state_dim + action_dim, std::move(hidden), 1, OutputActivation::linear, seed};
  c.spec.validate();
  c.params = init_params(c.spec);
  c.response = response;
  c.gamma = gamma;
  return c;
}

UpdateStats q_critic_update(CriticQ& critic, const CriticQ& target_critic,
                            const DeterministicPolicy& target_policy,
                            std::span<const Transition> batch, OptState& opt) {
  if (batch.empty()) throw InvalidArgument("q_critic_update: empty batch");
  const double n = static_cast<double>(batch.size());
  UpdateStats st;
  ParamVector grad = ParamVector::zeros(critic.params.size());
  double loss = 0.0;
  for (const auto& tr : batch) {
    const double q_next =
        tr.done ? 0.0 : target_critic.value(tr.next_state, target_policy.act(tr.next_state));
    const double target = td_target(critic.reward(tr.response), critic.gamma, q_next, tr.done);
    const auto in = concat(tr.state.features, tr.action.to_vector());
    const double delta = target - forward(critic.spec, critic.params, in)[0];
    loss += delta * delta;
    if (!std::isfinite(loss)) break;
    const double up = -2.0 * delta / n;
    grad.add_scaled(gradient(critic.spec, critic.params, in, std::span(&up, 1)), 1.0);
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

double ddpg_objective(const DeterministicPolicy& policy, const CriticQ& critic,
                      std::span<const Transition> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& tr : batch) total += critic.value(tr.state, policy.act(tr.state));
  return total / static_cast<double>(batch.size());
}

ParamVector ddpg_objective_gradient(const DeterministicPolicy& policy, const CriticQ& critic,
                                    std::span<const Transition> batch) {
  ParamVector grad = ParamVector::zeros(policy.params.size());
  const double n = static_cast<double>(batch.size());
  for (const auto& tr : batch) {
    if (tr.state.terminal) continue;
    auto dq = critic.action_gradient(tr.state, policy.act(tr.state));
    for (double& v : dq) v /= n;
    grad.add_scaled(gradient(policy.spec, policy.params, tr.state.features, dq), 1.0);
  }
  return grad;
}

UpdateStats ddpg_actor_update(DeterministicPolicy& policy, const CriticQ& critic,
                              std::span<const Transition> batch, OptState& opt) {
  if (batch.empty()) throw InvalidArgument("ddpg_actor_update: empty batch");
  UpdateStats st;
  const auto grad = ddpg_objective_gradient(policy, critic, batch);
  if (!grad.all_finite()) {
    st.skipped = true;
    st.dropped = batch.size();
    return st;
  }
  st.loss = -ddpg_objective(policy, critic, batch);
  optimizer_step(policy.params, grad, opt, Direction::maximize);
  st.used = batch.size();
  return st;
}

// --- constrained objective ----------------------------------------------------

double h_similarity(std::span<const double> a, std::span<const double> b) {
  return std::exp(-0.5 * sq_dist(a, b));
}

double constrained_det_objective(const StateVec& state, const DeterministicPolicy& policy,
                                 std::span<const DeterministicPolicy> aux,
                                 const CriticQ& critic, const LagrangeWeights& lambdas) {
  if (aux.size() != lambdas.lambdas.size()) {
    throw DimensionError("constrained objective: one multiplier per auxiliary policy required");
  }
  lambdas.validate(true);
  const double total = lambdas.sum();
  const auto a1 = policy.act(state);
  double log_h = 0.0;
  for (std::size_t i = 0; i < aux.size(); ++i) {
    if (lambdas.lambdas[i] == 0.0) continue;
    log_h += lambdas.lambdas[i] / total * std::log(h_similarity(a1, aux[i].act(state)));
  }
  return std::exp(log_h) * critic.value(state, a1) / total;
}

double constrained_det_batch_objective(const DeterministicPolicy& policy,
                                       std::span<const DeterministicPolicy> aux,
                                       const CriticQ& critic, const LagrangeWeights& lambdas,
                                       std::span<const Transition> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& tr : batch) total += constrained_det_objective(tr.state, policy, aux, critic, lambdas);
  return total / static_cast<double>(batch.size());
}

namespace {

// Gradient of the batch objective and the mean h-factor / Q along the way.
ParamVector constrained_gradient_impl(const DeterministicPolicy& policy,
                                      std::span<const DeterministicPolicy> aux,
                                      const CriticQ& critic, const LagrangeWeights& lambdas,
                                      std::span<const Transition> batch, double* mean_h,
                                      double* mean_q) {
  if (aux.size() != lambdas.lambdas.size()) {
    throw DimensionError("constrained objective: one multiplier per auxiliary policy required");
  }
  lambdas.validate(true);
  const double total = lambdas.sum();
  const double n = static_cast<double>(batch.size());
  ParamVector grad = ParamVector::zeros(policy.params.size());
  double hs = 0.0, qs = 0.0;
  for (const auto& tr : batch) {
    const auto a1 = policy.act(tr.state);
    // H = exp(-sum_i e_i |a1 - a_i|^2 / 2), dH/da1 = -H sum_i e_i (a1 - a_i)
    std::vector<double> pull(a1.size(), 0.0);
    double log_h = 0.0;
    for (std::size_t i = 0; i < aux.size(); ++i) {
      const double e = lambdas.lambdas[i] / total;
      if (e == 0.0) continue;
      const auto ai = aux[i].act(tr.state);
      log_h -= 0.5 * e * sq_dist(a1, ai);
      for (std::size_t k = 0; k < a1.size(); ++k) pull[k] += e * (a1[k] - ai[k]);
    }
    const double h = std::exp(log_h);
    const double q = critic.value(tr.state, a1);
    const auto dq = critic.action_gradient(tr.state, a1);
    std::vector<double> up(a1.size());
    for (std::size_t k = 0; k < a1.size(); ++k) up[k] = h * (dq[k] - q * pull[k]) / total / n;
    grad.add_scaled(gradient(policy.spec, policy.params, tr.state.features, up), 1.0);
    hs += h;
    qs += q;
  }
  if (mean_h) *mean_h = batch.empty() ? 0.0 : hs / n;
  if (mean_q) *mean_q = batch.empty() ? 0.0 : qs / n;
  return grad;
}

}  // namespace

ParamVector constrained_det_gradient(const DeterministicPolicy& policy,
                                     std::span<const DeterministicPolicy> aux,
                                     const CriticQ& critic, const LagrangeWeights& lambdas,
                                     std::span<const Transition> batch) {
  return constrained_gradient_impl(policy, aux, critic, lambdas, batch, nullptr, nullptr);
}

ConstrainedDetStats constrained_det_update(DeterministicPolicy& policy,
                                           std::span<const DeterministicPolicy> aux,
                                           const CriticQ& critic, const LagrangeWeights& lambdas,
                                           std::span<const Transition> batch, OptState& opt) {
  if (batch.empty()) throw InvalidArgument("constrained_det_update: empty batch");
  ConstrainedDetStats st;
  const auto grad =
      constrained_gradient_impl(policy, aux, critic, lambdas, batch, &st.mean_h, &st.mean_q);
  if (!grad.all_finite()) {
    st.update.skipped = true;
    st.update.dropped = batch.size();
    return st;
  }
  optimizer_step(policy.params, grad, opt, Direction::maximize);
  st.update.used = batch.size();
  return st;
}

double rcpo_combined_advantage(std::span<const double> adv, std::span<const double> lambdas) {
  if (adv.size() != lambdas.size() + 1) {
    throw DimensionError("rcpo: expected " + std::to_string(lambdas.size() + 1) +
                         " advantages, got " + std::to_string(adv.size()));
  }
  double out = adv[0];
  for (std::size_t i = 0; i < lambdas.size(); ++i) out += lambdas[i] * adv[i + 1];
  return out;
}

double behavior_nll(const StochasticPolicy& policy, std::span<const Transition> batch) {
  const std::vector<double> ones(batch.size(), 1.0);
  return -weighted_log_likelihood(policy, batch, ones);
}

UpdateStats behavior_clone_update(StochasticPolicy& policy, std::span<const Transition> batch,
                                  OptState& opt) {
  if (batch.empty()) throw InvalidArgument("behavior_clone_update: empty batch");
  const std::vector<double> ones(batch.size(), 1.0);
  return ascend_weighted(policy, batch, ones, opt, 0.0);
}

// --- item embeddings -------------------------------------------------------------

ItemTable build_item_table(const ReplayDataset& dataset, std::size_t n_items) {
  const std::size_t m = dataset.m;
  std::vector<std::vector<double>> sums(n_items, std::vector<double>(m, 0.0));
  std::vector<std::size_t> counts(n_items, 0);
  for (const auto& traj : dataset.trajectories) {
    for (const auto& tr : traj.transitions) {
      if (!tr.action_index) throw InvalidArgument("item table needs logged item indices");
      const std::size_t j = *tr.action_index;
      if (j >= n_items) throw InvalidArgument("logged item index out of range");
      for (std::size_t i = 0; i < m; ++i) sums[j][i] += tr.response[i];
      ++counts[j];
    }
  }
  ItemTable table;
  table.rows.assign(n_items, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0, sq = 0.0;
    std::size_t seen = 0;
    for (std::size_t j = 0; j < n_items; ++j) {
      if (!counts[j]) continue;
      const double x = sums[j][i] / static_cast<double>(counts[j]);
      mu += x;
      sq += x * x;
      ++seen;
    }
    if (!seen) continue;
    mu /= static_cast<double>(seen);
    const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(seen) - mu * mu));
    for (std::size_t j = 0; j < n_items; ++j) {
      if (!counts[j] || sd < 1e-12) continue;
      table.rows[j][i] = (sums[j][i] / static_cast<double>(counts[j]) - mu) / sd;
    }
  }
  return table;
}

std::vector<Transition> embed_actions(const ReplayDataset& dataset, const ItemTable& table) {
  std::vector<Transition> out;
  out.reserve(dataset.transition_count());
  for (const auto& traj : dataset.trajectories) {
    for (const auto& tr : traj.transitions) {
      if (!tr.action_index || *tr.action_index >= table.size()) {
        throw InvalidArgument("cannot embed a transition without a valid item index");
      }
      Transition c = tr;
      c.action = ActionEmbed::dense(table.rows[*tr.action_index]);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<double> item_distribution(std::span<const double> action, const ItemTable& table,
                                      double inverse_temperature) {
  if (table.size() == 0) throw InvalidArgument("empty item table");
  std::vector<double> z(table.size());
  for (std::size_t j = 0; j < table.size(); ++j) {
    if (table.rows[j].size() != action.size()) throw DimensionError("action and item dimensions differ");
    double d = 0.0;
    for (std::size_t k = 0; k < action.size(); ++k) d += action[k] * table.rows[j][k];
    z[j] = inverse_temperature * d;
  }
  return softmax(z);
}

// --- offline trainers --------------------------------------------------------------

namespace {

struct QLearner {
  CriticQ critic;
  CriticQ target;
  OptState opt;
};

struct ActorLearner {
  DeterministicPolicy policy;
  DeterministicPolicy target;
  OptState opt;
};

std::vector<Transition> sample_batch(std::span<const Transition> data, std::size_t size, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<Transition> batch;
  batch.reserve(size);
  for (std::size_t k = 0; k < size; ++k) batch.push_back(data[pick(rng)]);
  return batch;
}

}  // namespace

OfflineDetResult train_offline_deterministic(std::span<const Transition> data, std::size_t m,
                                             const OfflineDetConfig& config, DetAlgorithm algorithm) {
  if (data.empty()) throw InvalidArgument("offline training needs a non-empty dataset");
  if (config.batch_size == 0 || config.target_refresh == 0) {
    throw InvalidArgument("batch_size and target_refresh must be positive");
  }
  if (config.discounts.size() != m) throw InvalidArgument("discount vector length must equal m");
  const DiscountVector discounts(config.discounts);
  const std::size_t state_dim = data.front().state.features.size();
  const std::size_t action_dim = data.front().action.dim();
  if (action_dim == 0) throw InvalidArgument("offline deterministic training needs embedded actions");
  if (algorithm != DetAlgorithm::ddpg_weighted && config.lambdas.size() != m - 1) {
    throw InvalidArgument("expected " + std::to_string(m - 1) + " Lagrange multipliers");
  }
  if (algorithm == DetAlgorithm::ddpg_weighted && config.reward_weights.size() != m) {
    throw InvalidArgument("weighted-sum DDPG needs m reward weights");
  }
  const LagrangeWeights lambdas{config.lambdas};
  if (algorithm == DetAlgorithm::constrained) lambdas.validate(true);
  if (algorithm == DetAlgorithm::rcpo) lambdas.validate(false);

  const std::uint64_t init_root = derive_seed(config.seed, "init");
  auto make_actor = [&](std::size_t response) {
    auto p = make_deterministic_policy(state_dim, action_dim, config.actor_hidden,
                                       derive_seed(derive_seed(init_root, "actor"), response), response);
    return ActorLearner{p, p, OptState::for_params(p.params.size(), config.actor_step_size)};
  };
  auto make_learner = [&](std::size_t response, double gamma) {
    auto c = make_q_critic(state_dim, action_dim, config.critic_hidden,
                           derive_seed(derive_seed(init_root, "critic"), response), response, gamma);
    return QLearner{c, c, OptState::for_params(c.params.size(), config.critic_step_size)};
  };

  OfflineDetResult result;
  Rng rng = make_rng(derive_seed(config.seed, "offline/batches"));

  // One stage: critics learn against the actor's target, the actor ascends
  // `actor_step` after the warm-up; targets refresh every target_refresh steps.
  auto run_stage = [&](const std::string& stage, std::size_t response, ActorLearner& actor,
                       std::vector<QLearner>& critics, const auto& actor_step) -> bool {
    std::size_t streak = 0;
    for (std::size_t it = 0; it < config.iterations; ++it) {
      const auto batch = sample_batch(data, config.batch_size, rng);
      double loss = 0.0;
      for (auto& q : critics) loss += q_critic_update(q.critic, q.target, actor.target, batch, q.opt).loss;
      MetricRow row;
      row.iteration = it;
      row.stage = stage;
      row.response = response;
      row.mean_return = batch_mean_response(batch, m);
      row.critic_loss = loss;
      if (it >= config.critic_warmup) actor_step(batch, row);
      if ((it + 1) % config.target_refresh == 0) {
        actor.target = actor.policy;
        for (auto& q : critics) q.target = q.critic;
      }
      result.metrics.push_back(std::move(row));
      if (!std::isfinite(loss) || loss > config.divergence_threshold) {
        if (++streak >= config.divergence_patience) {
          result.diverged = true;
          result.failure = stage + " critic diverged at iteration " + std::to_string(it) +
                           " (loss " + fmt(loss) + ")";
          return false;
        }
      } else {
        streak = 0;
      }
    }
    return true;
  };

  if (algorithm == DetAlgorithm::ddpg_weighted) {
    auto actor = make_actor(0);
    std::vector<QLearner> critics{make_learner(0, discounts[0])};
    critics[0].critic.reward_weights = config.reward_weights;
    critics[0].target = critics[0].critic;
    run_stage("ddpg_weighted", 0, actor, critics, [&](const std::vector<Transition>& b, MetricRow& row) {
      const auto st = ddpg_actor_update(actor.policy, critics[0].critic, b, actor.opt);
      row.mean_q = -st.loss;
    });
    result.policy = actor.policy;
    return result;
  }

  if (algorithm == DetAlgorithm::rcpo) {
    auto actor = make_actor(0);
    std::vector<QLearner> critics;
    for (std::size_t i = 0; i < m; ++i) critics.push_back(make_learner(i, discounts[i]));
    run_stage("rcpo", 0, actor, critics, [&](const std::vector<Transition>& b, MetricRow& row) {
      ParamVector grad = ParamVector::zeros(actor.policy.params.size());
      std::vector<double> q(m);
      for (std::size_t i = 0; i < m; ++i) {
        grad.add_scaled(ddpg_objective_gradient(actor.policy, critics[i].critic, b),
                        i == 0 ? 1.0 : config.lambdas[i - 1]);
        q[i] = ddpg_objective(actor.policy, critics[i].critic, b);
      }
      row.mean_q = rcpo_combined_advantage(q, config.lambdas);
      if (grad.all_finite()) optimizer_step(actor.policy.params, grad, actor.opt, Direction::maximize);
    });
    result.policy = actor.policy;
    return result;
  }

  // constrained: stage one per auxiliary response, then the main actor.
  for (std::size_t i = 1; i < m; ++i) {
    auto actor = make_actor(i);
    std::vector<QLearner> critics{make_learner(i, discounts[i])};
    const bool ok = run_stage("stage1", i, actor, critics, [&](const std::vector<Transition>& b, MetricRow& row) {
      const auto st = ddpg_actor_update(actor.policy, critics[0].critic, b, actor.opt);
      row.mean_q = -st.loss;
    });
    result.aux.push_back(actor.policy);
    if (!ok) return result;
  }
  auto actor = make_actor(0);
  std::vector<QLearner> critics{make_learner(0, discounts[0])};
  run_stage("stage2", 0, actor, critics, [&](const std::vector<Transition>& b, MetricRow& row) {
    const auto st = constrained_det_update(actor.policy, result.aux, critics[0].critic, lambdas, b, actor.opt);
    row.mean_h = st.mean_h;
    row.mean_q = st.mean_q;
  });
  result.policy = actor.policy;
  return result;
}

BehaviorCloneResult train_behavior_clone(std::span<const Transition> data, std::size_t n_items,
                                         std::size_t m, const BehaviorCloneConfig& config) {
  if (data.empty()) throw InvalidArgument("behavior cloning needs a non-empty dataset");
  if (config.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  BehaviorCloneResult result;
  result.policy = make_stochastic_policy(data.front().state.features.size(), n_items, config.hidden,
                                         derive_seed(derive_seed(config.seed, "init"), "bc"), 0);
  auto opt = OptState::for_params(result.policy.params.size(), config.step_size);
  Rng rng = make_rng(derive_seed(config.seed, "offline/batches"));
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto batch = sample_batch(data, config.batch_size, rng);
    const auto st = behavior_clone_update(result.policy, batch, opt);
    MetricRow row;
    row.iteration = it;
    row.stage = "bc";
    row.mean_return = batch_mean_response(batch, m);
    row.critic_loss = st.loss;
    result.metrics.push_back(std::move(row));
  }
  return result;
}

}  // namespace tscac
