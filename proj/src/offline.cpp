#include "tscac/offline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "tscac/errors.hpp"

namespace tscac {

namespace {

double behavior_prob_of(const Transition& tr, const ISConfig& config) {
  if (!tr.behavior_prob) throw InvalidArgument("importance ratio needs a logged behavior probability");
  const double pb = *tr.behavior_prob;
  if (!(pb >= config.min_behavior_prob)) {
    throw InvalidArgument("behavior probability below min_behavior_prob");
  }
  return pb;
}

std::size_t logged_action(const Transition& tr) {
  if (tr.action_index) return *tr.action_index;
  if (auto h = tr.action.hot_index()) return *h;
  throw InvalidArgument("offline learning needs logged item indices");
}

}  // namespace

ActionProb action_prob(const StochasticPolicy& policy) {
  return [&policy](const StateVec& s, std::size_t a) { return policy.prob(s, a); };
}

void ISConfig::validate() const {
  if (!(ratio_clip >= 1.0)) throw InvalidArgument("ratio_clip must be >= 1");
  if (!(min_behavior_prob > 0.0 && min_behavior_prob <= 1.0)) {
    throw InvalidArgument("min_behavior_prob must lie in (0, 1]");
  }
}

double first_order_ratio(const Transition& tr, const ActionProb& pi, const ISConfig& config) {
  config.validate();
  const double pb = behavior_prob_of(tr, config);
  return std::min(config.ratio_clip, pi(tr.state, logged_action(tr)) / pb);
}

double first_order_ratio(const Transition& tr, const StochasticPolicy& policy, const ISConfig& config) {
  return first_order_ratio(tr, action_prob(policy), config);
}

double full_trajectory_ratio(const Trajectory& traj, std::size_t t, const ActionProb& pi,
                             const ISConfig& config) {
  config.validate();
  if (t >= traj.transitions.size()) throw InvalidArgument("trajectory prefix out of range");
  double w = 1.0;
  for (std::size_t k = 0; k <= t; ++k) {
    const auto& tr = traj.transitions[k];
    w *= pi(tr.state, logged_action(tr)) / behavior_prob_of(tr, config);
  }
  return std::min(config.ratio_clip, w);
}

double full_trajectory_ratio(const Trajectory& traj, std::size_t t, const StochasticPolicy& policy,
                             const ISConfig& config) {
  return full_trajectory_ratio(traj, t, action_prob(policy), config);
}

std::vector<OfflineSample> all_samples(const ReplayDataset& dataset) {
  std::vector<OfflineSample> out;
  out.reserve(dataset.transition_count());
  for (const auto& traj : dataset.trajectories) {
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) out.push_back({&traj, t});
  }
  return out;
}

std::vector<OfflineSample> sample_offline_batch(const ReplayDataset& dataset, std::size_t size, Rng& rng) {
  const auto all = all_samples(dataset);
  if (all.empty()) throw InvalidArgument("cannot sample from an empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<OfflineSample> out;
  out.reserve(size);
  for (std::size_t k = 0; k < size; ++k) out.push_back(all[pick(rng)]);
  return out;
}

std::vector<Transition> transitions_of(std::span<const OfflineSample> batch) {
  std::vector<Transition> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.transition());
  return out;
}

std::vector<double> importance_ratios(std::span<const OfflineSample> batch, const ActionProb& pi,
                                      const ISConfig& config) {
  std::vector<double> out(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    out[k] = config.mode == ISMode::first_order
                 ? first_order_ratio(batch[k].transition(), pi, config)
                 : full_trajectory_ratio(*batch[k].trajectory, batch[k].t, pi, config);
  }
  return out;
}

UpdateStats offline_actor_update_aux(StochasticPolicy& policy, const CriticV& critic,
                                     std::span<const OfflineSample> batch, const ISConfig& config,
                                     OptState& opt, const ActorOptions& options) {
  if (batch.empty()) throw InvalidArgument("actor update: empty batch");
  const auto trs = transitions_of(batch);
  auto adv = batch_advantages(critic, trs);
  if (options.normalize_advantage) adv = normalize(std::move(adv));
  const auto ratios = importance_ratios(batch, action_prob(policy), config);
  std::vector<double> w(adv.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = ratios[k] * adv[k];
  return ascend_weighted(policy, trs, w, opt, options.entropy_bonus);
}

UpdateStats offline_actor_update_main(PolicySet& set, std::span<const OfflineSample> batch,
                                      const ISConfig& config, OptState& opt,
                                      const ActorOptions& options) {
  if (batch.empty()) throw InvalidArgument("actor update: empty batch");
  config.validate();
  const auto trs = transitions_of(batch);
  auto adv = batch_advantages(set.main_critic, trs);
  if (options.normalize_advantage) adv = normalize(std::move(adv));
  const auto weights = constrained_weights(
      set, trs, adv, [&](std::size_t k) { return behavior_prob_of(trs[k], config); },
      options.clip_max);
  return ascend_weighted(set.main_policy, trs, weights, opt, options.entropy_bonus);
}

// --- offline trainers -------------------------------------------------------------

namespace {

std::size_t dataset_items(const ReplayDataset& dataset) {
  for (const auto& traj : dataset.trajectories) {
    for (const auto& tr : traj.transitions) {
      if (!tr.action.hot_index()) {
        throw InvalidArgument("softmax policies need one-hot logged actions");
      }
      return tr.action.dim();
    }
  }
  throw InvalidArgument("offline training needs a non-empty dataset");
}

std::size_t dataset_state_dim(const ReplayDataset& dataset) {
  return dataset.trajectories.front().transitions.front().state.features.size();
}

void check_offline(const ReplayDataset& dataset, const OfflineStochasticConfig& config) {
  dataset_items(dataset);
  config.is.validate();
  if (config.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (config.discounts.size() != dataset.m) {
    throw InvalidArgument("discount vector length must equal the dataset's m");
  }
}

std::vector<double> mean_batch_response(std::span<const OfflineSample> batch, std::size_t m) {
  std::vector<double> out(m, 0.0);
  for (const auto& s : batch) {
    for (std::size_t i = 0; i < m; ++i) out[i] += s.transition().response[i];
  }
  for (double& v : out) v /= static_cast<double>(batch.size());
  return out;
}

std::string fmt_loss(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

bool bad_loss(double loss, const OfflineStochasticConfig& config, std::size_t& streak) {
  if (!std::isfinite(loss) || loss > config.divergence_threshold) return ++streak >= config.divergence_patience;
  streak = 0;
  return false;
}

}  // namespace

TrainResult train_offline_two_stage(const ReplayDataset& dataset, const OfflineStochasticConfig& config) {
  check_offline(dataset, config);
  TwoStageConfig init;
  init.actor_hidden = config.actor_hidden;
  init.critic_hidden = config.critic_hidden;
  init.lambdas = config.lambdas;
  init.discounts = config.discounts;
  init.seed = config.seed;
  TrainResult result;
  result.policies = init_policy_set(dataset_state_dim(dataset), dataset_items(dataset), init);
  auto& set = result.policies;
  if (config.stage2_iterations > 0) set.lambdas.validate(true);
  const std::size_t m = dataset.m;
  Rng rng = make_rng(derive_seed(config.seed, "offline/batches"));

  for (std::size_t i = 0; i + 1 < m; ++i) {
    auto& policy = set.aux_policies[i];
    auto& critic = set.aux_critics[i];
    auto opt_a = OptState::for_params(policy.params.size(), config.actor_step_size);
    auto opt_c = OptState::for_params(critic.params.size(), config.critic_step_size);
    std::size_t streak = 0;
    for (std::size_t it = 0; it < config.stage1_iterations; ++it) {
      const auto batch = sample_offline_batch(dataset, config.batch_size, rng);
      offline_actor_update_aux(policy, critic, batch, config.is, opt_a, config.actor);
      const double loss = critic_update(critic, transitions_of(batch), opt_c).loss;
      MetricRow row;
      row.iteration = it;
      row.stage = "stage1";
      row.response = i + 1;
      row.mean_return = mean_batch_response(batch, m);
      row.critic_loss = loss;
      result.metrics.push_back(std::move(row));
      if (bad_loss(loss, config, streak)) {
        result.diverged = true;
        result.failure = "stage one critic " + std::to_string(i + 1) + " diverged at iteration " +
                         std::to_string(it) + " (loss " + fmt_loss(loss) + ")";
        return result;
      }
    }
  }

  auto opt_a = OptState::for_params(set.main_policy.params.size(), config.actor_step_size);
  auto opt_c = OptState::for_params(set.main_critic.params.size(), config.critic_step_size);
  std::size_t streak = 0;
  for (std::size_t it = 0; it < config.stage2_iterations; ++it) {
    const auto batch = sample_offline_batch(dataset, config.batch_size, rng);
    const auto st = offline_actor_update_main(set, batch, config.is, opt_a, config.actor);
    const auto trs = transitions_of(batch);
    const double loss = critic_update(set.main_critic, trs, opt_c).loss;
    MetricRow row;
    row.iteration = it;
    row.stage = "stage2";
    row.mean_return = mean_batch_response(batch, m);
    row.critic_loss = loss;
    row.mean_weight = st.mean_weight;
    for (const auto& aux : set.aux_policies) row.kl.push_back(mean_kl(set.main_policy, aux, trs));
    result.metrics.push_back(std::move(row));
    if (bad_loss(loss, config, streak)) {
      result.diverged = true;
      result.failure = "stage two critic diverged at iteration " + std::to_string(it) + " (loss " +
                       fmt_loss(loss) + ")";
      return result;
    }
  }
  return result;
}

CombinedResult train_offline_weighted(const ReplayDataset& dataset, const OfflineStochasticConfig& config) {
  check_offline(dataset, config);
  if (config.reward_weights.size() != dataset.m) {
    throw InvalidArgument("weighted-sum training needs m reward weights");
  }
  const std::uint64_t root = derive_seed(config.seed, "init");
  CombinedResult result;
  result.policy = make_stochastic_policy(dataset_state_dim(dataset), dataset_items(dataset),
                                         config.actor_hidden, derive_seed(root, "actor/0"), 0);
  CriticV critic = make_critic(dataset_state_dim(dataset), config.critic_hidden,
                               derive_seed(root, "critic/0"), 0, config.discounts[0]);
  critic.reward_weights = config.reward_weights;
  auto opt_a = OptState::for_params(result.policy.params.size(), config.actor_step_size);
  auto opt_c = OptState::for_params(critic.params.size(), config.critic_step_size);
  Rng rng = make_rng(derive_seed(config.seed, "offline/batches"));
  std::size_t streak = 0;
  for (std::size_t it = 0; it < config.stage2_iterations; ++it) {
    const auto batch = sample_offline_batch(dataset, config.batch_size, rng);
    offline_actor_update_aux(result.policy, critic, batch, config.is, opt_a, config.actor);
    const double loss = critic_update(critic, transitions_of(batch), opt_c).loss;
    MetricRow row;
    row.iteration = it;
    row.stage = "weighted";
    row.mean_return = mean_batch_response(batch, dataset.m);
    row.critic_loss = loss;
    result.metrics.push_back(std::move(row));
    if (bad_loss(loss, config, streak)) {
      result.diverged = true;
      result.failure = "critic diverged at iteration " + std::to_string(it) + " (loss " +
                       fmt_loss(loss) + ")";
      return result;
    }
  }
  return result;
}

// --- multi-critic ------------------------------------------------------------------

std::size_t MultiCritic::heads() const {
  return shared_bottom ? shared_spec.output_dim : critics.size();
}

double MultiCritic::head_value(std::size_t k, const StateVec& s) const {
  if (k >= heads()) throw InvalidArgument("critic head out of range");
  if (s.terminal) return 0.0;
  if (shared_bottom) return forward(shared_spec, shared_params, s.features)[k];
  return critics[k].value(s);
}

double MultiCritic::combined_value(const StateVec& s) const {
  if (s.terminal) return 0.0;
  if (shared_bottom) {
    const auto v = forward(shared_spec, shared_params, s.features);
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum;
  }
  double sum = 0.0;
  for (const auto& c : critics) sum += c.value(s);
  return sum;
}

MultiCritic multi_critic_train(const ReplayDataset& dataset, const MultiCriticConfig& config) {
  dataset.validate();
  if (dataset.transition_count() == 0) throw InvalidArgument("critic training needs a non-empty dataset");
  if (config.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  const std::size_t m = dataset.m;
  const std::size_t state_dim = dataset.trajectories.front().transitions.front().state.features.size();
  const std::uint64_t root = derive_seed(config.seed, "init");
  MultiCritic mc;
  mc.mode = config.mode;

  if (config.mode == CriticMode::separate) {
    if (config.discounts.size() != m) throw InvalidArgument("separate critics need one discount per response");
    DiscountVector check(config.discounts);
    if (config.shared_bottom) {
      mc.shared_bottom = true;
      mc.shared_spec = ApproxSpec{state_dim, config.hidden, m, OutputActivation::linear,
                                  derive_seed(root, "critic/shared")};
      mc.shared_spec.validate();
      mc.shared_params = init_params(mc.shared_spec);
      mc.shared_gammas = config.discounts;
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        mc.critics.push_back(make_critic(state_dim, config.hidden,
                                         derive_seed(derive_seed(root, "critic"), i), i,
                                         config.discounts[i]));
      }
    }
  } else {
    auto c = make_critic(state_dim, config.hidden, derive_seed(derive_seed(root, "critic"), 0), 0,
                         config.shared_gamma);
    c.reward_weights.assign(m, 1.0);
    mc.critics.push_back(std::move(c));
  }

  Rng rng = make_rng(derive_seed(config.seed, "critic/batches"));
  if (mc.shared_bottom) {
    auto opt = OptState::for_params(mc.shared_params.size(), config.step_size);
    for (std::size_t it = 0; it < config.iterations; ++it) {
      const auto batch = transitions_of(sample_offline_batch(dataset, config.batch_size, rng));
      const double n = static_cast<double>(batch.size());
      const MultiCritic frozen = mc;
      ParamVector grad = ParamVector::zeros(mc.shared_params.size());
      std::vector<double> up(m);
      for (const auto& tr : batch) {
        const auto v = forward(mc.shared_spec, mc.shared_params, tr.state.features);
        for (std::size_t i = 0; i < m; ++i) {
          const double target =
              td_target(tr.response[i], mc.shared_gammas[i], frozen.head_value(i, tr.next_state), tr.done);
          up[i] = -2.0 * (target - v[i]) / n;
        }
        grad.add_scaled(gradient(mc.shared_spec, mc.shared_params, tr.state.features, up), 1.0);
      }
      if (grad.all_finite()) optimizer_step(mc.shared_params, grad, opt, Direction::minimize);
    }
    return mc;
  }

  std::vector<OptState> opts;
  for (const auto& c : mc.critics) opts.push_back(OptState::for_params(c.params.size(), config.step_size));
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto batch = transitions_of(sample_offline_batch(dataset, config.batch_size, rng));
    for (std::size_t i = 0; i < mc.critics.size(); ++i) critic_update(mc.critics[i], batch, opts[i]);
  }
  return mc;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  const double scale = std::max({1.0, std::abs(mx), std::abs(my)});
  const double tol = 1e-24 * scale * scale * static_cast<double>(n);
  if (sxx <= tol || syy <= tol) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

double MultiCritic::comparison_value(std::size_t response, const StateVec& s) const {
  if (mode == CriticMode::single_summed || response == 0) return combined_value(s);
  if (response >= heads()) throw InvalidArgument("response index out of range");
  return head_value(0, s) + head_value(response, s);
}

std::vector<std::optional<double>> critic_return_correlation(
    const MultiCritic& critic, const ReplayDataset& dataset, const DiscountVector& discounts,
    std::span<const std::size_t> responses) {
  if (discounts.size() != dataset.m) throw DimensionError("need one discount per response");
  for (std::size_t r : responses) {
    if (r >= dataset.m) throw InvalidArgument("response index out of range");
  }
  std::vector<std::vector<double>> values(responses.size());
  std::vector<std::vector<double>> returns(responses.size());
  for (const auto& traj : dataset.trajectories) {
    if (traj.transitions.empty()) continue;
    if (!traj.transitions.back().done) {
      throw InvalidArgument("session '" + traj.session_id + "' is truncated; Monte-Carlo returns need done=1");
    }
    const auto ret = discounted_returns(traj, discounts);
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
      for (std::size_t r = 0; r < responses.size(); ++r) {
        values[r].push_back(critic.comparison_value(responses[r], traj.transitions[t].state));
        returns[r].push_back(ret[t][responses[r]]);
      }
    }
  }
  std::vector<std::optional<double>> out;
  for (std::size_t r = 0; r < responses.size(); ++r) out.push_back(pearson(values[r], returns[r]));
  return out;
}

// --- NCIS ----------------------------------------------------------------------------

void NCISConfig::validate() const {
  if (!(cap > 0.0)) throw InvalidArgument("NCIS cap must be > 0");
}

NCISReport ncis_evaluate(const ActionProb& pi, const ReplayDataset& dataset, const NCISConfig& config,
                         const ActionProb& behavior) {
  config.validate();
  if (dataset.transition_count() == 0) throw InvalidArgument("NCIS needs a non-empty dataset");
  NCISReport rep;
  if (config.score_responses.empty()) {
    for (std::size_t i = 0; i < dataset.m; ++i) rep.responses.push_back(i);
  } else {
    rep.responses = config.score_responses;
  }
  for (std::size_t i : rep.responses) {
    if (i >= dataset.m) throw InvalidArgument("NCIS score response out of range");
  }
  std::vector<double> num(rep.responses.size(), 0.0);
  double sw = 0.0, sw2 = 0.0;
  for (const auto& traj : dataset.trajectories) {
    for (const auto& tr : traj.transitions) {
      const std::size_t a = logged_action(tr);
      double pb = 0.0;
      if (behavior) {
        pb = behavior(tr.state, a);
      } else {
        if (!tr.behavior_prob) throw InvalidArgument("NCIS needs behavior probabilities on every transition");
        pb = *tr.behavior_prob;
      }
      if (!(pb > 0.0)) throw InvalidArgument("NCIS: behavior probability must be > 0");
      const double w = std::min(pi(tr.state, a) / pb, config.cap);
      if (!std::isfinite(w) || w < 0.0) throw NumericError("NCIS: non-finite importance weight");
      for (std::size_t r = 0; r < rep.responses.size(); ++r) num[r] += w * tr.response[rep.responses[r]];
      sw += w;
      sw2 += w * w;
      rep.max_weight = std::max(rep.max_weight, w);
      ++rep.n;
    }
  }
  if (!(sw > 0.0)) throw NumericError("NCIS: all importance weights are zero");
  for (double v : num) rep.scores.push_back(v / sw);
  rep.mean_weight = sw / static_cast<double>(rep.n);
  rep.effective_sample_size = sw * sw / sw2;
  return rep;
}

}  // namespace tscac
