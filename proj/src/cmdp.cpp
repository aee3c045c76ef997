#include "tscac/cmdp.hpp"

#include <cmath>

#include "tscac/errors.hpp"

namespace tscac {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

ActionEmbed ActionEmbed::one_hot(std::size_t dim, std::size_t index) {
  if (index >= dim) {
    throw InvalidArgument("one-hot index " + std::to_string(index) + " out of range " +
                          std::to_string(dim));
  }
  ActionEmbed a;
  a.hot_ = true;
  a.dim_ = dim;
  a.index_ = index;
  return a;
}

ActionEmbed ActionEmbed::dense(std::vector<double> values) {
  ActionEmbed a;
  a.values_ = std::move(values);
  return a;
}

double ActionEmbed::operator[](std::size_t i) const {
  if (hot_) return i == index_ ? 1.0 : 0.0;
  return values_[i];
}

std::optional<std::size_t> ActionEmbed::hot_index() const {
  if (hot_) return index_;
  return std::nullopt;
}

std::vector<double> ActionEmbed::to_vector() const {
  if (!hot_) return values_;
  std::vector<double> v(dim_, 0.0);
  v[index_] = 1.0;
  return v;
}

DiscountVector::DiscountVector(std::vector<double> gammas) : gammas_(std::move(gammas)) {
  for (double g : gammas_) {
    if (!(g >= 0.0 && g < 1.0)) {
      throw InvalidArgument("discount factors must lie in [0, 1), got " + std::to_string(g));
    }
  }
}

std::size_t ReplayDataset::transition_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.transitions.size();
  return n;
}

void validate_trajectory(const Trajectory& traj) {
  const auto& ts = traj.transitions;
  for (std::size_t t = 0; t < ts.size(); ++t) {
    const auto& tr = ts[t];
    if (tr.done && t + 1 != ts.size()) {
      throw InvalidArgument("session " + traj.session_id + ": done before the last step");
    }
    if (tr.done && !tr.next_state.terminal) {
      throw InvalidArgument("session " + traj.session_id + ": done without terminal next state");
    }
    if (tr.state.terminal) {
      throw InvalidArgument("session " + traj.session_id + ": step from a terminal state");
    }
    if (t + 1 < ts.size() && !(tr.next_state == ts[t + 1].state)) {
      throw InvalidArgument("session " + traj.session_id + ": broken state chain at step " +
                            std::to_string(t));
    }
    if (tr.behavior_prob && !(*tr.behavior_prob > 0.0 && *tr.behavior_prob <= 1.0)) {
      throw InvalidArgument("session " + traj.session_id + ": behavior_prob outside (0, 1]");
    }
  }
}

void ReplayDataset::validate() const {
  std::optional<std::size_t> dim;
  for (const auto& traj : trajectories) {
    for (const auto& tr : traj.transitions) {
      if (tr.response.size() != m) {
        throw DimensionError("session " + traj.session_id + ": response length " +
                             std::to_string(tr.response.size()) + " != m=" + std::to_string(m));
      }
      if (!dim) dim = tr.state.features.size();
      if (tr.state.features.size() != *dim || tr.next_state.features.size() != *dim) {
        throw DimensionError("session " + traj.session_id + ": inconsistent state dimension");
      }
    }
    validate_trajectory(traj);
  }
}

std::vector<ResponseVector> discounted_returns(const Trajectory& traj,
                                               const DiscountVector& discounts) {
  const auto& ts = traj.transitions;
  if (ts.empty()) throw InvalidArgument("discounted_returns: empty trajectory");
  const std::size_t m = discounts.size();
  std::vector<ResponseVector> out(ts.size());
  std::vector<double> acc(m, 0.0);
  for (std::size_t t = ts.size(); t-- > 0;) {
    if (ts[t].response.size() != m) {
      throw DimensionError("discounted_returns: response length differs from discount length");
    }
    for (std::size_t i = 0; i < m; ++i) acc[i] = ts[t].response[i] + discounts[i] * acc[i];
    out[t].values = acc;
  }
  return out;
}

double td_target(double response, double gamma, double v_next, bool done) {
  require_finite(response, "response");
  require_finite(gamma, "discount");
  if (done) return response;
  require_finite(v_next, "next-state value");
  return response + gamma * v_next;
}

double advantage(double response, double gamma, double v_next, double v_curr, bool done) {
  require_finite(v_curr, "state value");
  return td_target(response, gamma, v_next, done) - v_curr;
}

std::size_t rank_items(std::span<const double> action,
                       const std::vector<std::vector<double>>& item_embeddings) {
  if (item_embeddings.empty()) throw InvalidArgument("rank_items: empty candidate list");
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t j = 0; j < item_embeddings.size(); ++j) {
    const auto& e = item_embeddings[j];
    if (e.size() != action.size()) {
      throw DimensionError("rank_items: item " + std::to_string(j) + " has dimension " +
                           std::to_string(e.size()) + ", action has " +
                           std::to_string(action.size()));
    }
    double s = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) s += e[k] * action[k];
    if (j == 0 || s > best_score) {
      best = j;
      best_score = s;
    }
  }
  return best;
}

}  // namespace tscac
