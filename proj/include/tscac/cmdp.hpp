#pragma once

// Constrained-MDP vocabulary: vector-valued responses, per-response discount
// factors, transitions, trajectories and the quantities derived from them.
// Response index 0 is the main response; 1..m-1 are the auxiliaries.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tscac {

struct StateVec {
  std::vector<double> features;
  bool terminal = false;

  bool operator==(const StateVec&) const = default;
};

// Action embedding. Discrete recommendations are stored compactly as a
// one-hot index over `dim` items; continuous embeddings keep dense values.
class ActionEmbed {
 public:
  ActionEmbed() = default;
  static ActionEmbed one_hot(std::size_t dim, std::size_t index);
  static ActionEmbed dense(std::vector<double> values);

  std::size_t dim() const { return hot_ ? dim_ : values_.size(); }
  double operator[](std::size_t i) const;
  std::optional<std::size_t> hot_index() const;
  std::vector<double> to_vector() const;

  bool operator==(const ActionEmbed&) const = default;

 private:
  bool hot_ = false;
  std::size_t dim_ = 0;
  std::size_t index_ = 0;
  std::vector<double> values_;
};

struct ResponseVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const ResponseVector&) const = default;
};

class DiscountVector {
 public:
  DiscountVector() = default;
  // Each gamma must lie in [0, 1).
  explicit DiscountVector(std::vector<double> gammas);

  std::size_t size() const { return gammas_.size(); }
  double operator[](std::size_t i) const { return gammas_[i]; }
  const std::vector<double>& values() const { return gammas_; }

 private:
  std::vector<double> gammas_;
};

struct Transition {
  StateVec state;
  ActionEmbed action;
  std::optional<std::size_t> action_index;
  std::optional<double> behavior_prob;
  ResponseVector response;
  StateVec next_state;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  std::string session_id;
  std::vector<Transition> transitions;

  bool operator==(const Trajectory&) const = default;
};

struct ReplayDataset {
  std::vector<Trajectory> trajectories;
  std::size_t m = 0;
  std::map<std::string, std::string> metadata;

  std::size_t transition_count() const;
  // Shared m and feature dimensions, per-trajectory chain consistency.
  void validate() const;

  bool operator==(const ReplayDataset&) const = default;
};

// Chain consistency: next_state of step t equals state of step t+1, only the
// last step may be done, and done implies a terminal next state.
void validate_trajectory(const Trajectory& traj);

// returns[t][i] = r_t[i] + gamma_i * returns[t+1][i]; zero past the end.
std::vector<ResponseVector> discounted_returns(const Trajectory& traj,
                                               const DiscountVector& discounts);

// r + gamma * v_next, bootstrapping 0 at terminal states.
double td_target(double response, double gamma, double v_next, bool done);
double advantage(double response, double gamma, double v_next, double v_curr, bool done);

// Index of the item with the largest dot product; ties go to the lowest index.
std::size_t rank_items(std::span<const double> action,
                       const std::vector<std::vector<double>>& item_embeddings);

}  // namespace tscac
