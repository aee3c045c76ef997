#pragma once

// Hand-rolled generators for the property tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tscac/approximator.hpp"
#include "tscac/cmdp.hpp"

namespace tscac {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  // Uniform in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool coin() { return index(2) == 1; }

  std::vector<double> vec(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

  // Probability vector with every entry at least floor / n.
  std::vector<double> simplex(std::size_t n, double floor = 0.05) {
    auto v = vec(n, floor, 1.0);
    double s = 0.0;
    for (double x : v) s += x;
    for (auto& x : v) x /= s;
    return v;
  }

  // Random network shape with every dimension in [1, max_dim].
  ApproxSpec spec(std::size_t max_dim) {
    ApproxSpec s;
    s.input_dim = 1 + index(max_dim);
    const std::size_t depth = index(3);
    for (std::size_t i = 0; i < depth; ++i) s.hidden_layers.push_back(1 + index(max_dim));
    s.output_dim = 1 + index(max_dim);
    const OutputActivation acts[] = {OutputActivation::linear, OutputActivation::softmax,
                                     OutputActivation::tanh};
    s.output_activation = acts[index(3)];
    s.seed = rng_();
    return s;
  }

  StateVec state(std::size_t dim) { return StateVec{vec(dim, -1, 1), false}; }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline StateVec one_hot_state(std::size_t n, std::size_t k) {
  StateVec s{std::vector<double>(n, 0.0), false};
  s.features[k] = 1.0;
  return s;
}

// Deterministic chain s0 -> s1 -> ... -> terminal with one-hot states;
// rewards[k] is the response vector received leaving state k.
inline Trajectory chain(const std::vector<std::vector<double>>& rewards, std::size_t n_actions = 2,
                        std::size_t action = 0) {
  const std::size_t n = rewards.size();
  Trajectory tr;
  tr.session_id = "chain";
  for (std::size_t k = 0; k < n; ++k) {
    Transition x;
    x.state = one_hot_state(n, k);
    x.action = ActionEmbed::one_hot(n_actions, action);
    x.action_index = action;
    x.behavior_prob = 1.0 / double(n_actions);
    x.response = ResponseVector{rewards[k]};
    x.done = k + 1 == n;
    x.next_state = x.done ? StateVec{std::vector<double>(n, 0.0), true} : one_hot_state(n, k + 1);
    tr.transitions.push_back(x);
  }
  return tr;
}

// max_k |a_k - b_k| / max(|a_k|, |b_k|, floor). The floor keeps entries whose
// true gradient is ~0 from turning finite-difference noise into big ratios.
inline double max_rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double den = std::max({std::abs(a[k]), std::abs(b[k]), floor});
    worst = std::max(worst, std::abs(a[k] - b[k]) / den);
  }
  if (a.size() != b.size()) return INFINITY;
  return worst;
}

}  // namespace tscac
