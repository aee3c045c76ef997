#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gen.hpp"
#include "tscac/dataset_io.hpp"
#include "tscac/errors.hpp"
#include "tscac/review.hpp"
#include "tscac/simulator.hpp"

using namespace tscac;

TEST(Simulator, ResetIsDeterministic) {
  SimConfig c;
  SessionSimulator a(c), b(c);
  EXPECT_EQ(a.reset(42), b.reset(42));
  EXPECT_EQ(a.reset(42).features.size(), c.state_dim);
}

TEST(Simulator, DistinctEpisodeSeedsGiveDistinctStates) {
  SimConfig c;
  SessionSimulator sim(c);
  std::set<std::vector<double>> seen;
  for (std::uint64_t e = 0; e < 100; ++e) seen.insert(sim.reset(e).features);
  EXPECT_GE(seen.size(), 99u);
}

TEST(Simulator, DoneExactlyOnLastStep) {
  SimConfig c;
  SessionSimulator sim(c);
  for (std::uint64_t e = 0; e < 20; ++e) {
    sim.reset(e);
    const std::size_t len = sim.session_length();
    EXPECT_GE(len, c.session_length_range.first);
    EXPECT_LE(len, c.session_length_range.second);
    for (std::size_t t = 0; t < len; ++t) {
      const auto r = sim.step(t % c.n_items);
      EXPECT_EQ(r.done, t + 1 == len);
      if (r.done) {
        EXPECT_TRUE(r.next_state.terminal);
        EXPECT_EQ(r.next_state.features, std::vector<double>(c.state_dim, 0.0));
      }
    }
  }
}

TEST(Simulator, NoiselessDenseRepeats) {
  SimConfig c;
  c.dense_noise_std = 0.0;
  SessionSimulator a(c), b(c);
  a.reset(3);
  b.reset(3);
  EXPECT_EQ(a.step(5).response[0], b.step(5).response[0]);
  SessionSimulator d(c);
  const auto s = d.reset(3);
  EXPECT_EQ(d.dense_mean(s, 5), d.dense_mean(s, 5));
}

TEST(Simulator, SparseRateMatchesAnalyticMean) {
  // Monte Carlo fire rate vs the mean of the model's fire probabilities at
  // the visited (state, item) pairs.
  SimConfig c;
  SessionSimulator sim(c);
  Gen gen(7);
  std::vector<double> fired(c.m, 0.0), expected(c.m, 0.0), var(c.m, 0.0);
  std::size_t n = 0;
  for (std::uint64_t e = 0; n < 10000; ++e) {
    sim.reset(e);
    bool done = false;
    while (!done && n < 10000) {
      const StateVec s = sim.state();
      const std::size_t item = gen.index(c.n_items);
      for (std::size_t i = 1; i < c.m; ++i) {
        const double p = sim.sparse_fire_probability(s, item, i);
        expected[i] += p;
        var[i] += p * (1 - p);
      }
      const auto r = sim.step(item);
      for (std::size_t i = 1; i < c.m; ++i) fired[i] += r.response[i];
      done = r.done;
      ++n;
    }
  }
  for (std::size_t i = 1; i < c.m; ++i) {
    const double se = std::sqrt(var[i]);
    EXPECT_LE(std::abs(fired[i] - expected[i]), 3 * se) << "response " << i;
  }
}

TEST(Simulator, DenseSparseAsymmetry) {
  SimConfig c;
  const auto ds = generate_offline_dataset(c, uniform_behavior(c.n_items), 300, 1);
  std::vector<double> nonzero(c.m, 0.0);
  const double n = double(ds.transition_count());
  for (const auto& tr : ds.trajectories) {
    for (const auto& x : tr.transitions) {
      for (std::size_t i = 0; i < c.m; ++i) nonzero[i] += x.response[i] != 0.0;
    }
  }
  EXPECT_GE(nonzero[0] / n, 0.95);
  for (std::size_t i = 1; i < c.m; ++i) EXPECT_LE(nonzero[i] / n, 0.20) << "response " << i;
}

TEST(OfflineData, UniformBehaviorProbabilities) {
  SimConfig c;
  const auto ds = generate_offline_dataset(c, uniform_behavior(c.n_items), 20, 3);
  EXPECT_NO_THROW(ds.validate());
  for (const auto& tr : ds.trajectories) {
    EXPECT_NO_THROW(validate_trajectory(tr));
    for (const auto& x : tr.transitions) {
      ASSERT_TRUE(x.behavior_prob);
      EXPECT_DOUBLE_EQ(*x.behavior_prob, 1.0 / double(c.n_items));
    }
  }
}

TEST(OfflineData, EmptyRequest) {
  SimConfig c;
  const auto ds = generate_offline_dataset(c, uniform_behavior(c.n_items), 0, 3);
  EXPECT_TRUE(ds.trajectories.empty());
  EXPECT_EQ(ds.m, c.m);
  EXPECT_NO_THROW(ds.validate());
}

TEST(OfflineData, ZeroProbabilityBehaviorRejected) {
  SimConfig c;
  BehaviorPolicy bad = [&](const StateVec&) {
    std::vector<double> p(c.n_items, 1.0 / double(c.n_items - 1));
    p[0] = 0.0;
    return p;
  };
  EXPECT_THROW(generate_offline_dataset(c, bad, 2, 3), InvalidArgument);
}

TEST(OfflineData, LoggedFrequenciesMatchBehavior) {
  // Pearson chi-square of logged action counts against the behavior's
  // expected counts; 0.999 quantile of chi-square with 5 dof is 20.515.
  SimConfig c;
  c.n_items = 6;
  const std::vector<double> probs{0.05, 0.1, 0.15, 0.2, 0.2, 0.3};
  BehaviorPolicy beh = [&](const StateVec&) { return probs; };
  ReplayDataset ds;
  std::size_t n = 0;
  std::vector<double> counts(6, 0.0);
  for (std::uint64_t seed = 0; n < 10000; ++seed) {
    ds = generate_offline_dataset(c, beh, 50, seed);
    for (const auto& tr : ds.trajectories) {
      for (const auto& x : tr.transitions) {
        if (n == 10000) break;
        counts[*x.action_index] += 1;
        EXPECT_DOUBLE_EQ(*x.behavior_prob, probs[*x.action_index]);
        ++n;
      }
    }
  }
  double chi2 = 0.0;
  for (std::size_t a = 0; a < 6; ++a) {
    const double e = probs[a] * double(n);
    chi2 += (counts[a] - e) * (counts[a] - e) / e;
  }
  EXPECT_LT(chi2, 20.515);
}

TEST(OfflineData, ChainsAreConsistent) {
  SimConfig c;
  Gen gen(1);
  for (int trial = 0; trial < 5; ++trial) {
    BehaviorPolicy beh = [&](const StateVec&) { return gen.simplex(c.n_items); };
    const auto ds = generate_offline_dataset(c, beh, 10, trial);
    for (const auto& tr : ds.trajectories) {
      EXPECT_NO_THROW(validate_trajectory(tr));
      for (const auto& x : tr.transitions) {
        EXPECT_GT(*x.behavior_prob, 0.0);
        EXPECT_LE(*x.behavior_prob, 1.0);
      }
    }
  }
}

namespace {

Trajectory review_session(const std::string& id, std::size_t len) {
  Trajectory tr;
  tr.session_id = id;
  for (std::size_t t = 0; t < len; ++t) {
    Transition x;
    x.state = StateVec{{0.0}, false};
    x.next_state = StateVec{{0.0}, t + 1 == len};
    x.action_index = t % 5;
    x.action = ActionEmbed::one_hot(5, t % 5);
    x.behavior_prob = 0.2;
    x.response = ResponseVector{std::vector<double>(kReviewScores, 3.0)};
    x.done = t + 1 == len;
    tr.transitions.push_back(x);
  }
  return tr;
}

}  // namespace

TEST(ReviewLoader, FiltersShortSessions) {
  ReplayDataset raw;
  raw.m = kReviewScores;
  raw.trajectories = {review_session("long", 25), review_session("short", 10)};
  std::stringstream ss;
  write_dataset(raw, ss);
  const auto ds = load_review_dataset(ss);
  ASSERT_EQ(ds.trajectories.size(), 1u);
  EXPECT_EQ(ds.trajectories[0].session_id, "long");
  EXPECT_EQ(ds.trajectories[0].transitions.size(), 25u);
  EXPECT_EQ(ds.trajectories[0].transitions[0].state.features.size(), ReviewEncoding{}.state_dim());
}

TEST(ReviewLoader, RejectsWrongM) {
  ReplayDataset raw;
  raw.m = 3;
  std::stringstream ss;
  write_dataset(raw, ss);
  EXPECT_THROW(load_review_dataset(ss), DimensionError);
}

TEST(ReviewLoader, GenerateWriteLoadRoundTrip) {
  ReviewDatasetConfig c;
  c.n_reviews = 1500;
  c.n_users = 60;
  const auto raw = generate_review_dataset(c);
  std::stringstream ss;
  write_dataset(raw, ss);
  const auto loaded = load_review_dataset(ss);
  const auto direct = prepare_review_dataset(raw, ReviewLoadOptions{});
  EXPECT_FALSE(loaded.trajectories.empty());
  EXPECT_EQ(loaded, direct);
}

TEST(ReviewGenerator, ScoresInRangeAndDeterministic) {
  ReviewDatasetConfig c;
  c.n_reviews = 800;
  c.n_users = 40;
  const auto a = generate_review_dataset(c);
  EXPECT_EQ(a, generate_review_dataset(c));
  for (const auto& tr : a.trajectories) {
    for (const auto& x : tr.transitions) {
      ASSERT_EQ(x.response.size(), kReviewScores);
      for (double v : x.response.values) {
        EXPECT_GE(v, 1.0);
        EXPECT_LE(v, 5.0);
      }
    }
  }
}

TEST(ReviewEncoding, MostRecentFirstAndZeroPadded) {
  ReviewEncoding enc{2, 2};
  const std::vector<std::size_t> items{3, 4};
  const std::vector<std::vector<double>> scores{std::vector<double>(8, 5.0), std::vector<double>(8, 1.0)};
  const auto s0 = encode_review_state(enc, "u", items, scores, 0);
  const auto s2 = encode_review_state(enc, "u", items, scores, 2);
  ASSERT_EQ(s0.size(), enc.state_dim());
  // no history yet: only the user block is nonzero
  for (std::size_t k = enc.id_dim; k < s0.size(); ++k) EXPECT_EQ(s0[k], 0.0);
  // most recent (score 1 -> -1) comes first
  EXPECT_EQ(s2[enc.id_dim + enc.id_dim], -1.0);
  EXPECT_EQ(s2[enc.id_dim + (enc.id_dim + 8) + enc.id_dim], 1.0);
}
