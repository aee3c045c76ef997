#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gen.hpp"
#include "tscac/cmdp.hpp"
#include "tscac/dataset_io.hpp"
#include "tscac/errors.hpp"
#include "tscac/seeding.hpp"
#include "tscac/text.hpp"

using namespace tscac;

namespace {

// Session with the given rewards; states are 1-d step counters.
Trajectory make_traj(const std::vector<std::vector<double>>& rewards) {
  Trajectory tr;
  tr.session_id = "s";
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    Transition x;
    x.state = StateVec{{double(t)}, false};
    x.action = ActionEmbed::one_hot(2, t % 2);
    x.action_index = t % 2;
    x.behavior_prob = 0.5;
    x.response = ResponseVector{rewards[t]};
    x.done = t + 1 == rewards.size();
    x.next_state = x.done ? StateVec{{0.0}, true} : StateVec{{double(t + 1)}, false};
    tr.transitions.push_back(x);
  }
  return tr;
}

}  // namespace

TEST(Returns, GeometricSum) {
  const auto r = discounted_returns(make_traj({{1}, {1}, {1}}), DiscountVector({0.5}));
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r[0][0], 1.75);
  EXPECT_DOUBLE_EQ(r[1][0], 1.5);
  EXPECT_DOUBLE_EQ(r[2][0], 1.0);
}

TEST(Returns, ZeroDiscountIsInstantaneous) {
  Gen gen(3);
  std::vector<std::vector<double>> rw;
  for (int t = 0; t < 6; ++t) rw.push_back(gen.vec(3, -2, 2));
  const auto r = discounted_returns(make_traj(rw), DiscountVector({0, 0, 0}));
  for (std::size_t t = 0; t < rw.size(); ++t) EXPECT_EQ(r[t].values, rw[t]);
}

TEST(Returns, BruteForceTwoResponses) {
  const std::vector<std::vector<double>> rw{{1, 0}, {0, 1}, {2, 1}};
  const std::vector<double> g{0.9, 0.5};
  const auto r = discounted_returns(make_traj(rw), DiscountVector(g));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      double s = 0.0;
      for (std::size_t u = t; u < 3; ++u) s += std::pow(g[i], double(u - t)) * rw[u][i];
      EXPECT_NEAR(r[t][i], s, 1e-12);
    }
  }
}

TEST(ReturnsProperty, RecursionHolds) {
  Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + gen.index(4), n = 1 + gen.index(12);
    std::vector<std::vector<double>> rw;
    for (std::size_t t = 0; t < n; ++t) rw.push_back(gen.vec(m, -3, 3));
    const auto g = gen.vec(m, 0, 0.99);
    const auto r = discounted_returns(make_traj(rw), DiscountVector(g));
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < m; ++i) {
        const double next = t + 1 < n ? r[t + 1][i] : 0.0;
        EXPECT_NEAR(r[t][i], rw[t][i] + g[i] * next, 1e-12);
      }
    }
  }
}

TEST(Discounts, RejectOutOfRange) {
  EXPECT_THROW(DiscountVector({1.0}), InvalidArgument);
  EXPECT_THROW(DiscountVector({-0.1}), InvalidArgument);
  EXPECT_NO_THROW(DiscountVector({0.0, 0.999}));
}

TEST(TdTarget, Cases) {
  EXPECT_DOUBLE_EQ(td_target(1, 0.9, 2, false), 2.8);
  EXPECT_DOUBLE_EQ(td_target(1.5, 0.9, 123, true), 1.5);
  EXPECT_DOUBLE_EQ(td_target(0, 0, 5, false), 0.0);
}

TEST(Advantage, Cases) {
  EXPECT_DOUBLE_EQ(advantage(1, 0.9, 2, 2.8, false), 0.0);
  EXPECT_DOUBLE_EQ(advantage(1, 0, 77, 0, false), 1.0);
}

TEST(AdvantageProperty, IsTargetMinusValue) {
  Gen gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    const double r = gen.uniform(-5, 5), g = gen.uniform(0, 0.99), vn = gen.uniform(-5, 5),
                 vc = gen.uniform(-5, 5);
    const bool done = gen.coin();
    const double target = done ? r : r + g * vn;
    EXPECT_NEAR(advantage(r, g, vn, vc, done), target - vc, 1e-12);
  }
}

TEST(RankItems, Orthogonal) {
  const std::vector<double> a{1, 0};
  EXPECT_EQ(rank_items(a, {{0, 1}, {1, 0}}), 1u);
}

TEST(RankItems, TiesGoLow) {
  const std::vector<double> a{0.3, -0.7};
  EXPECT_EQ(rank_items(a, {{1, 1}, {1, 1}, {1, 1}}), 0u);
}

TEST(RankItemsProperty, ExhaustiveArgmaxAndScaleInvariance) {
  Gen gen(19);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + gen.index(5);
    std::vector<std::vector<double>> items;
    for (int j = 0; j < 5; ++j) items.push_back(gen.vec(d, -1, 1));
    const auto a = gen.vec(d, -1, 1);
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t j = 0; j < items.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a[k] * items[j][k];
      if (s > best_score) best_score = s, best = j;
    }
    EXPECT_EQ(rank_items(a, items), best);
    auto scaled = a;
    const double c = gen.uniform(0.1, 10);
    for (auto& x : scaled) x *= c;
    EXPECT_EQ(rank_items(scaled, items), best);
  }
}

TEST(ActionEmbed, OneHot) {
  const auto a = ActionEmbed::one_hot(4, 2);
  EXPECT_EQ(a.dim(), 4u);
  EXPECT_EQ(a.to_vector(), (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(a.hot_index(), std::optional<std::size_t>(2));
  EXPECT_FALSE(ActionEmbed::dense({0.5, 0.5}).hot_index());
  EXPECT_THROW(ActionEmbed::one_hot(3, 3), InvalidArgument);
}

TEST(Trajectory, ChainValidation) {
  auto tr = make_traj({{1}, {2}, {3}});
  EXPECT_NO_THROW(validate_trajectory(tr));
  auto broken = tr;
  broken.transitions[1].state.features[0] = 9;
  EXPECT_THROW(validate_trajectory(broken), InvalidArgument);
  auto early = tr;
  early.transitions[0].done = true;
  EXPECT_THROW(validate_trajectory(early), InvalidArgument);
  auto open = tr;
  open.transitions[2].next_state.terminal = false;
  EXPECT_THROW(validate_trajectory(open), InvalidArgument);
}

TEST(Dataset, ValidateChecksShapes) {
  ReplayDataset ds;
  ds.m = 1;
  ds.trajectories.push_back(make_traj({{1}, {2}}));
  EXPECT_NO_THROW(ds.validate());
  ds.trajectories.push_back(make_traj({{1, 2}}));
  EXPECT_THROW(ds.validate(), DimensionError);
}

TEST(DatasetIo, RoundTripsExactly) {
  Gen gen(29);
  ReplayDataset ds;
  ds.m = 2;
  ds.metadata["n_items"] = "2";
  for (int k = 0; k < 4; ++k) {
    std::vector<std::vector<double>> rw;
    const std::size_t n = 1 + gen.index(5);
    for (std::size_t t = 0; t < n; ++t) rw.push_back(gen.vec(2, -1, 1));
    auto tr = make_traj(rw);
    tr.session_id = "u" + std::to_string(k);
    for (auto& x : tr.transitions) x.behavior_prob = gen.uniform(0.01, 1.0);
    ds.trajectories.push_back(tr);
  }
  std::stringstream ss;
  write_dataset(ds, ss);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back.m, ds.m);
  EXPECT_EQ(back.metadata, ds.metadata);
  EXPECT_EQ(back.trajectories, ds.trajectories);
}

TEST(DatasetIo, RejectsWithLineNumber) {
  std::stringstream ss(
      "# tscac-dataset 1\n# m = 1\n"
      "a\t0\t0.5\t0\t0.5\t1\t0\n"
      "a\t1\t0.5\t1\t0.5\tnotanumber\t1\n");
  try {
    read_dataset(ss);
    FAIL() << "accepted a malformed line";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, RequiresDoneOnLastLine) {
  std::stringstream ss("# tscac-dataset 1\n# m = 1\na\t0\t0.5\t0\t0.5\t1\t0\n");
  EXPECT_THROW(read_dataset(ss), IoError);
}

TEST(Seeding, DerivationIsStableAndSeparates) {
  EXPECT_EQ(derive_seed(1, "eval"), derive_seed(1, "eval"));
  EXPECT_NE(derive_seed(1, "eval"), derive_seed(1, "data"));
  EXPECT_NE(derive_seed(1, "eval"), derive_seed(2, "eval"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(5, i));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Text, FormatDoubleRoundTrips) {
  Gen gen(31);
  for (int trial = 0; trial < 500; ++trial) {
    const double v = gen.normal() * std::pow(10.0, gen.uniform(-20, 20));
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_THROW(parse_double("1.5x"), std::invalid_argument);
  EXPECT_THROW(parse_size("-3"), std::invalid_argument);
}
