#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gen.hpp"
#include "tscac/errors.hpp"
#include "tscac/harness.hpp"

using namespace tscac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tscac_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

// Small offline simulator config; runs in well under a second.
ExperimentConfig tiny_offline(Algorithm a) {
  ExperimentConfig c;
  c.algorithm = a;
  c.setting = Setting::offline;
  c.sim.n_items = 6;
  c.data_trajectories = 20;
  c.actor_hidden = {4};
  c.critic_hidden = {4};
  c.stage1_iterations = 5;
  c.stage2_iterations = 5;
  c.iterations = 5;
  c.batch_size = 8;
  return c;
}

ExperimentConfig tiny_online(Algorithm a) {
  ExperimentConfig c;
  c.algorithm = a;
  c.sim.n_items = 6;
  c.actor_hidden = {4};
  c.critic_hidden = {4};
  c.stage1_iterations = 3;
  c.stage2_iterations = 3;
  c.iterations = 3;
  c.episodes_per_iteration = 2;
  c.eval_episodes = 5;
  c.kl_reference_episodes = 2;
  return c;
}

// Average ranks by counting: rank = (#less) + (#equal + 1) / 2.
std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) less += w < v[i], equal += w == v[i];
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  const auto c = parse(
      "# comment\n"
      "algorithm = rcpo   # trailing\n"
      "master_seed = 42\n"
      "train.lambdas = 0.5, 2, 1\n"
      "sim.session_length_min = 3\n"
      "sim.session_length_max = 5\n"
      "\n");
  EXPECT_EQ(c.algorithm, Algorithm::rcpo);
  EXPECT_EQ(c.master_seed, 42u);
  EXPECT_EQ(c.lambdas, (std::vector<double>{0.5, 2, 1}));
  EXPECT_EQ(c.sim.session_length_range, (std::pair<std::size_t, std::size_t>{3, 5}));
}

TEST(Config, RejectsUnknownRepeatedAndMalformed) {
  EXPECT_THROW(parse("no_such_key = 1\n"), ConfigError);
  EXPECT_THROW(parse("master_seed = 1\nmaster_seed = 2\n"), ConfigError);
  EXPECT_THROW(parse("master_seed 1\n"), ConfigError);
  EXPECT_THROW(parse("master_seed = -1\n"), ConfigError);
  EXPECT_THROW(parse("algorithm = sarsa\n"), ConfigError);
  try {
    parse("master_seed = 1\ntrain.actor_lr = fast\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, EchoRoundTrips) {
  Gen gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    ExperimentConfig c;
    c.master_seed = gen.engine()();
    c.algorithm = static_cast<Algorithm>(gen.index(6));
    c.setting = gen.coin() ? Setting::offline : Setting::online;
    c.lambdas = gen.vec(3, 0, 10);
    c.actor_lr = gen.uniform(1e-5, 1e-1);
    c.sim.dense_noise_std = gen.uniform(0, 1);
    c.sweep_values = {"1e-8", "0.5"};
    c.sweep_parameter = "lambda";
    c.compare_algorithms = {Algorithm::bc, Algorithm::rcpo};
    c.critic_shared_bottom = gen.coin();
    const auto echo = echo_config(c);
    const auto back = parse(echo);
    EXPECT_EQ(echo_config(back), echo);
    EXPECT_EQ(back.lambdas, c.lambdas);
    EXPECT_EQ(back.actor_lr, c.actor_lr);
  }
}

TEST(Config, ValidateCatchesInconsistency) {
  ExperimentConfig c;
  c.algorithm = Algorithm::bc;  // offline-only algorithm in the online setting
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.lambdas = {1, 1};  // m = 4 needs three
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.lambdas = {0, 0, 0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.sweep_parameter = "lambda";
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.env = EnvKind::review;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
}

TEST(Run, NoOutputOnValidationFailure) {
  auto c = tiny_offline(Algorithm::bc);
  c.setting = Setting::online;
  c.output_dir = scratch("invalid").string();
  EXPECT_THROW(run_experiment(c), ConfigError);
  EXPECT_FALSE(fs::exists(c.output_dir));
}

TEST(Run, BcSmokeWritesReport) {
  auto c = tiny_offline(Algorithm::bc);
  c.output_dir = scratch("bc").string();
  const auto rep = run_experiment(c);
  EXPECT_FALSE(rep.failed);
  ASSERT_EQ(rep.scores.size(), 4u);
  for (double s : rep.scores) EXPECT_TRUE(std::isfinite(s));
  EXPECT_TRUE(rep.effective_sample_size);
  for (const char* f : {"metrics.csv", "report.csv", "config.echo"}) {
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / f)) << f;
  }
  const auto echo = slurp(fs::path(c.output_dir) / "config.echo");
  EXPECT_EQ(echo, rep.config_echo);
  EXPECT_EQ(echo_config(parse(echo)), echo);
}

TEST(Run, SameSeedSameBytes) {
  for (auto a : {Algorithm::constrained_stochastic, Algorithm::a3c_weighted}) {
    auto c = tiny_online(a);
    c.output_dir = scratch("det1").string();
    run_experiment(c);
    const auto first = slurp(fs::path(c.output_dir) / "metrics.csv");
    c.output_dir = scratch("det2").string();
    run_experiment(c);
    EXPECT_EQ(slurp(fs::path(c.output_dir) / "metrics.csv"), first);
    EXPECT_FALSE(first.empty());
  }
}

TEST(Run, EchoReproducesRun) {
  auto c = tiny_offline(Algorithm::constrained_deterministic);
  c.output_dir = scratch("echo1").string();
  run_experiment(c);
  auto again = parse(slurp(fs::path(c.output_dir) / "config.echo"));
  again.output_dir = scratch("echo2").string();
  run_experiment(again);
  EXPECT_EQ(slurp(fs::path(again.output_dir) / "metrics.csv"), slurp(fs::path(c.output_dir) / "metrics.csv"));
  // Path and wall clock differ; everything the run computed must not.
  auto results = [](const std::string& text) {
    std::string keep;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
      if (line.rfind("metrics,", 0) != 0 && line.rfind("wall_clock", 0) != 0) keep += line + "\n";
    return keep;
  };
  EXPECT_EQ(results(slurp(fs::path(again.output_dir) / "report.csv")),
            results(slurp(fs::path(c.output_dir) / "report.csv")));
}

TEST(Run, ConstrainedStochasticReportsKl) {
  auto c = tiny_online(Algorithm::constrained_stochastic);
  const auto rep = run_experiment(c, RunOptions{false, {}, nullptr});
  ASSERT_EQ(rep.kl.size(), 3u);
  for (double k : rep.kl) EXPECT_GE(k, 0.0);
}

TEST(Run, EveryOfflineAlgorithmRuns) {
  for (auto a : {Algorithm::bc, Algorithm::a3c_weighted, Algorithm::rcpo, Algorithm::ddpg_weighted,
                 Algorithm::constrained_stochastic, Algorithm::constrained_deterministic}) {
    const auto rep = run_experiment(tiny_offline(a), RunOptions{false, {}, nullptr});
    EXPECT_FALSE(rep.failed) << to_string(a);
    EXPECT_EQ(rep.scores.size(), 4u);
  }
}

TEST(Stats, AverageRanksMatchCountingOracle) {
  Gen gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(2 + gen.index(10));
    for (auto& x : v) x = double(gen.index(5));  // plenty of ties
    EXPECT_EQ(average_ranks(v), count_ranks(v));
  }
}

TEST(Stats, SpearmanMatchesRankOracle) {
  Gen gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + gen.index(8);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = double(gen.index(6));
    for (auto& v : y) v = gen.uniform(-1, 1);
    const auto rx = count_ranks(x), ry = count_ranks(y);
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < n; ++k) mx += rx[k] / n, my += ry[k] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < n; ++k) {
      sxy += (rx[k] - mx) * (ry[k] - my);
      sxx += (rx[k] - mx) * (rx[k] - mx);
      syy += (ry[k] - my) * (ry[k] - my);
    }
    const auto rho = spearman(x, y);
    if (sxx == 0) {
      EXPECT_FALSE(rho);
    } else {
      ASSERT_TRUE(rho);
      EXPECT_NEAR(*rho, sxy / std::sqrt(sxx * syy), 1e-12);
    }
  }
  EXPECT_NEAR(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 300}), 1.0, 1e-15);
}

TEST(Stats, CountInversions) {
  EXPECT_EQ(count_inversions({1, 2, 2, 3}, true), 0u);
  EXPECT_EQ(count_inversions({1, 3, 2, 4}, true), 1u);
  EXPECT_EQ(count_inversions({4, 3, 3, 1}, false), 0u);
  EXPECT_EQ(count_inversions({1, 3, 2, 4}, false), 2u);
}

TEST(Compare, ColumnBestMatchesScan) {
  Gen gen(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + gen.index(5), cols = 1 + gen.index(5);
    std::vector<std::vector<double>> s(rows, std::vector<double>(cols));
    std::vector<bool> failed(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (auto& v : s[r]) v = double(gen.index(4));
      failed[r] = gen.index(5) == 0;
    }
    const auto best = column_best(s, failed);
    for (std::size_t c = 0; c < cols; ++c) {
      double mx = -INFINITY;
      for (std::size_t r = 0; r < rows; ++r) {
        if (!failed[r]) mx = std::max(mx, s[r][c]);
      }
      for (std::size_t r = 0; r < rows; ++r) EXPECT_EQ(best[r][c], !failed[r] && s[r][c] == mx);
    }
  }
}

TEST(Compare, TwoAlgorithmsGiveTwoRows) {
  const auto table = compare_algorithms({tiny_offline(Algorithm::bc), tiny_offline(Algorithm::rcpo)},
                                        RunOptions{false, {}, nullptr});
  ASSERT_EQ(table.scores.size(), 2u);
  EXPECT_EQ(table.scores[0].size(), 4u);
  EXPECT_EQ(table.algorithms, (std::vector<std::string>{"bc", "rcpo"}));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_TRUE(table.best[0][c] || table.best[1][c]);
  std::ostringstream os;
  write_comparison_csv(os, table);
  EXPECT_NE(os.str().find('*'), std::string::npos);
}

TEST(Compare, RejectsMismatchedEnvironments) {
  auto a = tiny_offline(Algorithm::bc), b = tiny_offline(Algorithm::rcpo);
  b.master_seed = 9;
  EXPECT_THROW(compare_algorithms({a, b}, RunOptions{false, {}, nullptr}), ConfigError);
}

TEST(Sweep, OneRowPerValueInOrder) {
  auto c = tiny_online(Algorithm::constrained_stochastic);
  const auto t = sweep_lambda(c, {1e4, 1e-8, 1.0}, RunOptions{false, {}, nullptr});
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].numeric_value, 1e4);
  EXPECT_EQ(t.rows[1].numeric_value, 1e-8);
  EXPECT_EQ(t.rows[2].numeric_value, 1.0);
  EXPECT_EQ(default_lambda_grid().size(), 6u);
  EXPECT_EQ(default_gamma_grid().size(), 5u);
}

TEST(Sweep, GammaZeroIsFinite) {
  auto c = tiny_online(Algorithm::constrained_stochastic);
  const auto t = sweep_gamma(c, {0.0, 0.9}, RunOptions{false, {}, nullptr});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(std::isfinite(t.rows[0].scores[0]));
}

TEST(Sweep, InvalidValueFailsBeforeAnyRun) {
  auto c = tiny_online(Algorithm::constrained_stochastic);
  c.output_dir = scratch("badsweep").string();
  EXPECT_THROW(sweep_gamma(c, {0.5, 1.5}), Error);
  EXPECT_FALSE(fs::exists(c.output_dir));
}

TEST(CriticStudy, ReportsEveryResponse) {
  auto c = tiny_offline(Algorithm::bc);
  c.critic_iterations = 50;
  c.output_dir = scratch("study").string();
  const auto rows = critic_study(c);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    EXPECT_EQ(rows[r].response, r);
    if (rows[r].separate && rows[r].single) {
      EXPECT_NEAR(*rows[r].difference, *rows[r].separate - *rows[r].single, 1e-15);
    }
  }
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "critic_study.csv"));
}
