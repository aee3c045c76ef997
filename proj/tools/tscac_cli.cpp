// tscac: run, sweep and compare experiments from a config file.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tscac/dataset_io.hpp"
#include "tscac/errors.hpp"
#include "tscac/harness.hpp"
#include "tscac/review.hpp"
#include "tscac/text.hpp"

namespace fs = std::filesystem;
using namespace tscac;

namespace {

struct Common {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool many_configs) {
  auto* opt = cmd->add_option("--config", c.configs, "config file (key = value lines)")->required();
  if (!many_configs) opt->expected(1);
  cmd->add_option("--seed", c.seed, "overrides master_seed");
  cmd->add_option("--out", c.out, "overrides output_dir");
}

ExperimentConfig load(const std::string& path, const Common& c) {
  ExperimentConfig cfg = load_config(path);
  if (c.seed) cfg.master_seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

std::string cell(double v) { return std::isnan(v) ? "nan" : format_double(v); }

void print_sweep(const SweepTable& t) {
  std::printf("%-12s", t.parameter.c_str());
  for (std::size_t i = 0; i < t.m; ++i) std::printf(" %12s", ("r" + std::to_string(i)).c_str());
  std::printf(" %12s %12s\n", "mean_aux", "mean_kl");
  std::vector<double> x, aux, main, kl;
  for (const auto& r : t.rows) {
    std::printf("%-12s", r.value.c_str());
    for (double s : r.scores) std::printf(" %12.6g", s);
    std::printf(" %12.6g %12.6g%s\n", r.mean_auxiliary, r.mean_kl, r.flagged ? "  FLAGGED" : "");
    x.push_back(t.parameter == "lambda" ? std::log(r.numeric_value) : r.numeric_value);
    aux.push_back(r.mean_auxiliary);
    main.push_back(r.scores.empty() ? NAN : r.scores[0]);
    kl.push_back(r.mean_kl);
  }
  const auto rho_aux = spearman(x, aux);
  const auto rho_main = spearman(x, main);
  std::printf("spearman(x, mean_aux) = %s\n", rho_aux ? cell(*rho_aux).c_str() : "undefined");
  std::printf("spearman(x, r0) = %s\n", rho_main ? cell(*rho_main).c_str() : "undefined");
  std::printf("r0 decreases: %zu, mean_kl increases: %zu\n", count_inversions(main, true),
              count_inversions(kl, false));
}

int run_verb(const std::string& verb, const Common& c) {
  if (verb == "run") {
    const auto cfg = load(c.configs.front(), c);
    const auto rep = run_experiment(cfg);
    std::printf("algorithm %s  status %s\n", to_string(rep.algorithm).c_str(), rep.failed ? "failed" : "ok");
    for (std::size_t i = 0; i < rep.scores.size(); ++i) std::printf("score r%zu %s\n", i, cell(rep.scores[i]).c_str());
    for (std::size_t i = 0; i < rep.kl.size(); ++i) std::printf("kl aux%zu %s\n", i + 1, cell(rep.kl[i]).c_str());
    std::printf("outputs in %s\n", cfg.output_dir.c_str());
    if (rep.failed) throw DivergenceError(rep.failure);
    return 0;
  }
  if (verb == "sweep-lambda" || verb == "sweep-gamma") {
    auto cfg = load(c.configs.front(), c);
    std::vector<std::string> values = cfg.sweep_values;
    const std::string parameter = verb == "sweep-lambda" ? "lambda" : "gamma";
    if (!cfg.sweep_parameter.empty() && cfg.sweep_parameter != parameter) {
      throw ConfigError("sweep.parameter is '" + cfg.sweep_parameter + "' but the verb sweeps " + parameter);
    }
    if (values.empty()) {
      for (double v : parameter == "lambda" ? default_lambda_grid() : default_gamma_grid()) {
        values.push_back(format_double(v));
      }
    }
    const auto table = run_sweep(cfg, parameter, values);
    print_sweep(table);
    return 0;
  }
  if (verb == "compare") {
    std::vector<ExperimentConfig> configs;
    for (const auto& path : c.configs) {
      auto cfg = load(path, c);
      if (cfg.compare_algorithms.empty()) {
        configs.push_back(cfg);
      } else {
        for (auto a : cfg.compare_algorithms) {
          auto copy = cfg;
          copy.algorithm = a;
          configs.push_back(copy);
        }
      }
    }
    const auto table = compare_algorithms(configs);
    write_comparison_csv(std::cout, table);
    return 0;
  }
  if (verb == "critic-study") {
    const auto cfg = load(c.configs.front(), c);
    const auto rows = critic_study(cfg);
    write_critic_study_csv(std::cout, rows);
    return 0;
  }
  if (verb == "generate-data") {
    auto cfg = load(c.configs.front(), c);
    cfg.setting = Setting::offline;
    cfg.validate();
    ReplayDataset ds;
    if (cfg.env == EnvKind::review) {
      ds = generate_review_dataset(cfg.review);
    } else if (cfg.env == EnvKind::simulator) {
      ds = experiment_dataset(cfg);
    } else {
      throw ConfigError("generate-data needs env.kind = simulator or review");
    }
    fs::create_directories(cfg.output_dir);
    const fs::path path = fs::path(cfg.output_dir) / "dataset.tsv";
    write_dataset(ds, path);
    std::ofstream(fs::path(cfg.output_dir) / "config.echo") << echo_config(cfg);
    std::printf("%zu sessions, %zu transitions -> %s\n", ds.trajectories.size(), ds.transition_count(),
                path.string().c_str());
    return 0;
  }
  throw ConfigError("unknown verb " + verb);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage constrained actor-critic experiments"};
  app.require_subcommand(1);
  Common common;
  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"run", "train and evaluate one config"},
      {"sweep-lambda", "sweep the Lagrange multiplier (every lambda_i set to the value)"},
      {"sweep-gamma", "sweep the main-response discount"},
      {"compare", "run several algorithms on one environment"},
      {"critic-study", "separate vs summed critics: correlation with Monte-Carlo returns"},
      {"generate-data", "write the configured offline dataset"},
  };
  for (const auto& [name, help] : verbs) add_common(app.add_subcommand(name, help), common, name == "compare");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return run_verb(verb, common);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
