// madmix command-line harness: run, time, pmf, weight.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "madmix/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Flags {
  std::string config_path;
  std::string experiment;
  std::string method;
  std::size_t n_flow = 0;
  double xi = 0.0;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::size_t leapfrog_steps = 0;
  double step_size = 0.0;
  std::string data;
  std::string out;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--experiment", f.experiment, "toy1d | toy2d | toy3d | ising | gmm | spikeslab");
  cmd->add_option("--method", f.method, "madmix | gibbs | meanfield");
  cmd->add_option("--n-flow", f.n_flow, "flow length N (0: experiment default)");
  cmd->add_option("--xi", f.xi, "rho-space shift");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--samples", f.samples, "Monte Carlo sample count (0: default)");
  cmd->add_option("--leapfrog-steps", f.leapfrog_steps, "leapfrog steps per pass");
  cmd->add_option("--step-size", f.step_size, "leapfrog step size");
  cmd->add_option("--data", f.data, "dataset CSV (gmm, spikeslab)");
  cmd->add_option("--out", f.out, "output directory (default $MADMIX_OUT_DIR)");
}

madmix::ExperimentConfig build_config(const CLI::App& cmd, const Flags& f) {
  madmix::ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw madmix::ConfigError(std::string("cannot parse config: ") + e.what());
    }
    cfg = madmix::config_from_json(j);
  }
  auto given = [&](const char* name) { return cmd.get_option(name)->count() > 0; };
  if (given("--experiment")) cfg.experiment = f.experiment;
  if (given("--method")) cfg.method = f.method;
  if (given("--n-flow")) cfg.n_flow = f.n_flow;
  if (given("--xi")) cfg.xi = f.xi;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--samples")) cfg.samples = f.samples;
  if (given("--leapfrog-steps")) cfg.leapfrog_steps = f.leapfrog_steps;
  if (given("--step-size")) cfg.step_size = f.step_size;
  if (given("--data")) cfg.data = f.data;
  cfg.out_dir = madmix::resolve_out_dir(given("--out") ? f.out : cfg.out_dir);
  return cfg.resolved();
}

std::string stem(const madmix::ExperimentConfig& cfg, const char* kind) {
  return std::string(kind) + "_" + cfg.experiment + "_" + cfg.method + "_s" + std::to_string(cfg.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAD Mix variational inference experiments"};
  app.require_subcommand(1);
  Flags f;
  CLI::App* run = app.add_subcommand("run", "run an experiment and emit KL / ELBO records");
  CLI::App* time = app.add_subcommand("time", "median density and sample timings");
  CLI::App* pmf = app.add_subcommand("pmf", "dump exact and approximate flattened PMFs");
  CLI::App* weight = app.add_subcommand("weight", "fit the mixture weight of two flows");
  for (CLI::App* cmd : {run, time, pmf, weight}) add_common(cmd, f);
  madmix::WeightOptions wopt;
  weight->add_option("--iters", wopt.n_iters, "SGD iterations");
  weight->add_option("--lr", wopt.step_size, "SGD step size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  madmix::ExperimentConfig cfg;
  try {
    cfg = build_config(*cmd, f);
  } catch (const madmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (cmd == run) {
      const madmix::ExperimentOutput out = madmix::run_experiment_full(cfg);
      madmix::write_outputs(cfg.out_dir, cfg, out, stem(cfg, "run"));
      std::cout << madmix::records_to_csv(out.records);
    } else if (cmd == time) {
      madmix::ExperimentOutput out;
      out.records = madmix::timing_probe(cfg);
      madmix::write_outputs(cfg.out_dir, cfg, out, stem(cfg, "time"));
      std::cout << madmix::records_to_csv(out.records);
    } else if (cmd == pmf) {
      madmix::ExperimentOutput out;
      out.pmf = madmix::pmf_table(cfg);
      madmix::write_outputs(cfg.out_dir, cfg, out, stem(cfg, "pmf"));
      std::cout << "state,exact,approx\n";
      for (std::size_t i = 0; i < out.pmf->exact.size(); ++i) {
        std::printf("%zu,%.17g,%.17g\n", i, out.pmf->exact[i], out.pmf->approx[i]);
      }
    } else {
      wopt.seed = cfg.seed;
      const madmix::WeightDemo demo = madmix::weight_demo(cfg, wopt);
      nlohmann::json j{{"alpha", demo.fit.alpha},
                       {"iterations", demo.fit.iterations},
                       {"diverged", demo.fit.diverged},
                       {"gradient", demo.gradient_at_start.value},
                       {"gradient_se", demo.gradient_at_start.std_error},
                       {"finite_difference", demo.finite_difference.value},
                       {"gap_se", demo.finite_difference.std_error},
                       {"trace", demo.fit.trace}};
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream(std::filesystem::path(cfg.out_dir) / (stem(cfg, "weight") + ".json")) << j.dump(2) << '\n';
      std::printf("alpha,%.17g\ndiverged,%d\n", demo.fit.alpha, demo.fit.diverged ? 1 : 0);
    }
  } catch (const madmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
