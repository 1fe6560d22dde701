#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "madmix/experiment.hpp"
#include "madmix/models/ising.hpp"

using namespace madmix;
namespace fs = std::filesystem;

namespace {

const ResultRecord& find(const std::vector<ResultRecord>& rs, const std::string& metric) {
  for (const auto& r : rs) {
    if (r.metric == metric) return r;
  }
  throw std::runtime_error("no record " + metric);
}

ExperimentConfig config(const std::string& experiment, const std::string& method) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.method = method;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "madmix_experiment_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + MADMIX_CLI_PATH + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy * sxy / (sxx * syy);
}

}  // namespace

TEST(Experiment, Toy1dMadMixReachesSmallKl) {
  ExperimentConfig c = config("toy1d", "madmix");
  c.n_flow = 500;
  const std::vector<ResultRecord> rs = run_experiment(c);
  const ResultRecord& kl = find(rs, "kl");
  EXPECT_TRUE(kl.available);
  EXPECT_LT(kl.value, 0.01);
  EXPECT_TRUE(std::isfinite(find(rs, "neg_elbo").value));
}

TEST(Experiment, StiffIsingReportsElboOnly) {
  ExperimentConfig c = config("ising", "madmix");
  c.ising_m = 50;
  c.ising_beta = 5.0;
  c.samples = 200;
  const std::vector<ResultRecord> rs = run_experiment(c);
  EXPECT_FALSE(find(rs, "kl").available);
  EXPECT_TRUE(std::isnan(find(rs, "kl").value));
  EXPECT_TRUE(find(rs, "neg_elbo").available);
  EXPECT_TRUE(std::isfinite(find(rs, "neg_elbo").value));
}

TEST(Experiment, MeanFieldIsWorseOnIsing) {
  const double mf = find(run_experiment(config("ising", "meanfield")), "kl").value;
  const double mad = find(run_experiment(config("ising", "madmix")), "kl").value;
  EXPECT_GT(mf, mad);
  EXPECT_LT(find(run_experiment(config("ising", "madmix")), "tv").value, 0.05);
}

TEST(Experiment, GibbsReportsNoElbo) {
  ExperimentConfig c = config("toy2d", "gibbs");
  c.samples = 200000;
  const std::vector<ResultRecord> rs = run_experiment(c);
  EXPECT_LT(find(rs, "kl").value, 0.01);
  EXPECT_FALSE(find(rs, "neg_elbo").available);
}

TEST(Experiment, MixedMeanFieldIsUnavailable) {
  const std::vector<ResultRecord> rs = run_experiment(config("gmm", "meanfield"));
  for (const auto& r : rs) EXPECT_FALSE(r.available) << r.metric;
}

TEST(Experiment, SmallGmmRunGivesFiniteElbo) {
  ExperimentConfig c = config("gmm", "madmix");
  c.n_flow = 10;
  c.samples = 20;
  const ExperimentOutput out = run_experiment_full(c);
  EXPECT_TRUE(std::isfinite(find(out.records, "neg_elbo").value));
  std::istringstream csv(out.samples_csv);
  std::string header, row;
  std::getline(csv, header);
  EXPECT_NE(header.find(",d0,"), std::string::npos);
  std::size_t rows = 0;
  while (std::getline(csv, row)) ++rows;
  EXPECT_EQ(rows, 20u);
}

TEST(Experiment, SameSeedReproducesRecords) {
  for (const char* e : {"toy2d", "ising", "spikeslab"}) {
    ExperimentConfig c = config(e, "madmix");
    c.seed = 11;
    c.samples = 50;
    if (std::string(e) == "spikeslab") c.n_flow = 20;
    EXPECT_EQ(run_experiment(c), run_experiment(c)) << e;
  }
  ExperimentConfig g = config("spikeslab", "gibbs");
  g.samples = 50;
  EXPECT_EQ(run_experiment_full(g).samples_csv, run_experiment_full(g).samples_csv);
}

TEST(Experiment, InvalidConfigsRaiseConfigError) {
  EXPECT_THROW(run_experiment(config("toy4d", "madmix")), ConfigError);
  EXPECT_THROW(run_experiment(config("toy1d", "hmc")), ConfigError);
  ExperimentConfig c = config("toy1d", "madmix");
  c.xi = 0.5;
  EXPECT_THROW(c.resolved(), ConfigError);
  c = config("gmm", "madmix");
  c.data = "/nonexistent/data.csv";
  EXPECT_THROW(c.resolved(), ConfigError);
  c = config("gmm", "madmix");
  c.step_size = 2.0;
  EXPECT_THROW(c.resolved(), ConfigError);
  c = config("toy1d", "madmix");
  c.samples = 1;
  EXPECT_THROW(c.resolved(), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"experimnet", "toy1d"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"seed", "zero"}}), ConfigError);
  EXPECT_THROW(pmf_table(config("gmm", "madmix")), ConfigError);
}

TEST(Experiment, ResolvedDefaults) {
  const ExperimentConfig c = config("toy1d", "madmix").resolved();
  EXPECT_EQ(c.n_flow, 500u);
  EXPECT_DOUBLE_EQ(c.xi, std::numbers::pi / 16);
  EXPECT_EQ(config("ising", "madmix").resolved().n_flow, 1000u);
  EXPECT_EQ(config("gmm", "madmix").resolved().n_flow, 100u);
}

TEST(Records, RoundTripThroughCsvAndJson) {
  ResultRecord a{"madmix", "toy1d", "kl", 0.1 + 1e-17, 3.3e-5, 7, true};
  ResultRecord b{"gibbs", "ising", "neg_elbo", std::nan(""), std::nan(""), 2, false};
  ResultRecord c{"madmix", "ising", "seconds_sample", 1.0 / 3.0, 0.0, 18446744073709551615ull, true};
  const std::vector<ResultRecord> rs{a, b, c};
  EXPECT_EQ(records_from_csv(records_to_csv(rs)), rs);
  for (const auto& r : rs) EXPECT_EQ(record_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  EXPECT_THROW(records_from_csv("bad header\n"), MadmixError);
}

TEST(Records, ConfigRoundTripsThroughJson) {
  ExperimentConfig c = config("spikeslab", "gibbs");
  c.seed = 99;
  c.ss_snr = 2.5;
  const ExperimentConfig back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Outputs, WritesRecordsManifestAndPmf) {
  const fs::path dir = scratch_dir("outputs");
  ExperimentConfig c = config("toy2d", "madmix").resolved();
  const ExperimentOutput out = run_experiment_full(c);
  write_outputs(dir.string(), c, out, "run");
  EXPECT_EQ(records_from_csv(read_file(dir / "run_records.csv")), out.records);
  const nlohmann::json m = nlohmann::json::parse(read_file(dir / "run_manifest.json"));
  EXPECT_EQ(m["config"]["experiment"], "toy2d");
  EXPECT_EQ(m["pmf_shape"], (std::vector<std::size_t>{4, 5}));
  EXPECT_TRUE(fs::exists(dir / "run_pmf.csv"));
}

TEST(Outputs, EnvironmentSetsDefaultDirectory) {
  ::setenv("MADMIX_OUT_DIR", "/tmp/madmix_env_dir", 1);
  EXPECT_EQ(resolve_out_dir(""), "/tmp/madmix_env_dir");
  EXPECT_EQ(resolve_out_dir("explicit"), "explicit");
  ::unsetenv("MADMIX_OUT_DIR");
  EXPECT_EQ(resolve_out_dir(""), "madmix_out");
}

TEST(Timing, ShortFlowDensityIsFaster) {
  ExperimentConfig c = config("toy1d", "madmix");
  c.n_flow = 1;
  const double fast = find(timing_probe(c), "seconds_density").value;
  c.n_flow = 500;
  const double slow = find(timing_probe(c), "seconds_density").value;
  EXPECT_LT(fast, slow);
}

TEST(Timing, SampleCostGrowsLinearlyInFlowLength) {
  std::vector<double> n, t;
  for (std::size_t len : {10u, 100u, 1000u}) {
    ExperimentConfig c = config("ising", "madmix");
    c.ising_m = 20;
    c.n_flow = len;
    c.timing_reps = 201;
    n.push_back(static_cast<double>(len));
    t.push_back(find(timing_probe(c), "seconds_sample").value);
  }
  EXPECT_GT(r_squared(n, t), 0.9);
}

TEST(Timing, GibbsSweepIsCheaperThanMadPass) {
  const IsingChain ising(50, 1.0);
  const PassCosts costs = measure_pass_costs(ising, 11, 200, 0);
  EXPECT_LT(costs.gibbs_sweep, costs.mad_pass);
  EXPECT_THROW(measure_pass_costs(ising, 0, 1, 0), MadmixError);
}

TEST(Cli, RunWritesOutputs) {
  const fs::path dir = scratch_dir("cli_run");
  EXPECT_EQ(run_cli("run --experiment toy1d --n-flow 50 --samples 100 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run_toy1d_madmix_s0_records.csv"));
  EXPECT_TRUE(fs::exists(dir / "run_toy1d_madmix_s0_pmf.csv"));
}

TEST(Cli, EnvironmentVariableSetsOutputDirectory) {
  const fs::path dir = scratch_dir("cli_env");
  EXPECT_EQ(run_cli("pmf --experiment toy2d --n-flow 20", "MADMIX_OUT_DIR=" + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "pmf_toy2d_madmix_s0_pmf.csv"));
}

TEST(Cli, TimeAndWeightSubcommands) {
  const fs::path dir = scratch_dir("cli_misc");
  EXPECT_EQ(run_cli("time --experiment ising --method gibbs --out " + dir.string()), 0);
  EXPECT_EQ(run_cli("weight --n-flow 10 --iters 20 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "weight_toy1d_madmix_s0.json"));
}

TEST(Cli, ConfigErrorsExitWithOne) {
  const fs::path dir = scratch_dir("cli_bad");
  EXPECT_EQ(run_cli("run --experiment toy9d --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("run --experiment toy1d --xi 0.25 --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("run --bogus-flag"), 1);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("pmf --experiment gmm --out " + dir.string()), 1);
  std::ofstream(dir / "bad.json") << R"({"experiment": "toy1d", "extra": 1})";
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " + dir.string()), 1);
}

TEST(Cli, RuntimeFailureExitsWithTwo) {
  const fs::path dir = scratch_dir("cli_runtime");
  std::ofstream(dir / "ragged.csv") << "1,2,3\n4,5\n";
  EXPECT_EQ(run_cli("run --experiment gmm --data " + (dir / "ragged.csv").string() + " --out " +
                    dir.string()),
            2);
}
