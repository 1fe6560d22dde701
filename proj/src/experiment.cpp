#include "madmix/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "madmix/models/gmm.hpp"
#include "madmix/models/ising.hpp"
#include "madmix/models/spikeslab.hpp"
#include "madmix/models/toy.hpp"

namespace madmix {

namespace {

using Clock = std::chrono::steady_clock;

const std::set<std::string> kExperiments{"toy1d", "toy2d", "toy3d", "ising", "gmm", "spikeslab"};
const std::set<std::string> kMethods{"madmix", "gibbs", "meanfield"};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw MadmixError("records_from_csv: bad number '" + s + "'");
  return v;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Estimate median_estimate(const std::vector<double>& v) {
  const double med = median(v);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - med));
  // 1.4826 MAD / sqrt(n) as a noise scale for the median.
  return {med, 1.4826 * median(dev) / std::sqrt(static_cast<double>(v.size()))};
}

template <class F>
double seconds_of(F&& f) {
  const auto t0 = Clock::now();
  f();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ResultRecord make_record(const ExperimentConfig& cfg, const std::string& metric, Estimate e) {
  ResultRecord r;
  r.method = cfg.method;
  r.experiment = cfg.experiment;
  r.metric = metric;
  r.value = e.value;
  r.std_error = e.std_error;
  r.seed = cfg.seed;
  r.available = std::isfinite(e.value);
  return r;
}

ResultRecord unavailable(const ExperimentConfig& cfg, const std::string& metric) {
  ResultRecord r;
  r.method = cfg.method;
  r.experiment = cfg.experiment;
  r.metric = metric;
  r.seed = cfg.seed;
  r.available = false;
  return r;
}

std::size_t default_samples(const ExperimentConfig& cfg) {
  if (cfg.method == "gibbs") return cfg.mixed() ? 2000 : 100000;
  if (cfg.experiment == "gmm") return 200;
  if (cfg.experiment == "spikeslab") return 1000;
  return 1000;
}

struct SpikeSlabData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

SpikeSlabData spikeslab_data(const ExperimentConfig& cfg) {
  if (!cfg.data.empty()) {
    const Eigen::MatrixXd m = load_csv_matrix(cfg.data);
    if (m.cols() < 2) throw ConfigError("spikeslab data needs at least one predictor and y");
    return {m.leftCols(m.cols() - 1), m.col(m.cols() - 1)};
  }
  const RegressionDataset d =
      synthetic_regression(cfg.ss_n, cfg.ss_p, cfg.ss_nonzero, cfg.ss_snr, cfg.target_seed);
  return {d.x, d.y};
}

Eigen::MatrixXd gmm_data(const ExperimentConfig& cfg) {
  if (!cfg.data.empty()) return load_csv_matrix(cfg.data);
  return synthetic_gmm(cfg.gmm_n, cfg.gmm_k, cfg.gmm_d, cfg.gmm_separation, cfg.target_seed).y;
}

HamiltonianConfig hamiltonian(const ExperimentConfig& cfg) {
  HamiltonianConfig h;
  h.leapfrog_steps = cfg.leapfrog_steps;
  h.step_size = cfg.step_size;
  return h;
}

MixedReferencePtr mixed_reference(const MixedTarget& target, double scale) {
  if (const auto* g = dynamic_cast<const GmmModel*>(&target)) return g->default_reference(scale);
  if (const auto* s = dynamic_cast<const SpikeSlabModel*>(&target)) return s->default_reference(scale);
  throw MadmixError("mixed_reference: unknown mixed target");
}

DiscretePMF exact_pmf(const ExperimentConfig& cfg, const FullConditionalTarget& target) {
  if (cfg.experiment == "ising") return ising_exact_pmf(cfg.ising_m, cfg.ising_beta);
  return static_cast<const ToyTarget&>(target).joint();
}

// Exact log Z for enumerable Ising chains; other targets are used as given.
double log_normalizer(const ExperimentConfig& cfg) {
  if (cfg.experiment == "ising" && cfg.enumerable()) return ising_log_partition(cfg.ising_m, cfg.ising_beta);
  return 0.0;
}

std::vector<ResultRecord> run_discrete(const ExperimentConfig& cfg, std::optional<PmfTable>* pmf) {
  const TargetPtr target = make_discrete_target(cfg);
  const bool enumerable = cfg.enumerable();
  std::vector<ResultRecord> out;
  std::optional<DiscretePMF> exact;
  if (enumerable) exact = exact_pmf(cfg, *target);
  auto store = [&](std::vector<double> approx) {
    if (pmf && exact) {
      PmfTable t;
      t.exact.assign(exact->probs().begin(), exact->probs().end());
      t.approx = std::move(approx);
      for (std::size_t m = 0; m < target->dimension(); ++m) t.shape.push_back(target->support_size(m));
      *pmf = std::move(t);
    }
  };

  if (cfg.method == "madmix") {
    const MadMixFlow flow(target, ProductReference::uniform(*target), cfg.n_flow, ShiftParam(cfg.xi));
    if (enumerable) {
      const MarginalPmf marg = exact_marginal_pmf(flow, cfg.n_u, cfg.seed);
      out.push_back(make_record(cfg, "kl", {kl_to_target(marg.pmf, *exact), 0.0}));
      out.push_back(make_record(cfg, "tv", {total_variation(marg.pmf, *exact), 0.0}));
      store(std::vector<double>(marg.pmf.probs().begin(), marg.pmf.probs().end()));
    } else {
      out.push_back(unavailable(cfg, "kl"));
      out.push_back(unavailable(cfg, "tv"));
    }
    const double log_z = log_normalizer(cfg);
    const FullConditionalTarget& t = *target;
    const Estimate e = elbo(
        flow, [&](std::span<const int> x) { return t.unnormalized_log_mass(x) - log_z; },
        cfg.samples, cfg.seed);
    out.push_back(make_record(cfg, "neg_elbo", {-e.value, e.std_error}));
  } else if (cfg.method == "gibbs") {
    if (enumerable) {
      GibbsChain chain(target, cfg.seed);
      const std::vector<std::size_t> flat = gibbs_flat_samples(chain, cfg.samples, cfg.samples / 10);
      const EmpiricalPmf emp = empirical_pmf(flat, exact->size());
      out.push_back(make_record(cfg, "kl", {kl_to_target(emp.smoothed, *exact), 0.0}));
      out.push_back(make_record(cfg, "tv", {total_variation(emp.raw, exact->probs()), 0.0}));
      store(emp.raw);
    } else {
      out.push_back(unavailable(cfg, "kl"));
      out.push_back(unavailable(cfg, "tv"));
    }
    out.push_back(unavailable(cfg, "neg_elbo"));
  } else {
    const MeanFieldApprox q = cavi_fit(*target);
    if (enumerable) {
      const DiscretePMF flat = q.flattened();
      out.push_back(make_record(cfg, "kl", {kl_to_target(flat, *exact), 0.0}));
      out.push_back(make_record(cfg, "tv", {total_variation(flat, *exact), 0.0}));
      store(std::vector<double>(flat.probs().begin(), flat.probs().end()));
    } else {
      out.push_back(unavailable(cfg, "kl"));
      out.push_back(unavailable(cfg, "tv"));
    }
    out.push_back(make_record(cfg, "neg_elbo", {-(q.elbo - log_normalizer(cfg)), 0.0}));
  }
  return out;
}

std::vector<MixedState> gibbs_states(const ExperimentConfig& cfg, const MixedTarget& target) {
  std::vector<MixedState> states;
  const std::size_t burn = cfg.samples / 10;
  if (const auto* g = dynamic_cast<const GmmModel*>(&target)) {
    GmmGibbs chain(*g, cfg.seed);
    for (std::size_t i = 0; i < burn; ++i) chain.sweep();
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      chain.sweep();
      MixedState s;
      s.xc = chain.packed();
      s.xd = chain.labels();
      states.push_back(std::move(s));
    }
  } else if (const auto* ss = dynamic_cast<const SpikeSlabModel*>(&target)) {
    SpikeSlabGibbs chain(*ss, cfg.seed);
    for (std::size_t i = 0; i < burn; ++i) chain.sweep();
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      chain.sweep();
      MixedState s;
      s.xc = ss->pack(chain.params());
      s.xd = chain.gamma();
      states.push_back(std::move(s));
    }
  }
  return states;
}

ExperimentOutput run_mixed(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const MixedTargetPtr target = make_mixed_target(cfg);
  out.records.push_back(unavailable(cfg, "kl"));
  out.records.push_back(unavailable(cfg, "tv"));
  if (cfg.method == "madmix") {
    const MixedMixFlow flow(target, mixed_reference(*target, cfg.reference_scale), cfg.n_flow,
                            hamiltonian(cfg), ShiftParam(cfg.xi));
    const MixedSampleSet set = mixed_sample_set(flow, cfg.samples, cfg.seed, true);
    const Estimate e = mean_and_se(set.elbo_terms);
    out.records.push_back(make_record(cfg, "neg_elbo", {-e.value, e.std_error}));
    out.samples_csv = mixed_samples_csv(*target, set.states);
  } else if (cfg.method == "gibbs") {
    out.records.push_back(unavailable(cfg, "neg_elbo"));
    out.samples_csv = mixed_samples_csv(*target, gibbs_states(cfg, *target));
  } else {
    out.records.push_back(unavailable(cfg, "neg_elbo"));
  }
  return out;
}

}  // namespace

std::size_t default_flow_length(const std::string& experiment, std::size_t ising_m) {
  if (experiment == "toy1d" || experiment == "toy2d") return 500;
  if (experiment == "toy3d") return 100;
  if (experiment == "ising") return ising_m <= 20 ? 1000 : 500;
  if (experiment == "gmm") return 100;
  if (experiment == "spikeslab") return 500;
  throw ConfigError("unknown experiment '" + experiment + "'");
}

bool ExperimentConfig::enumerable() const {
  if (experiment == "ising") return ising_m <= 20;
  return experiment == "toy1d" || experiment == "toy2d" || experiment == "toy3d";
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  if (!kExperiments.count(c.experiment)) throw ConfigError("unknown experiment '" + c.experiment + "'");
  if (!kMethods.count(c.method)) throw ConfigError("unknown method '" + c.method + "'");
  if (c.n_flow == 0) c.n_flow = default_flow_length(c.experiment, c.ising_m);
  if (c.samples == 0) c.samples = default_samples(c);
  if (c.samples < 2) throw ConfigError("samples must be at least 2");
  if (!std::isfinite(c.xi) || ShiftParam(c.xi).is_low_order_rational()) {
    throw ConfigError("xi must be finite and not a low-order rational");
  }
  if (c.leapfrog_steps < 1) throw ConfigError("leapfrog-steps must be positive");
  if (!(c.step_size > 0.0) || c.step_size * static_cast<double>(c.leapfrog_steps) > 10.0) {
    throw ConfigError("step-size must be positive with step-size * leapfrog-steps <= 10");
  }
  if (c.n_u < 1) throw ConfigError("n_u must be positive");
  if (c.timing_reps < 10) throw ConfigError("timing_reps must be at least 10");
  if (c.ising_m < 2 || !(c.ising_beta >= 0.0)) throw ConfigError("ising needs M >= 2 and beta >= 0");
  if (c.gmm_k < 1 || c.gmm_n < 1 || c.gmm_d < 1) throw ConfigError("gmm sizes must be positive");
  if (c.ss_p < 1 || c.ss_n < 1 || c.ss_nonzero > c.ss_p || !(c.ss_snr > 0.0)) {
    throw ConfigError("invalid spikeslab sizes");
  }
  if (!(c.reference_scale > 0.0)) throw ConfigError("reference_scale must be positive");
  if (!c.data.empty() && !std::filesystem::exists(c.data)) {
    throw ConfigError("dataset file not found: " + c.data);
  }
  if (!c.data.empty() && !c.mixed()) throw ConfigError("--data applies to gmm and spikeslab only");
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return nlohmann::json{{"experiment", c.experiment},
                        {"method", c.method},
                        {"n_flow", c.n_flow},
                        {"xi", c.xi},
                        {"seed", c.seed},
                        {"samples", c.samples},
                        {"leapfrog_steps", c.leapfrog_steps},
                        {"step_size", c.step_size},
                        {"data", c.data},
                        {"out_dir", c.out_dir},
                        {"target_seed", c.target_seed},
                        {"n_u", c.n_u},
                        {"timing_reps", c.timing_reps},
                        {"ising_m", c.ising_m},
                        {"ising_beta", c.ising_beta},
                        {"gmm_k", c.gmm_k},
                        {"gmm_n", c.gmm_n},
                        {"gmm_d", c.gmm_d},
                        {"gmm_separation", c.gmm_separation},
                        {"ss_n", c.ss_n},
                        {"ss_p", c.ss_p},
                        {"ss_nonzero", c.ss_nonzero},
                        {"ss_snr", c.ss_snr},
                        {"reference_scale", c.reference_scale}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  const nlohmann::json known = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("experiment", c.experiment);
    get("method", c.method);
    get("n_flow", c.n_flow);
    get("xi", c.xi);
    get("seed", c.seed);
    get("samples", c.samples);
    get("leapfrog_steps", c.leapfrog_steps);
    get("step_size", c.step_size);
    get("data", c.data);
    get("out_dir", c.out_dir);
    get("target_seed", c.target_seed);
    get("n_u", c.n_u);
    get("timing_reps", c.timing_reps);
    get("ising_m", c.ising_m);
    get("ising_beta", c.ising_beta);
    get("gmm_k", c.gmm_k);
    get("gmm_n", c.gmm_n);
    get("gmm_d", c.gmm_d);
    get("gmm_separation", c.gmm_separation);
    get("ss_n", c.ss_n);
    get("ss_p", c.ss_p);
    get("ss_nonzero", c.ss_nonzero);
    get("ss_snr", c.ss_snr);
    get("reference_scale", c.reference_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  return c;
}

bool operator==(const ResultRecord& a, const ResultRecord& b) {
  auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  return a.method == b.method && a.experiment == b.experiment && a.metric == b.metric &&
         same(a.value, b.value) && same(a.std_error, b.std_error) && a.seed == b.seed &&
         a.available == b.available;
}

nlohmann::json to_json(const ResultRecord& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return nlohmann::json{{"method", r.method},       {"experiment", r.experiment},
                        {"metric", r.metric},       {"value", num(r.value)},
                        {"std_error", num(r.std_error)}, {"seed", r.seed},
                        {"available", r.available}};
}

ResultRecord record_from_json(const nlohmann::json& j) {
  ResultRecord r;
  j.at("method").get_to(r.method);
  j.at("experiment").get_to(r.experiment);
  j.at("metric").get_to(r.metric);
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  r.value = num(j.at("value"));
  r.std_error = num(j.at("std_error"));
  j.at("seed").get_to(r.seed);
  j.at("available").get_to(r.available);
  return r;
}

std::string records_to_csv(const std::vector<ResultRecord>& records) {
  std::ostringstream os;
  os << "method,experiment,metric,value,std_error,seed,available\n";
  for (const auto& r : records) {
    os << r.method << ',' << r.experiment << ',' << r.metric << ','
       << (std::isnan(r.value) ? "nan" : fmt_double(r.value)) << ','
       << (std::isnan(r.std_error) ? "nan" : fmt_double(r.std_error)) << ',' << r.seed << ','
       << (r.available ? 1 : 0) << '\n';
  }
  return os.str();
}

std::vector<ResultRecord> records_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<ResultRecord> out;
  if (!std::getline(is, line) || line != "method,experiment,metric,value,std_error,seed,available") {
    throw MadmixError("records_from_csv: missing or unexpected header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw MadmixError("records_from_csv: expected 7 columns");
    ResultRecord r;
    r.method = cells[0];
    r.experiment = cells[1];
    r.metric = cells[2];
    r.value = parse_double(cells[3]);
    r.std_error = parse_double(cells[4]);
    r.seed = std::stoull(cells[5]);
    r.available = cells[6] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

TargetPtr make_discrete_target(const ExperimentConfig& cfg) {
  if (cfg.experiment == "toy1d") return std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(1), cfg.target_seed));
  if (cfg.experiment == "toy2d") return std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(2), cfg.target_seed));
  if (cfg.experiment == "toy3d") return std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(3), cfg.target_seed));
  if (cfg.experiment == "ising") return std::make_shared<IsingChain>(cfg.ising_m, cfg.ising_beta);
  throw ConfigError("experiment '" + cfg.experiment + "' has no discrete target");
}

MixedTargetPtr make_mixed_target(const ExperimentConfig& cfg) {
  if (cfg.experiment == "gmm") return std::make_shared<GmmModel>(gmm_data(cfg), cfg.gmm_k, cfg.target_seed);
  if (cfg.experiment == "spikeslab") {
    SpikeSlabData d = spikeslab_data(cfg);
    return std::make_shared<SpikeSlabModel>(std::move(d.x), std::move(d.y));
  }
  throw ConfigError("experiment '" + cfg.experiment + "' has no mixed target");
}

PmfTable pmf_table(const ExperimentConfig& config) {
  const ExperimentConfig cfg = config.resolved();
  if (!cfg.enumerable()) throw ConfigError("pmf requires an enumerable experiment");
  std::optional<PmfTable> t;
  run_discrete(cfg, &t);
  return *t;
}

ExperimentOutput run_experiment_full(const ExperimentConfig& config) {
  const ExperimentConfig cfg = config.resolved();
  if (cfg.mixed()) return run_mixed(cfg);
  ExperimentOutput out;
  out.records = run_discrete(cfg, &out.pmf);
  return out;
}

std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
  return run_experiment_full(cfg).records;
}

std::vector<ResultRecord> timing_probe(const ExperimentConfig& config) {
  const ExperimentConfig cfg = config.resolved();
  std::vector<ResultRecord> out;
  std::vector<double> dens, samp;
  Rng rng = make_rng(cfg.seed, 0x74696d65);
  if (cfg.mixed()) {
    const MixedTargetPtr target = make_mixed_target(cfg);
    if (cfg.method == "meanfield") {
      return {unavailable(cfg, "seconds_density"), unavailable(cfg, "seconds_sample")};
    }
    if (cfg.method == "gibbs") {
      if (const auto* g = dynamic_cast<const GmmModel*>(target.get())) {
        GmmGibbs chain(*g, cfg.seed);
        for (std::size_t r = 0; r < cfg.timing_reps; ++r) samp.push_back(seconds_of([&] { chain.sweep(); }));
      } else {
        SpikeSlabGibbs chain(static_cast<const SpikeSlabModel&>(*target), cfg.seed);
        for (std::size_t r = 0; r < cfg.timing_reps; ++r) samp.push_back(seconds_of([&] { chain.sweep(); }));
      }
      out.push_back(unavailable(cfg, "seconds_density"));
      out.push_back(make_record(cfg, "seconds_sample", median_estimate(samp)));
      return out;
    }
    const MixedMixFlow flow(target, mixed_reference(*target, cfg.reference_scale), cfg.n_flow,
                            hamiltonian(cfg), ShiftParam(cfg.xi));
    const MixedState probe = flow.sample(rng);
    volatile double sink = 0.0;
    for (std::size_t r = 0; r < cfg.timing_reps; ++r) {
      dens.push_back(seconds_of([&] { sink = flow.log_density(probe); }));
      samp.push_back(seconds_of([&] { sink = flow.sample(rng).uc; }));
    }
    (void)sink;
  } else {
    const TargetPtr target = make_discrete_target(cfg);
    volatile double sink = 0.0;
    if (cfg.method == "madmix") {
      const MadMixFlow flow(target, ProductReference::uniform(*target), cfg.n_flow,
                            ShiftParam(cfg.xi));
      const AugmentedState probe = flow.sample(rng);
      for (std::size_t r = 0; r < cfg.timing_reps; ++r) {
        dens.push_back(seconds_of([&] { sink = flow.log_density(probe); }));
        samp.push_back(seconds_of([&] { sink = flow.sample(rng).u[0]; }));
      }
    } else if (cfg.method == "gibbs") {
      GibbsChain chain(target, cfg.seed);
      for (std::size_t r = 0; r < cfg.timing_reps; ++r) {
        samp.push_back(seconds_of([&] { sink = chain.sweep()[0]; }));
      }
    } else {
      const MeanFieldApprox q = cavi_fit(*target);
      std::vector<int> x(target->dimension());
      for (std::size_t r = 0; r < cfg.timing_reps; ++r) {
        samp.push_back(seconds_of([&] {
          for (std::size_t m = 0; m < x.size(); ++m) x[m] = static_cast<int>(q.factors[m].sample(rng));
        }));
        dens.push_back(seconds_of([&] { sink = q.log_prob(x); }));
      }
    }
    (void)sink;
  }
  out.push_back(dens.empty() ? unavailable(cfg, "seconds_density")
                             : make_record(cfg, "seconds_density", median_estimate(dens)));
  out.push_back(make_record(cfg, "seconds_sample", median_estimate(samp)));
  return out;
}

PassCosts measure_pass_costs(const FullConditionalTarget& target, std::size_t reps,
                             std::size_t batch, std::uint64_t seed) {
  if (reps < 1 || batch < 1) throw MadmixError("measure_pass_costs: reps and batch must be positive");
  Rng rng = make_rng(seed, 0x636f7374);
  std::vector<int> x(target.dimension());
  AugmentedState s;
  s.x.resize(target.dimension());
  s.u.resize(target.dimension());
  for (std::size_t m = 0; m < x.size(); ++m) {
    x[m] = static_cast<int>(rng() % target.support_size(m));
    s.x[m] = x[m];
    s.u[m] = uniform01(rng);
  }
  DiscretePMF scratch;
  std::vector<double> gibbs, mad;
  volatile double sink = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    gibbs.push_back(seconds_of([&] {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t m = 0; m < x.size(); ++m) {
          target.conditional_into(m, x, scratch);
          x[m] = static_cast<int>(scratch.sample(rng));
        }
      }
    }) / static_cast<double>(batch));
    mad.push_back(seconds_of([&] {
      for (std::size_t b = 0; b < batch; ++b) sink = mad_forward_inplace(s, target, ShiftParam(), scratch);
    }) / static_cast<double>(batch));
  }
  (void)sink;
  return {median(gibbs), median(mad)};
}

WeightProblem two_mode_weight_problem(std::size_t n_flow, std::uint64_t seed) {
  const ToyTarget block = ToyTarget::random({4, 4}, seed);
  constexpr double kOff = 1e-10;
  constexpr double kDelta = 1e-8;
  std::vector<double> table(64, kOff);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double p = 0.5 * block.joint().prob(i * 4 + j);
      table[i * 8 + j] = p;
      table[(i + 4) * 8 + (j + 4)] = p;
    }
  }
  double total = 0.0;
  for (double v : table) total += v;
  for (double& v : table) v /= total;
  auto target = std::make_shared<ToyTarget>(std::vector<std::size_t>{8, 8}, table);
  auto block_ref = [&](std::size_t lo) {
    std::vector<double> w(8, kDelta);
    for (std::size_t a = lo; a < lo + 4; ++a) w[a] = 1.0;
    const DiscretePMF f = DiscretePMF::from_weights(w);
    return std::make_shared<ProductReference>(std::vector<DiscretePMF>{f, f});
  };
  MadMixFlow f0(target, block_ref(0), n_flow);
  MadMixFlow f1(target, block_ref(4), n_flow);
  WeightProblem p;
  p.target = target;
  p.pair = std::make_shared<WeightedPair>(std::move(f0), std::move(f1), 0.5);
  return p;
}

WeightDemo weight_demo(const ExperimentConfig& cfg, const WeightOptions& options) {
  const std::size_t n = cfg.n_flow == 0 ? 20 : cfg.n_flow;
  const WeightProblem problem = two_mode_weight_problem(n, cfg.target_seed);
  const FullConditionalTarget& t = *problem.target;
  const LogMassFn log_target = [&t](std::span<const int> x) { return t.unnormalized_log_mass(x); };
  WeightDemo demo;
  demo.fit = optimize_weight(*problem.pair, log_target, options);
  const WeightObjective objective(*problem.pair, log_target, std::max<std::size_t>(options.n_samples, 2000),
                                  mix_seed(options.seed + 7));
  constexpr double kAlpha = 0.3;
  constexpr double kH = 1e-4;
  demo.gradient_at_start = objective.gradient(kAlpha);
  demo.finite_difference = {(objective.kl(kAlpha + kH).value - objective.kl(kAlpha - kH).value) / (2 * kH),
                            objective.finite_difference_gap_se(kAlpha)};
  return demo;
}

std::string mixed_samples_csv(const MixedTarget& target, const std::vector<MixedState>& states) {
  std::ostringstream os;
  const std::vector<std::string> names = target.continuous_names();
  for (const auto& n : names) os << n << ',';
  for (std::size_t m = 0; m < target.discrete_dim(); ++m) {
    os << 'd' << m << (m + 1 < target.discrete_dim() ? "," : "");
  }
  os << '\n';
  for (const auto& s : states) {
    for (Eigen::Index i = 0; i < s.xc.size(); ++i) os << fmt_double(s.xc[i]) << ',';
    for (std::size_t m = 0; m < s.xd.size(); ++m) os << s.xd[m] << (m + 1 < s.xd.size() ? "," : "");
    os << '\n';
  }
  return os.str();
}

std::string resolve_out_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("MADMIX_OUT_DIR"); env && *env) return env;
  return "madmix_out";
}

void write_outputs(const std::string& dir, const ExperimentConfig& cfg, const ExperimentOutput& out,
                   const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw MadmixError("cannot write " + (fs::path(dir) / name).string());
    f << text;
    return name;
  };
  nlohmann::json manifest;
  manifest["config"] = to_json(cfg);
  manifest["records"] = nlohmann::json::array();
  for (const auto& r : out.records) manifest["records"].push_back(to_json(r));
  manifest["files"] = nlohmann::json::array();
  manifest["files"].push_back(write(prefix + "_records.csv", records_to_csv(out.records)));
  if (out.pmf) {
    std::ostringstream os;
    os << "state,exact,approx\n";
    for (std::size_t i = 0; i < out.pmf->exact.size(); ++i) {
      os << i << ',' << fmt_double(out.pmf->exact[i]) << ',' << fmt_double(out.pmf->approx[i]) << '\n';
    }
    manifest["files"].push_back(write(prefix + "_pmf.csv", os.str()));
    manifest["pmf_shape"] = out.pmf->shape;
  }
  if (!out.samples_csv.empty()) manifest["files"].push_back(write(prefix + "_samples.csv", out.samples_csv));
  write(prefix + "_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace madmix
