#include "madmix/mixflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace madmix {

ProductReference::ProductReference(std::vector<DiscretePMF> factors)
    : factors_(std::move(factors)) {}

std::shared_ptr<ProductReference> ProductReference::uniform(const FullConditionalTarget& target) {
  std::vector<DiscretePMF> factors;
  factors.reserve(target.dimension());
  for (std::size_t m = 0; m < target.dimension(); ++m) {
    std::vector<double> w(target.support_size(m), 1.0);
    factors.push_back(DiscretePMF::from_weights(w));
  }
  return std::make_shared<ProductReference>(std::move(factors));
}

AugmentedState ProductReference::sample(Rng& rng) const {
  AugmentedState s;
  s.x.resize(factors_.size());
  s.u.resize(factors_.size());
  for (std::size_t m = 0; m < factors_.size(); ++m) {
    s.x[m] = static_cast<int>(factors_[m].sample(rng));
    s.u[m] = uniform01(rng);
  }
  return s;
}

double ProductReference::log_density(const AugmentedState& state) const {
  double lp = 0.0;
  for (std::size_t m = 0; m < factors_.size(); ++m) {
    if (!(state.u[m] >= 0.0 && state.u[m] < 1.0)) return -std::numeric_limits<double>::infinity();
    lp += std::log(factors_[m].prob(static_cast<std::size_t>(state.x[m])));
  }
  return lp;
}

MadMixFlow::MadMixFlow(TargetPtr target, ReferencePtr reference, std::size_t n_flow,
                       ShiftParam xi)
    : target_(std::move(target)), reference_(std::move(reference)), n_flow_(n_flow), xi_(xi) {
  if (!target_ || !reference_) throw MadmixError("MadMixFlow: null target or reference");
  if (n_flow_ < 1) throw MadmixError("MadMixFlow: flow length must be at least 1");
  if (xi_.is_low_order_rational()) {
    throw MadmixError("MadMixFlow: shift is a low-order rational (non-ergodic rotation)");
  }
}

double MadMixFlow::log_density(const AugmentedState& state) const {
  AugmentedState s = state;
  DiscretePMF scratch;
  std::vector<double> terms(n_flow_);
  terms[0] = reference_->log_density(s);
  double cumulative = 0.0;
  for (std::size_t n = 1; n < n_flow_; ++n) {
    cumulative += mad_inverse_inplace(s, *target_, xi_, scratch);
    terms[n] = reference_->log_density(s) + cumulative;
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(n_flow_));
}

double MadMixFlow::log_density_direct(const AugmentedState& state) const {
  DiscretePMF scratch;
  std::vector<double> terms(n_flow_);
  for (std::size_t n = 0; n < n_flow_; ++n) {
    AugmentedState s = state;
    double log_j = 0.0;
    for (std::size_t j = 0; j < n; ++j) log_j += mad_inverse_inplace(s, *target_, xi_, scratch);
    terms[n] = reference_->log_density(s) + log_j;
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(n_flow_));
}

AugmentedState MadMixFlow::sample_component(Rng& rng, std::size_t n) const {
  AugmentedState s = reference_->sample(rng);
  DiscretePMF scratch;
  for (std::size_t j = 0; j < n; ++j) mad_forward_inplace(s, *target_, xi_, scratch);
  return s;
}

AugmentedState MadMixFlow::sample(Rng& rng) const {
  const std::size_t n = static_cast<std::size_t>(rng() % n_flow_);
  return sample_component(rng, n);
}

AugmentedState MadMixFlow::sample(std::uint64_t seed) const {
  Rng rng = make_rng(seed, 0x5a4d);
  return sample(rng);
}

Estimate elbo(const MadMixFlow& flow, const LogMassFn& log_target, std::size_t n_samples,
              std::uint64_t seed) {
  if (n_samples < 2) throw MadmixError("elbo: need at least two samples");
  Rng rng = make_rng(seed, 0xe1b0);
  std::vector<double> values(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const AugmentedState s = flow.sample(rng);
    values[i] = log_target(s.x) - flow.log_density(s);
  }
  return mean_and_se(values);
}

Estimate elbo(const MadMixFlow& flow, std::size_t n_samples, std::uint64_t seed) {
  const FullConditionalTarget& t = flow.target();
  if (!t.has_log_mass()) throw MadmixError("elbo: target has no tractable log-mass");
  return elbo(
      flow, [&t](std::span<const int> x) { return t.unnormalized_log_mass(x); }, n_samples, seed);
}

MarginalPmf exact_marginal_pmf(const MadMixFlow& flow, std::size_t n_u_samples,
                               std::uint64_t seed, std::size_t max_states) {
  const FullConditionalTarget& t = flow.target();
  const std::size_t n_states = state_space_size(t);
  if (n_states > max_states) throw MadmixError("exact_marginal_pmf: state space too large");
  if (n_u_samples < 1) throw MadmixError("exact_marginal_pmf: need at least one u draw");
  Rng rng = make_rng(seed, 0x9af1);
  MarginalPmf out;
  out.raw.assign(n_states, 0.0);
  AugmentedState s;
  s.u.resize(t.dimension());
  for (std::size_t idx = 0; idx < n_states; ++idx) {
    s.x = unflatten_state(t, idx);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_u_samples; ++i) {
      for (double& u : s.u) u = uniform01(rng);
      acc += std::exp(flow.log_density(s));
    }
    out.raw[idx] = acc / static_cast<double>(n_u_samples);
    out.total_mass += out.raw[idx];
  }
  // States never reached by the flow get the smallest positive mass so the
  // result stays a valid (strictly positive) PMF.
  std::vector<double> w = out.raw;
  for (double& v : w) v = std::max(v, std::numeric_limits<double>::min());
  out.pmf = DiscretePMF::from_weights(w);
  return out;
}

WeightedPair::WeightedPair(MadMixFlow f0, MadMixFlow f1, double weight)
    : flow0(std::move(f0)), flow1(std::move(f1)), w(weight) {
  if (flow0.target_ptr() != flow1.target_ptr()) {
    throw MadmixError("WeightedPair: component flows must share a target");
  }
  if (flow0.flow_length() != flow1.flow_length()) {
    throw MadmixError("WeightedPair: component flows must share N");
  }
  if (!(w > 0.0 && w < 1.0)) throw MadmixError("WeightedPair: weight must lie in (0, 1)");
}

double WeightedPair::log_density(const AugmentedState& state) const {
  const double a = std::log(w) + flow0.log_density(state);
  const double b = std::log1p(-w) + flow1.log_density(state);
  const double terms[] = {a, b};
  return log_sum_exp(terms);
}

WeightObjective::WeightObjective(const WeightedPair& pair, const LogMassFn& log_target,
                                 std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw MadmixError("WeightObjective: need at least two samples");
  Rng rng = make_rng(seed, 0x3e16);
  auto fill = [&](const MadMixFlow& source, std::vector<Draw>& out) {
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const AugmentedState s = source.sample(rng);
      out.push_back({pair.flow0.log_density(s), pair.flow1.log_density(s), log_target(s.x)});
    }
  };
  fill(pair.flow0, from0_);
  fill(pair.flow1, from1_);
}

double WeightObjective::log_mix(const Draw& d, double alpha) const {
  const double terms[] = {std::log(alpha) + d.log_q0, std::log1p(-alpha) + d.log_q1};
  return log_sum_exp(terms);
}

Estimate WeightObjective::kl(double alpha) const {
  std::vector<double> f0, f1;
  f0.reserve(from0_.size());
  f1.reserve(from1_.size());
  for (const Draw& d : from0_) f0.push_back(log_mix(d, alpha) - d.log_target);
  for (const Draw& d : from1_) f1.push_back(log_mix(d, alpha) - d.log_target);
  const Estimate e0 = mean_and_se(f0);
  const Estimate e1 = mean_and_se(f1);
  return {alpha * e0.value + (1.0 - alpha) * e1.value,
          std::hypot(alpha * e0.std_error, (1.0 - alpha) * e1.std_error)};
}

Estimate WeightObjective::gradient(double alpha) const {
  std::vector<double> f0, f1;
  for (const Draw& d : from0_) f0.push_back(log_mix(d, alpha) - d.log_target);
  for (const Draw& d : from1_) f1.push_back(log_mix(d, alpha) - d.log_target);
  const Estimate e0 = mean_and_se(f0);
  const Estimate e1 = mean_and_se(f1);
  return {e0.value - e1.value, std::hypot(e0.std_error, e1.std_error)};
}

double WeightObjective::finite_difference_gap_se(double alpha) const {
  // d/dalpha log mix = (q0 - q1) / mix
  auto dlog = [&](const Draw& d) {
    const double lm = log_mix(d, alpha);
    return std::exp(d.log_q0 - lm) - std::exp(d.log_q1 - lm);
  };
  std::vector<double> g0, g1;
  for (const Draw& d : from0_) g0.push_back(dlog(d));
  for (const Draw& d : from1_) g1.push_back(dlog(d));
  const Estimate e0 = mean_and_se(g0);
  const Estimate e1 = mean_and_se(g1);
  return std::hypot(alpha * e0.std_error, (1.0 - alpha) * e1.std_error);
}

WeightFit optimize_weight(const WeightedPair& pair, const LogMassFn& log_target,
                          const WeightOptions& options) {
  if (!(options.clip > 0.0 && options.clip < 0.5)) throw MadmixError("optimize_weight: bad clip");
  if (!(options.step_size > 0.0)) throw MadmixError("optimize_weight: step size must be positive");
  const double lo = options.clip;
  const double hi = 1.0 - options.clip;
  WeightFit fit;
  fit.alpha = std::clamp(options.initial, lo, hi);
  fit.trace.push_back(fit.alpha);
  int last_wall = 0;
  std::size_t wall_flips = 0;
  for (std::size_t it = 0; it < options.n_iters; ++it) {
    const WeightObjective objective(pair, log_target, options.n_samples,
                                    mix_seed(options.seed + 0x1000 * (it + 1)));
    const Estimate g = objective.gradient(fit.alpha);
    ++fit.iterations;
    if (!std::isfinite(g.value)) {
      fit.diverged = true;
      break;
    }
    const double proposal = fit.alpha - options.step_size * g.value;
    fit.alpha = std::clamp(proposal, lo, hi);
    fit.trace.push_back(fit.alpha);
    const int wall = proposal <= lo ? -1 : (proposal >= hi ? 1 : 0);
    if (wall != 0 && last_wall != 0 && wall != last_wall) ++wall_flips;
    if (wall != 0) last_wall = wall;
  }
  // Bouncing between the two clip walls means the step overshoots.
  if (wall_flips >= 3) fit.diverged = true;
  return fit;
}

WeightFit optimize_weight(const WeightedPair& pair, const WeightOptions& options) {
  const FullConditionalTarget& t = pair.flow0.target();
  if (!t.has_log_mass()) throw MadmixError("optimize_weight: target has no tractable log-mass");
  return optimize_weight(
      pair, [&t](std::span<const int> x) { return t.unnormalized_log_mass(x); }, options);
}

}  // namespace madmix
