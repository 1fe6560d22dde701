#include "madmix/discrete_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "madmix/stats.hpp"

namespace madmix {

namespace {

constexpr double kBelowOne = 0x1.fffffffffffffp-1;

void require_enumerable(const FullConditionalTarget& target, std::size_t max_states,
                        const char* what) {
  const std::size_t n = state_space_size(target);
  if (n > max_states) {
    std::ostringstream msg;
    msg << what << ": state space too large (" << n << " > " << max_states << ")";
    throw MadmixError(msg.str());
  }
}

}  // namespace

DiscretePMF::DiscretePMF(std::vector<double> probs) : probs_(std::move(probs)) {
  double total = 0.0;
  for (double p : probs_) total += p;
  if (!(std::abs(total - 1.0) <= 1e-10)) {
    throw MadmixError("DiscretePMF: probabilities must sum to 1");
  }
  finalize(total);
}

DiscretePMF DiscretePMF::from_weights(std::span<const double> weights) {
  DiscretePMF pmf;
  pmf.assign_weights(weights);
  return pmf;
}

DiscretePMF DiscretePMF::from_log_weights(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) throw MadmixError("DiscretePMF: non-finite log weights");
  std::vector<double> w(log_weights.size());
  // Relative weights are floored at exp(-700) so underflow never produces a
  // zero-mass atom.
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(std::max(log_weights[i] - top, -700.0));
  }
  return from_weights(w);
}

void DiscretePMF::assign_weights(std::span<const double> weights) {
  probs_.assign(weights.begin(), weights.end());
  double total = 0.0;
  for (double w : probs_) total += w;
  finalize(total);
}

void DiscretePMF::assign_binary(double p1) {
  if (!(p1 > 0.0 && p1 < 1.0)) throw MadmixError("DiscretePMF: zero-mass atom");
  probs_.resize(2);
  cdf_.resize(2);
  probs_[0] = 1.0 - p1;
  probs_[1] = p1;
  cdf_[0] = probs_[0];
  cdf_[1] = 1.0;
}

void DiscretePMF::finalize(double total) {
  if (probs_.empty()) throw MadmixError("DiscretePMF: empty support");
  if (!(total > 0.0) || !std::isfinite(total)) throw MadmixError("DiscretePMF: invalid total mass");
  cdf_.resize(probs_.size());
  double acc = 0.0;
  for (std::size_t a = 0; a < probs_.size(); ++a) {
    const double p = probs_[a] / total;
    if (!(p > 0.0) || !std::isfinite(p)) {
      std::ostringstream msg;
      msg << "DiscretePMF: atom " << a << " has non-positive mass";
      throw MadmixError(msg.str());
    }
    probs_[a] = p;
    acc += p;
    cdf_[a] = acc;
  }
  // Atoms lighter than one ulp of the running sum leave the stored CDF flat;
  // quantile() never resolves to them.
  cdf_.back() = 1.0;
}

double DiscretePMF::log_prob(std::size_t atom) const { return std::log(prob(atom)); }

double DiscretePMF::cdf(std::size_t l) const {
  if (l > probs_.size()) throw MadmixError("DiscretePMF::cdf: index out of range");
  return unchecked_cdf(l);
}

std::size_t DiscretePMF::quantile(double p) const {
  if (!(p >= 0.0 && p < 1.0)) throw MadmixError("DiscretePMF::quantile: p must lie in [0, 1)");
  if (cdf_.size() == 2) return p < cdf_[0] ? 0 : 1;
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), p);
  return static_cast<std::size_t>(it - cdf_.begin());
}

double FullConditionalTarget::unnormalized_log_mass(std::span<const int>) const {
  throw MadmixError("target does not expose an unnormalized log-mass");
}

std::vector<double> FullConditionalTarget::mean_field_expectation(
    std::size_t m, std::span<const DiscretePMF> factors) const {
  require_enumerable(*this, 1u << 22, "mean_field_expectation");
  const std::size_t dim = dimension();
  const std::size_t k_m = support_size(m);
  std::vector<double> out(k_m, 0.0);
  std::vector<int> x(dim, 0);
  // Odometer over all coordinates except m.
  while (true) {
    double weight = 1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      if (j != m) weight *= factors[j].unchecked_prob(static_cast<std::size_t>(x[j]));
    }
    for (std::size_t a = 0; a < k_m; ++a) {
      x[m] = static_cast<int>(a);
      out[a] += weight * unnormalized_log_mass(x);
    }
    x[m] = 0;
    std::size_t j = 0;
    for (; j < dim; ++j) {
      if (j == m) continue;
      if (++x[j] < static_cast<int>(support_size(j))) break;
      x[j] = 0;
    }
    if (j == dim) break;
  }
  return out;
}

double FullConditionalTarget::mean_field_expected_log_mass(
    std::span<const DiscretePMF> factors) const {
  require_enumerable(*this, 1u << 22, "mean_field_expected_log_mass");
  const std::size_t n = state_space_size(*this);
  double total = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::vector<int> x = unflatten_state(*this, idx);
    double weight = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      weight *= factors[j].unchecked_prob(static_cast<std::size_t>(x[j]));
    }
    total += weight * unnormalized_log_mass(x);
  }
  return total;
}

double cdf_eval(const DiscretePMF& pmf, std::size_t l) { return pmf.cdf(l); }

std::size_t quantile(const DiscretePMF& pmf, double p) { return pmf.quantile(p); }

std::size_t state_space_size(const FullConditionalTarget& target) {
  std::size_t n = 1;
  for (std::size_t m = 0; m < target.dimension(); ++m) {
    const std::size_t k = target.support_size(m);
    if (k != 0 && n > std::numeric_limits<std::size_t>::max() / k) {
      return std::numeric_limits<std::size_t>::max();
    }
    n *= k;
  }
  return n;
}

std::size_t flatten_state(const FullConditionalTarget& target, std::span<const int> x) {
  std::size_t idx = 0;
  for (std::size_t m = 0; m < target.dimension(); ++m) {
    idx = idx * target.support_size(m) + static_cast<std::size_t>(x[m]);
  }
  return idx;
}

std::vector<int> unflatten_state(const FullConditionalTarget& target, std::size_t index) {
  const std::size_t dim = target.dimension();
  std::vector<int> x(dim, 0);
  for (std::size_t j = dim; j-- > 0;) {
    const std::size_t k = target.support_size(j);
    x[j] = static_cast<int>(index % k);
    index /= k;
  }
  return x;
}

DiscretePMF enumerate_pmf(const FullConditionalTarget& target, std::size_t max_states) {
  require_enumerable(target, max_states, "enumerate_pmf");
  const std::size_t n = state_space_size(target);
  std::vector<double> logs(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    logs[idx] = target.unnormalized_log_mass(unflatten_state(target, idx));
  }
  return DiscretePMF::from_log_weights(logs);
}

void check_state(const FullConditionalTarget& target, const AugmentedState& state) {
  const std::size_t dim = target.dimension();
  if (state.x.size() != dim || state.u.size() != dim) {
    throw MadmixError("state dimension does not match target");
  }
  for (std::size_t m = 0; m < dim; ++m) {
    if (state.x[m] < 0 || static_cast<std::size_t>(state.x[m]) >= target.support_size(m)) {
      throw MadmixError("state coordinate " + std::to_string(m) + " outside support");
    }
    if (!(state.u[m] >= 0.0 && state.u[m] < 1.0)) {
      throw MadmixError("uniform " + std::to_string(m) + " outside [0, 1)");
    }
  }
}

double clamp_unit(double u) {
  if (u >= 1.0) return kBelowOne;
  if (u < 0.0) return 0.0;
  return u;
}

TargetReport validate_target(const FullConditionalTarget& target, std::size_t n_states,
                             std::uint64_t seed) {
  TargetReport report;
  if (!target.has_log_mass()) {
    report.failures.emplace_back("target has no unnormalized log-mass");
    return report;
  }
  Rng rng = make_rng(seed, 0x7a11);
  const std::size_t dim = target.dimension();
  std::vector<int> x(dim);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t m = 0; m < dim; ++m) {
      x[m] = static_cast<int>(rng() % target.support_size(m));
    }
    ++report.states_checked;
    for (std::size_t m = 0; m < dim; ++m) {
      const std::size_t k = target.support_size(m);
      DiscretePMF pmf;
      try {
        pmf = target.conditional(m, x);
      } catch (const std::exception& e) {
        report.failures.emplace_back(e.what());
        continue;
      }
      if (pmf.size() != k) {
        report.failures.emplace_back("conditional size mismatch at coordinate " + std::to_string(m));
        continue;
      }
      const int saved = x[m];
      std::vector<double> lm(k);
      for (std::size_t a = 0; a < k; ++a) {
        x[m] = static_cast<int>(a);
        lm[a] = target.unnormalized_log_mass(x);
        const DiscretePMF other = target.conditional(m, x);
        for (std::size_t b = 0; b < k; ++b) {
          report.max_self_dependence =
              std::max(report.max_self_dependence, std::abs(other.prob(b) - pmf.prob(b)));
        }
      }
      x[m] = saved;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          const double lhs = pmf.log_prob(a) - pmf.log_prob(b);
          const double rhs = lm[a] - lm[b];
          report.max_deviation = std::max(report.max_deviation, std::abs(lhs - rhs));
          ++report.comparisons;
        }
      }
    }
  }
  return report;
}

}  // namespace madmix
