#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "madmix/random.hpp"

namespace madmix {

/// Thrown for violated preconditions on states, PMFs and targets.
class MadmixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite, strictly positive, normalized probability vector with its CDF.
///
/// Atoms are 0-based. `cdf(l)` is the mass of atoms `0..l-1`, so `cdf(0) == 0`
/// and `cdf(size()) == 1` exactly. `quantile(p)` returns the smallest atom `a`
/// with `cdf(a + 1) > p`.
class DiscretePMF {
 public:
  DiscretePMF() = default;

  /// Probabilities must be positive and sum to one within 1e-10; they are
  /// renormalized exactly.
  explicit DiscretePMF(std::vector<double> probs);

  /// Any positive finite weights; normalized.
  static DiscretePMF from_weights(std::span<const double> weights);
  static DiscretePMF from_log_weights(std::span<const double> log_weights);

  /// Reuses storage; same contract as from_weights.
  void assign_weights(std::span<const double> weights);
  /// Fast path for two-atom laws: P(atom 1) = p1, p1 in (0, 1).
  void assign_binary(double p1);

  std::size_t size() const { return probs_.size(); }
  double prob(std::size_t atom) const { return probs_.at(atom); }
  double log_prob(std::size_t atom) const;
  double cdf(std::size_t l) const;
  std::size_t quantile(double p) const;
  std::span<const double> probs() const { return probs_; }

  std::size_t sample(Rng& rng) const { return quantile(uniform01(rng)); }

  double unchecked_prob(std::size_t atom) const { return probs_[atom]; }
  double unchecked_cdf(std::size_t l) const { return l == 0 ? 0.0 : cdf_[l - 1]; }

 private:
  void finalize(double total);

  std::vector<double> probs_;
  std::vector<double> cdf_;  // cdf_[a] = F(a + 1); last entry pinned to 1
};

/// Discrete coordinates paired with their auxiliary uniforms.
struct AugmentedState {
  std::vector<int> x;
  std::vector<double> u;

  friend bool operator==(const AugmentedState&, const AugmentedState&) = default;
};

/// A discrete target accessed through its full conditionals.
class FullConditionalTarget {
 public:
  virtual ~FullConditionalTarget() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::size_t support_size(std::size_t m) const = 0;

  /// Law of coordinate m given every other coordinate of x; must not read x[m].
  virtual DiscretePMF conditional(std::size_t m, std::span<const int> x) const = 0;

  /// Allocation-free variant used by the flow inner loops.
  virtual void conditional_into(std::size_t m, std::span<const int> x, DiscretePMF& out) const {
    out = conditional(m, x);
  }

  virtual bool has_log_mass() const { return false; }
  virtual double unnormalized_log_mass(std::span<const int> x) const;

  /// E_{q_{-m}}[log p(x_m = a, x_{-m})] for each atom a under independent
  /// factors q, up to an a-independent constant. Targets with local structure
  /// override this; the default enumerates the remaining coordinates.
  virtual std::vector<double> mean_field_expectation(std::size_t m,
                                                     std::span<const DiscretePMF> factors) const;

  /// E_q[log p(x)] under independent factors; default enumerates.
  virtual double mean_field_expected_log_mass(std::span<const DiscretePMF> factors) const;
};

using TargetPtr = std::shared_ptr<const FullConditionalTarget>;

/// F(l) for a 0..K index (mass of the first l atoms).
double cdf_eval(const DiscretePMF& pmf, std::size_t l);
std::size_t quantile(const DiscretePMF& pmf, double p);

/// Product of support sizes, saturating at SIZE_MAX.
std::size_t state_space_size(const FullConditionalTarget& target);

/// Mixed-radix index with coordinate 0 most significant.
std::size_t flatten_state(const FullConditionalTarget& target, std::span<const int> x);
std::vector<int> unflatten_state(const FullConditionalTarget& target, std::size_t index);

/// Exact flattened PMF from the unnormalized log-mass; requires an enumerable
/// state space (at most `max_states`).
DiscretePMF enumerate_pmf(const FullConditionalTarget& target, std::size_t max_states = 1u << 22);

/// Throws MadmixError when `state` is outside the target's support or has a
/// uniform outside [0, 1).
void check_state(const FullConditionalTarget& target, const AugmentedState& state);

/// Maps u == 1 (and anything rounding there) to the largest double below 1.
double clamp_unit(double u);

struct TargetReport {
  std::size_t states_checked = 0;
  std::size_t comparisons = 0;
  /// Largest |log pi_m(a) - log pi_m(b) - (log p(x[m<-a]) - log p(x[m<-b]))|.
  double max_deviation = 0.0;
  /// Largest change in conditional(m, x) when only x[m] changes.
  double max_self_dependence = 0.0;
  std::vector<std::string> failures;

  bool ok(double tol = 1e-9) const {
    return failures.empty() && max_deviation < tol && max_self_dependence < tol;
  }
};

/// Checks the conditional/log-mass consistency identity on random states.
TargetReport validate_target(const FullConditionalTarget& target, std::size_t n_states = 64,
                             std::uint64_t seed = 0);

}  // namespace madmix
