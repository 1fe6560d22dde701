#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "madmix/discrete_core.hpp"
#include "madmix/mad_map.hpp"
#include "madmix/stats.hpp"

namespace madmix {

/// Reference distribution q_0 on the augmented space X x [0,1]^M.
class Reference {
 public:
  virtual ~Reference() = default;
  virtual AugmentedState sample(Rng& rng) const = 0;
  virtual double log_density(const AugmentedState& state) const = 0;
};

using ReferencePtr = std::shared_ptr<const Reference>;

/// Independent per-coordinate PMFs times uniforms on [0,1)^M.
class ProductReference final : public Reference {
 public:
  explicit ProductReference(std::vector<DiscretePMF> factors);

  /// Uniform over the product support of `target`.
  static std::shared_ptr<ProductReference> uniform(const FullConditionalTarget& target);

  AugmentedState sample(Rng& rng) const override;
  double log_density(const AugmentedState& state) const override;

  const std::vector<DiscretePMF>& factors() const { return factors_; }

 private:
  std::vector<DiscretePMF> factors_;
};

using LogMassFn = std::function<double(std::span<const int>)>;

/// Uniform mixture of N repeated MAD passes applied to a reference.
class MadMixFlow {
 public:
  MadMixFlow(TargetPtr target, ReferencePtr reference, std::size_t n_flow,
             ShiftParam xi = ShiftParam());

  /// log q_N(x, u) by N-1 inverse passes with cached cumulative Jacobians.
  double log_density(const AugmentedState& state) const;

  /// Same quantity, recomputing each orbit term from scratch (O(N^2)).
  double log_density_direct(const AugmentedState& state) const;

  AugmentedState sample(Rng& rng) const;
  AugmentedState sample(std::uint64_t seed) const;

  /// Draw from q_0 and push through exactly `n` forward passes.
  AugmentedState sample_component(Rng& rng, std::size_t n) const;

  const FullConditionalTarget& target() const { return *target_; }
  const TargetPtr& target_ptr() const { return target_; }
  const Reference& reference() const { return *reference_; }
  std::size_t flow_length() const { return n_flow_; }
  ShiftParam shift() const { return xi_; }

 private:
  TargetPtr target_;
  ReferencePtr reference_;
  std::size_t n_flow_;
  ShiftParam xi_;
};

/// E_q[log p~(x) - log q_N(x, u)] with its standard error.
Estimate elbo(const MadMixFlow& flow, const LogMassFn& log_target, std::size_t n_samples,
              std::uint64_t seed);
/// Uses the target's unnormalized log-mass.
Estimate elbo(const MadMixFlow& flow, std::size_t n_samples, std::uint64_t seed);

struct MarginalPmf {
  DiscretePMF pmf;         ///< renormalized flattened marginal q_N(x)
  std::vector<double> raw; ///< per-state Monte Carlo averages before renormalization
  double total_mass = 0.0; ///< sum of `raw`
};

/// q_N(x) for every x, averaging q_N(x, u_i) over u_i ~ Unif[0,1]^M.
MarginalPmf exact_marginal_pmf(const MadMixFlow& flow, std::size_t n_u_samples,
                               std::uint64_t seed, std::size_t max_states = 1'000'000);

/// Two flows on the same target and length mixed as w q_{N,0} + (1 - w) q_{N,1}.
struct WeightedPair {
  WeightedPair(MadMixFlow f0, MadMixFlow f1, double weight);

  double log_density(const AugmentedState& state) const;

  MadMixFlow flow0;
  MadMixFlow flow1;
  double w;
};

/// Fixed draws from both components with their densities cached, so the KL
/// objective and its derivative can be evaluated at any alpha with common
/// random numbers.
class WeightObjective {
 public:
  WeightObjective(const WeightedPair& pair, const LogMassFn& log_target, std::size_t n_samples,
                  std::uint64_t seed);

  /// KL(alpha q0 + (1 - alpha) q1 || pi) up to the additive log Z.
  Estimate kl(double alpha) const;
  /// E_{q0}[log(mix / pi)] - E_{q1}[log(mix / pi)].
  Estimate gradient(double alpha) const;
  /// Standard error of (central difference of kl) - gradient, from the
  /// per-sample terms of alpha E0[d f] + (1 - alpha) E1[d f].
  double finite_difference_gap_se(double alpha) const;

 private:
  struct Draw {
    double log_q0;
    double log_q1;
    double log_target;
  };
  double log_mix(const Draw& d, double alpha) const;

  std::vector<Draw> from0_;
  std::vector<Draw> from1_;
};

struct WeightFit {
  double alpha = 0.5;
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool diverged = false;
};

struct WeightOptions {
  double step_size = 0.05;
  std::size_t n_iters = 500;
  std::size_t n_samples = 64;
  double initial = 0.5;
  double clip = 1e-3;
  std::uint64_t seed = 0;
};

/// Projected stochastic gradient descent on alpha in [clip, 1 - clip], with
/// fresh samples every iteration.
WeightFit optimize_weight(const WeightedPair& pair, const LogMassFn& log_target,
                          const WeightOptions& options);
WeightFit optimize_weight(const WeightedPair& pair, const WeightOptions& options);

}  // namespace madmix
