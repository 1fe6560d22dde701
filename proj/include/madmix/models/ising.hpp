#pragma once

#include "madmix/discrete_core.hpp"

namespace madmix {

/// Open Ising chain log pi(s) = beta sum_m s_m s_{m+1} - log Z with spins
/// s in {-1, +1}; atom 0 is spin -1 and atom 1 is spin +1.
class IsingChain final : public FullConditionalTarget {
 public:
  IsingChain(std::size_t n_particles, double beta);

  std::size_t dimension() const override { return n_; }
  std::size_t support_size(std::size_t) const override { return 2; }
  DiscretePMF conditional(std::size_t m, std::span<const int> x) const override;
  void conditional_into(std::size_t m, std::span<const int> x, DiscretePMF& out) const override;
  bool has_log_mass() const override { return true; }
  double unnormalized_log_mass(std::span<const int> x) const override;

  std::vector<double> mean_field_expectation(std::size_t m,
                                             std::span<const DiscretePMF> factors) const override;
  double mean_field_expected_log_mass(std::span<const DiscretePMF> factors) const override;

  double beta() const { return beta_; }
  /// P(s_m = +1 | neighbours).
  double prob_up(std::size_t m, std::span<const int> x) const;

 private:
  std::size_t n_;
  double beta_;
};

inline int spin(int atom) { return 2 * atom - 1; }

/// Conditional of particle m (0-based) given the chain state.
DiscretePMF ising_conditional(std::size_t m, std::span<const int> x, double beta);

/// Exact PMF over 2^M states, flattened in ascending binary order with
/// particle 0 as the most significant bit (bit 1 = spin +1).
DiscretePMF ising_exact_pmf(std::size_t n_particles, double beta);

/// log Z by transfer matrix: Z = 2 (2 cosh beta)^(M-1).
double ising_log_partition(std::size_t n_particles, double beta);

}  // namespace madmix
