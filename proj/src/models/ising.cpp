#include "madmix/models/ising.hpp"

#include <cmath>

#include "madmix/stats.hpp"

namespace madmix {

IsingChain::IsingChain(std::size_t n_particles, double beta) : n_(n_particles), beta_(beta) {
  if (n_ < 2) throw MadmixError("IsingChain: need at least two particles");
  if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw MadmixError("IsingChain: beta must be >= 0");
}

double IsingChain::prob_up(std::size_t m, std::span<const int> x) const {
  int h = 0;
  if (m > 0) h += spin(x[m - 1]);
  if (m + 1 < n_) h += spin(x[m + 1]);
  // exp(b h) / (2 cosh(b h))
  return sigmoid(2.0 * beta_ * h);
}

DiscretePMF IsingChain::conditional(std::size_t m, std::span<const int> x) const {
  DiscretePMF out;
  out.assign_binary(prob_up(m, x));
  return out;
}

void IsingChain::conditional_into(std::size_t m, std::span<const int> x, DiscretePMF& out) const {
  out.assign_binary(prob_up(m, x));
}

double IsingChain::unnormalized_log_mass(std::span<const int> x) const {
  int acc = 0;
  for (std::size_t m = 0; m + 1 < n_; ++m) acc += spin(x[m]) * spin(x[m + 1]);
  return beta_ * acc;
}

std::vector<double> IsingChain::mean_field_expectation(std::size_t m,
                                                       std::span<const DiscretePMF> factors) const {
  auto mean_spin = [&](std::size_t j) { return 2.0 * factors[j].unchecked_prob(1) - 1.0; };
  double h = 0.0;
  if (m > 0) h += mean_spin(m - 1);
  if (m + 1 < n_) h += mean_spin(m + 1);
  return {-beta_ * h, beta_ * h};
}

double IsingChain::mean_field_expected_log_mass(std::span<const DiscretePMF> factors) const {
  double acc = 0.0;
  for (std::size_t m = 0; m + 1 < n_; ++m) {
    acc += (2.0 * factors[m].unchecked_prob(1) - 1.0) * (2.0 * factors[m + 1].unchecked_prob(1) - 1.0);
  }
  return beta_ * acc;
}

DiscretePMF ising_conditional(std::size_t m, std::span<const int> x, double beta) {
  return IsingChain(x.size(), beta).conditional(m, x);
}

DiscretePMF ising_exact_pmf(std::size_t n_particles, double beta) {
  if (n_particles > 20) throw MadmixError("ising_exact_pmf: at most 20 particles");
  return enumerate_pmf(IsingChain(n_particles, beta));
}

double ising_log_partition(std::size_t n_particles, double beta) {
  return std::log(2.0) + static_cast<double>(n_particles - 1) * std::log(2.0 * std::cosh(beta));
}

}  // namespace madmix
