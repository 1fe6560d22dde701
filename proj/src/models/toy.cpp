#include "madmix/models/toy.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace madmix {

ToyTarget::ToyTarget(std::vector<std::size_t> shape, std::vector<double> table)
    : shape_(std::move(shape)) {
  if (shape_.empty()) throw MadmixError("ToyTarget: empty shape");
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (table.size() != n) throw MadmixError("ToyTarget: table size does not match shape");
  joint_ = DiscretePMF::from_weights(table);
  strides_.assign(shape_.size(), 1);
  for (std::size_t j = shape_.size() - 1; j-- > 0;) strides_[j] = strides_[j + 1] * shape_[j + 1];
  log_table_.resize(n);
  for (std::size_t i = 0; i < n; ++i) log_table_[i] = std::log(joint_.unchecked_prob(i));
}

ToyTarget ToyTarget::random(std::vector<std::size_t> shape, std::uint64_t seed, double floor) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  Rng rng = make_rng(seed, 0x70e1);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (double& v : w) total += (v = expo(rng));
  for (double& v : w) v = std::max(v / total, floor);
  return ToyTarget(std::move(shape), std::move(w));
}

DiscretePMF ToyTarget::conditional(std::size_t m, std::span<const int> x) const {
  DiscretePMF out;
  conditional_into(m, x, out);
  return out;
}

void ToyTarget::conditional_into(std::size_t m, std::span<const int> x, DiscretePMF& out) const {
  std::size_t base = 0;
  for (std::size_t j = 0; j < shape_.size(); ++j) {
    if (j != m) base += static_cast<std::size_t>(x[j]) * strides_[j];
  }
  const std::size_t k = shape_[m];
  // Small fixed buffer keeps the hot path allocation-free for the toy sizes.
  double buf[64];
  std::vector<double> heap;
  double* w = buf;
  if (k > 64) {
    heap.resize(k);
    w = heap.data();
  }
  for (std::size_t a = 0; a < k; ++a) w[a] = joint_.unchecked_prob(base + a * strides_[m]);
  out.assign_weights(std::span<const double>(w, k));
}

double ToyTarget::unnormalized_log_mass(std::span<const int> x) const {
  std::size_t idx = 0;
  for (std::size_t j = 0; j < shape_.size(); ++j) idx += static_cast<std::size_t>(x[j]) * strides_[j];
  return log_table_[idx];
}

std::vector<std::size_t> toy_shape(int dimension) {
  switch (dimension) {
    case 1: return {10};
    case 2: return {4, 5};
    case 3: return {10, 10, 10};
    default: throw MadmixError("toy_shape: dimension must be 1, 2 or 3");
  }
}

}  // namespace madmix
