#pragma once

#include <cstdint>
#include <vector>

#include "madmix/discrete_core.hpp"

namespace madmix {

/// Joint PMF stored as a dense table over {0..K_1-1} x ... x {0..K_M-1},
/// flattened with coordinate 0 most significant.
class ToyTarget final : public FullConditionalTarget {
 public:
  ToyTarget(std::vector<std::size_t> shape, std::vector<double> table);

  /// Symmetric Dirichlet(1) draw, floored at `floor` per entry then renormalized.
  static ToyTarget random(std::vector<std::size_t> shape, std::uint64_t seed,
                          double floor = 1e-6);

  std::size_t dimension() const override { return shape_.size(); }
  std::size_t support_size(std::size_t m) const override { return shape_.at(m); }
  DiscretePMF conditional(std::size_t m, std::span<const int> x) const override;
  void conditional_into(std::size_t m, std::span<const int> x, DiscretePMF& out) const override;
  bool has_log_mass() const override { return true; }
  double unnormalized_log_mass(std::span<const int> x) const override;

  const DiscretePMF& joint() const { return joint_; }
  const std::vector<std::size_t>& shape() const { return shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<std::size_t> strides_;
  DiscretePMF joint_;
  std::vector<double> log_table_;
};

/// Default toy shapes: {10}, {4, 5}, {10, 10, 10}.
std::vector<std::size_t> toy_shape(int dimension);

}  // namespace madmix
