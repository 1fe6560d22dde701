#pragma once

#include <numbers>
#include <utility>

#include "madmix/discrete_core.hpp"

namespace madmix {

/// Vertical shift applied in rho-space on every coordinate visit.
struct ShiftParam {
  double xi = std::numbers::pi / 16.0;

  constexpr ShiftParam() = default;
  constexpr explicit ShiftParam(double value) : xi(value) {}

  /// True when xi mod 1 is within 1e-12 of 0, 1/2, 1/3, 2/3, 1/4 or 3/4:
  /// such shifts give short periodic orbits instead of an ergodic rotation.
  bool is_low_order_rational() const;

  ShiftParam inverse() const { return ShiftParam(-xi); }
};

struct FlowResult {
  AugmentedState state;
  /// log |d u' / d u| of the pass that produced `state`.
  double log_jacobian = 0.0;
};

/// Step (1): rho = F(x) + u * pi(x) for 0-based atom x.
double u_to_rho(std::size_t atom, double u, const DiscretePMF& pmf);

/// Step (2): (rho + xi) mod 1, kept inside [0, 1).
double shift_rho(double rho, ShiftParam xi);

/// Step (3): x' = Q(rho), u' = (rho - F(x')) / pi(x').
std::pair<std::size_t, double> rho_to_xu(double rho_tilde, const DiscretePMF& pmf);

/// One sequential pass T_M o ... o T_1; conditional m sees the already
/// updated coordinates 0..m-1.
FlowResult mad_forward(const AugmentedState& state, const FullConditionalTarget& target,
                       ShiftParam xi);

/// Exact inverse: coordinates visited M..1 with shift -xi. The returned
/// log-Jacobian is that of the inverse pass.
FlowResult mad_inverse(const AugmentedState& state, const FullConditionalTarget& target,
                       ShiftParam xi);

/// In-place versions without validation; `scratch` is reused between calls.
double mad_forward_inplace(AugmentedState& state, const FullConditionalTarget& target,
                           ShiftParam xi, DiscretePMF& scratch);
double mad_inverse_inplace(AugmentedState& state, const FullConditionalTarget& target,
                           ShiftParam xi, DiscretePMF& scratch);

}  // namespace madmix
