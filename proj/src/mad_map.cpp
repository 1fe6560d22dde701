#include "madmix/mad_map.hpp"

#include <cmath>

namespace madmix {

namespace {

// Error-free transformations: a + b == s + e exactly.
inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  const double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

// Single univariate update of coordinate m with shift `xi`; returns
// log pi(x) - log pi(x'). rho is carried as an unevaluated sum hi + lo so
// that atoms with tiny mass keep full relative precision in u, and atom
// widths are taken from the stored CDF so both directions see one partition.
inline double update_coordinate(AugmentedState& state, std::size_t m,
                                const FullConditionalTarget& target, double xi,
                                DiscretePMF& pmf) {
  target.conditional_into(m, state.x, pmf);
  const auto atom = static_cast<std::size_t>(state.x[m]);
  auto width = [&pmf](std::size_t a) { return pmf.unchecked_cdf(a + 1) - pmf.unchecked_cdf(a); };
  const double p_old = width(atom);

  const double prod = state.u[m] * p_old;
  double lo = std::fma(state.u[m], p_old, -prod);
  double hi, e;
  two_sum(pmf.unchecked_cdf(atom), prod, hi, e);
  lo += e;
  two_sum(hi, xi, hi, e);
  lo += e;
  double k = std::floor(hi);
  if (hi == k && lo < 0.0) k -= 1.0;
  two_sum(hi, -k, hi, e);
  lo += e;
  two_sum(hi, lo, hi, lo);

  const std::size_t last = pmf.size() - 1;
  std::size_t next = pmf.quantile(clamp_unit(std::max(hi, 0.0)));
  double offset = 0.0;
  for (;;) {
    two_sum(hi, -pmf.unchecked_cdf(next), offset, e);
    offset += e + lo;
    if (offset < 0.0 && next > 0) {
      --next;
    } else if (offset >= width(next) && next < last) {
      ++next;
    } else {
      break;
    }
  }
  const double p_new = width(next);
  state.x[m] = static_cast<int>(next);
  state.u[m] = clamp_unit(std::max(offset / p_new, 0.0));
  return std::log(p_old) - std::log(p_new);
}

}  // namespace

bool ShiftParam::is_low_order_rational() const {
  const double frac = xi - std::floor(xi);
  constexpr double kCandidates[] = {0.0, 1.0, 0.5, 1.0 / 3.0, 2.0 / 3.0, 0.25, 0.75};
  for (double c : kCandidates) {
    if (std::abs(frac - c) <= 1e-12) return true;
  }
  return false;
}

double u_to_rho(std::size_t atom, double u, const DiscretePMF& pmf) {
  if (atom >= pmf.size()) throw MadmixError("u_to_rho: atom outside support");
  if (!(u >= 0.0 && u < 1.0)) throw MadmixError("u_to_rho: u must lie in [0, 1)");
  return pmf.unchecked_cdf(atom) + u * pmf.unchecked_prob(atom);
}

double shift_rho(double rho, ShiftParam xi) {
  double r = rho + xi.xi;
  r -= std::floor(r);
  return clamp_unit(r);
}

std::pair<std::size_t, double> rho_to_xu(double rho_tilde, const DiscretePMF& pmf) {
  const std::size_t atom = pmf.quantile(rho_tilde);
  const double u = (rho_tilde - pmf.unchecked_cdf(atom)) / pmf.unchecked_prob(atom);
  return {atom, clamp_unit(u)};
}

double mad_forward_inplace(AugmentedState& state, const FullConditionalTarget& target,
                           ShiftParam xi, DiscretePMF& scratch) {
  double log_j = 0.0;
  const std::size_t dim = state.x.size();
  for (std::size_t m = 0; m < dim; ++m) {
    log_j += update_coordinate(state, m, target, xi.xi, scratch);
  }
  return log_j;
}

double mad_inverse_inplace(AugmentedState& state, const FullConditionalTarget& target,
                           ShiftParam xi, DiscretePMF& scratch) {
  double log_j = 0.0;
  for (std::size_t m = state.x.size(); m-- > 0;) {
    log_j += update_coordinate(state, m, target, -xi.xi, scratch);
  }
  return log_j;
}

FlowResult mad_forward(const AugmentedState& state, const FullConditionalTarget& target,
                       ShiftParam xi) {
  check_state(target, state);
  FlowResult out{state, 0.0};
  DiscretePMF scratch;
  out.log_jacobian = mad_forward_inplace(out.state, target, xi, scratch);
  return out;
}

FlowResult mad_inverse(const AugmentedState& state, const FullConditionalTarget& target,
                       ShiftParam xi) {
  check_state(target, state);
  FlowResult out{state, 0.0};
  DiscretePMF scratch;
  out.log_jacobian = mad_inverse_inplace(out.state, target, xi, scratch);
  return out;
}

}  // namespace madmix
