#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "madmix/mad_map.hpp"
#include "madmix/mixflow.hpp"
#include "madmix/models/ising.hpp"
#include "madmix/models/toy.hpp"

using namespace madmix;

namespace {

const ShiftParam kXi{std::numbers::pi / 16.0};

DiscretePMF four_atom() { return DiscretePMF({0.1, 0.4, 0.4, 0.1}); }

AugmentedState random_state(const FullConditionalTarget& t, Rng& rng) {
  return ProductReference::uniform(t)->sample(rng);
}

// Exact draw from the open chain with uniforms attached: neighbours agree
// with probability e^beta / (2 cosh beta).
AugmentedState ising_draw(std::size_t m, double beta, Rng& rng) {
  AugmentedState s;
  const double stay = 1.0 / (1.0 + std::exp(-2.0 * beta));
  s.x.push_back(uniform01(rng) < 0.5 ? 0 : 1);
  for (std::size_t i = 1; i < m; ++i) s.x.push_back(uniform01(rng) < stay ? s.x.back() : 1 - s.x.back());
  for (std::size_t i = 0; i < m; ++i) s.u.push_back(uniform01(rng));
  return s;
}

}  // namespace

TEST(MadMap, LiftToRhoExamples) {
  const DiscretePMF p = four_atom();
  EXPECT_NEAR(u_to_rho(1, 0.75, p), 0.4, 1e-15);
  EXPECT_NEAR(u_to_rho(2, 0.5, p), 0.7, 1e-15);
  EXPECT_NEAR(u_to_rho(0, 0.0, p), 0.0, 1e-15);
}

TEST(MadMap, ShiftWrapsModOne) {
  EXPECT_NEAR(shift_rho(0.4, ShiftParam(0.45)), 0.85, 1e-15);
  EXPECT_NEAR(shift_rho(0.9, ShiftParam(0.2)), 0.1, 1e-15);
  EXPECT_NEAR(shift_rho(0.1, ShiftParam(-0.2)), 0.9, 1e-15);
  EXPECT_EQ(shift_rho(0.3, ShiftParam(0.0)), 0.3);
  EXPECT_LT(shift_rho(std::nextafter(1.0, 0.0), ShiftParam(1e-18)), 1.0);
}

TEST(MadMap, QuantileStepExamples) {
  const DiscretePMF p = four_atom();
  auto [x, u] = rho_to_xu(0.85, p);
  EXPECT_EQ(x, 2u);
  EXPECT_NEAR(u, 0.875, 1e-12);
  std::tie(x, u) = rho_to_xu(0.05, p);
  EXPECT_EQ(x, 0u);
  EXPECT_NEAR(u, 0.5, 1e-12);
  std::tie(x, u) = rho_to_xu(0.0, p);
  EXPECT_EQ(x, 0u);
  EXPECT_EQ(u, 0.0);
}

TEST(MadMap, LiftAndQuantileAreInverse) {
  Rng rng = make_rng(3);
  const DiscretePMF p = four_atom();
  for (int i = 0; i < 10000; ++i) {
    const std::size_t a = static_cast<std::size_t>(uniform01(rng) * 4);
    const double u = uniform01(rng);
    const auto [b, v] = rho_to_xu(u_to_rho(a, u, p), p);
    ASSERT_EQ(a, b);
    ASSERT_NEAR(u, v, 1e-12);
  }
}

TEST(MadMap, SingleCoordinateStep) {
  const auto target = std::make_shared<ToyTarget>(std::vector<std::size_t>{4},
                                                  std::vector<double>{0.1, 0.4, 0.4, 0.1});
  const FlowResult r = mad_forward({{1}, {0.75}}, *target, ShiftParam(0.45));
  EXPECT_EQ(r.state.x[0], 2);
  EXPECT_NEAR(r.state.u[0], 0.875, 1e-12);
  EXPECT_NEAR(r.log_jacobian, 0.0, 1e-12);

  const FlowResult back = mad_inverse(r.state, *target, ShiftParam(0.45));
  EXPECT_EQ(back.state.x[0], 1);
  EXPECT_NEAR(back.state.u[0], 0.75, 1e-12);
  EXPECT_NEAR(back.log_jacobian, 0.0, 1e-12);
}

TEST(MadMap, JacobianIsRatioOfMasses) {
  const auto target = std::make_shared<ToyTarget>(std::vector<std::size_t>{4},
                                                  std::vector<double>{0.1, 0.4, 0.4, 0.1});
  // rho = 0.05 + 0.5 lands in atom 2: J = pi(0) / pi(2).
  const FlowResult r = mad_forward({{0}, {0.5}}, *target, ShiftParam(0.5));
  EXPECT_EQ(r.state.x[0], 2);
  EXPECT_NEAR(r.log_jacobian, std::log(0.1 / 0.4), 1e-12);
}

TEST(MadMap, ZeroShiftIsIdentity) {
  const IsingChain ising(6, 0.8);
  Rng rng = make_rng(5);
  for (int i = 0; i < 100; ++i) {
    const AugmentedState s = random_state(ising, rng);
    const FlowResult r = mad_forward(s, ising, ShiftParam(0.0));
    ASSERT_EQ(r.state.x, s.x);
    for (std::size_t m = 0; m < s.u.size(); ++m) ASSERT_NEAR(r.state.u[m], s.u[m], 1e-14);
    ASSERT_NEAR(r.log_jacobian, 0.0, 1e-12);
  }
}

TEST(MadMap, RejectsInvalidStates) {
  const ToyTarget t = ToyTarget::random({4, 5}, 1);
  EXPECT_THROW(mad_forward({{4, 0}, {0.1, 0.2}}, t, kXi), MadmixError);
  EXPECT_THROW(mad_forward({{0, 0}, {0.1, 1.5}}, t, kXi), MadmixError);
  EXPECT_THROW(mad_inverse({{0, 0, 0}, {0.1, 0.1, 0.1}}, t, kXi), MadmixError);
}

TEST(MadMapProperty, InverseRecoversStateOnBuiltInTargets) {
  std::vector<TargetPtr> targets{std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(1), 1)),
                                 std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(2), 2)),
                                 std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(3), 3)),
                                 std::make_shared<IsingChain>(5, 1.0)};
  Rng rng = make_rng(9);
  for (const TargetPtr& t : targets) {
    for (int i = 0; i < 200; ++i) {
      const AugmentedState s = random_state(*t, rng);
      const FlowResult f = mad_forward(s, *t, kXi);
      const FlowResult b = mad_inverse(f.state, *t, kXi);
      ASSERT_EQ(b.state.x, s.x);
      for (std::size_t m = 0; m < s.u.size(); ++m) ASSERT_NEAR(b.state.u[m], s.u[m], 1e-9);
      ASSERT_NEAR(f.log_jacobian + b.log_jacobian, 0.0, 1e-9);
    }
  }
}

TEST(MadMapProperty, InverseRecoversTypicalStatesOfStiffIsing) {
  const IsingChain ising(50, 5.0);
  Rng rng = make_rng(10);
  for (int i = 0; i < 1000; ++i) {
    const AugmentedState s = ising_draw(50, 5.0, rng);
    const FlowResult f = mad_forward(s, ising, kXi);
    const FlowResult b = mad_inverse(f.state, ising, kXi);
    ASSERT_EQ(b.state.x, s.x);
    for (std::size_t m = 0; m < s.u.size(); ++m) ASSERT_NEAR(b.state.u[m], s.u[m], 1e-9);
  }
}

TEST(MadMapProperty, RoundTripErrorScalesWithInverseAtomMass) {
  // A uniform on an atom of mass p is stored through u' on a wider atom, so
  // the recoverable precision is about 2^-53 / p.
  const IsingChain ising(50, 5.0);
  Rng rng = make_rng(11);
  double worst_ratio = 0.0;
  for (int i = 0; i < 200; ++i) {
    const AugmentedState s = random_state(ising, rng);
    const FlowResult f = mad_forward(s, ising, kXi);
    const FlowResult b = mad_inverse(f.state, ising, kXi);
    ASSERT_EQ(b.state.x, s.x);
    AugmentedState cur = s;
    for (std::size_t m = 0; m < s.u.size(); ++m) {
      const double p = ising.conditional(m, cur.x).prob(static_cast<std::size_t>(s.x[m]));
      cur.x[m] = f.state.x[m];
      const double bound = 0x1.0p-53 / p;
      worst_ratio = std::max(worst_ratio, std::abs(b.state.u[m] - s.u[m]) / bound);
    }
  }
  EXPECT_LT(worst_ratio, 4.0);
}

TEST(MadMapProperty, AnalyticJacobianMatchesFiniteDifferences) {
  const ToyTarget t = ToyTarget::random(toy_shape(3), 4);
  Rng rng = make_rng(6);
  const double h = 1e-7;
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    AugmentedState s = random_state(t, rng);
    for (double& u : s.u) u = 0.05 + 0.9 * u;
    const FlowResult f = mad_forward(s, t, kXi);
    double log_det = 0.0;
    bool same_path = true;
    for (std::size_t m = 0; m < s.u.size() && same_path; ++m) {
      AugmentedState lo = s, hi = s;
      lo.u[m] -= h;
      hi.u[m] += h;
      const FlowResult a = mad_forward(lo, t, kXi);
      const FlowResult b = mad_forward(hi, t, kXi);
      same_path = a.state.x == f.state.x && b.state.x == f.state.x;
      // u'_k depends only on u_k while the discrete path is fixed.
      log_det += std::log((b.state.u[m] - a.state.u[m]) / (2 * h));
    }
    if (!same_path) continue;
    ++checked;
    ASSERT_NEAR(std::exp(log_det - f.log_jacobian), 1.0, 1e-5);
  }
  EXPECT_GT(checked, 150);
}

TEST(MadMapProperty, JacobianComposesAdditively) {
  const ToyTarget t = ToyTarget::random(toy_shape(2), 8);
  Rng rng = make_rng(7);
  AugmentedState s = random_state(t, rng);
  double total = 0.0;
  AugmentedState cur = s;
  for (int n = 0; n < 20; ++n) {
    const FlowResult r = mad_forward(cur, t, kXi);
    total += r.log_jacobian;
    cur = r.state;
  }
  // Inverting all twenty passes in one go returns the negative total.
  double back = 0.0;
  for (int n = 0; n < 20; ++n) {
    const FlowResult r = mad_inverse(cur, t, kXi);
    back += r.log_jacobian;
    cur = r.state;
  }
  EXPECT_NEAR(total + back, 0.0, 1e-9);
  EXPECT_EQ(cur.x, s.x);
}

TEST(MadMapProperty, InplaceMatchesValidatedPass) {
  const IsingChain ising(7, 0.6);
  Rng rng = make_rng(8);
  DiscretePMF scratch;
  for (int i = 0; i < 50; ++i) {
    AugmentedState s = random_state(ising, rng);
    const FlowResult f = mad_forward(s, ising, kXi);
    const double lj = mad_forward_inplace(s, ising, kXi, scratch);
    ASSERT_EQ(s, f.state);
    ASSERT_EQ(lj, f.log_jacobian);
  }
}

TEST(ShiftParam, DetectsLowOrderRationals) {
  for (double v : {0.0, 0.5, 1.0 / 3.0, 2.0 / 3.0, 0.25, 0.75, 1.25, -0.5})
    EXPECT_TRUE(ShiftParam(v).is_low_order_rational()) << v;
  for (double v : {std::numbers::pi / 16.0, 0.1, std::numbers::sqrt2 - 1.0})
    EXPECT_FALSE(ShiftParam(v).is_low_order_rational()) << v;
  EXPECT_DOUBLE_EQ(kXi.inverse().xi, -kXi.xi);
}
