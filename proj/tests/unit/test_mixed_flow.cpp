#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "madmix/mixed_flow.hpp"
#include "madmix/models/gmm.hpp"
#include "madmix/models/toy.hpp"

using namespace madmix;

namespace {

const ShiftParam kXi{std::numbers::pi / 16.0};

// Standard normal on R^d with no discrete block.
class GaussianTarget final : public MixedTarget {
 public:
  explicit GaussianTarget(std::size_t d) : d_(d) {}
  std::size_t continuous_dim() const override { return d_; }
  std::size_t discrete_dim() const override { return 0; }
  std::size_t support_size(std::size_t) const override { return 1; }
  double log_density(const Eigen::VectorXd& xc, std::span<const int>) const override {
    return -0.5 * xc.squaredNorm();
  }
  Eigen::VectorXd score(const Eigen::VectorXd& xc, std::span<const int>) const override {
    return -xc;
  }
  DiscretePMF discrete_conditional(std::size_t, const Eigen::VectorXd&,
                                   std::span<const int>) const override {
    throw MadmixError("no discrete block");
  }

 private:
  std::size_t d_;
};

// A discrete toy target seen as a mixed target with an empty continuous block.
class DiscreteOnly final : public MixedTarget {
 public:
  explicit DiscreteOnly(std::shared_ptr<ToyTarget> t) : t_(std::move(t)) {}
  std::size_t continuous_dim() const override { return 0; }
  std::size_t discrete_dim() const override { return t_->dimension(); }
  std::size_t support_size(std::size_t m) const override { return t_->support_size(m); }
  double log_density(const Eigen::VectorXd&, std::span<const int> xd) const override {
    return t_->unnormalized_log_mass(xd);
  }
  Eigen::VectorXd score(const Eigen::VectorXd&, std::span<const int>) const override {
    return Eigen::VectorXd();
  }
  DiscretePMF discrete_conditional(std::size_t m, const Eigen::VectorXd&,
                                   std::span<const int> xd) const override {
    return t_->conditional(m, xd);
  }

 private:
  std::shared_ptr<ToyTarget> t_;
};

// pi(d) = (0.3, 0.7), x | d ~ N(-+separation, 1).
class TwoStateGaussian final : public MixedTarget {
 public:
  explicit TwoStateGaussian(double separation = 1.5) : mu_{-separation, separation} {}

  std::size_t continuous_dim() const override { return 1; }
  std::size_t discrete_dim() const override { return 1; }
  std::size_t support_size(std::size_t) const override { return 2; }
  double log_density(const Eigen::VectorXd& xc, std::span<const int> xd) const override {
    const double z = xc[0] - mu_[xd[0]];
    return std::log(kW[xd[0]]) - 0.5 * z * z;
  }
  Eigen::VectorXd score(const Eigen::VectorXd& xc, std::span<const int> xd) const override {
    return Eigen::VectorXd::Constant(1, mu_[xd[0]] - xc[0]);
  }
  DiscretePMF discrete_conditional(std::size_t, const Eigen::VectorXd& xc,
                                   std::span<const int>) const override {
    std::vector<double> lw(2);
    for (int d = 0; d < 2; ++d) lw[d] = std::log(kW[d]) - 0.5 * std::pow(xc[0] - mu_[d], 2);
    return DiscretePMF::from_log_weights(lw);
  }

  static constexpr double kW[2] = {0.3, 0.7};

 private:
  double mu_[2];
};

// Score is NaN in the second coordinate.
class BrokenScore final : public MixedTarget {
 public:
  std::size_t continuous_dim() const override { return 2; }
  std::size_t discrete_dim() const override { return 0; }
  std::size_t support_size(std::size_t) const override { return 1; }
  double log_density(const Eigen::VectorXd&, std::span<const int>) const override { return 0.0; }
  Eigen::VectorXd score(const Eigen::VectorXd&, std::span<const int>) const override {
    return Eigen::Vector2d(0.0, std::nan(""));
  }
  DiscretePMF discrete_conditional(std::size_t, const Eigen::VectorXd&,
                                   std::span<const int>) const override {
    throw MadmixError("no discrete block");
  }
  std::vector<std::string> continuous_names() const override { return {"alpha", "beta"}; }
};

MixedState continuous_state(Rng& rng, std::size_t d, const MomentumBase& r0) {
  MixedState s;
  s.xc.resize(static_cast<Eigen::Index>(d));
  s.m.resize(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    s.xc[static_cast<Eigen::Index>(i)] = standard_normal(rng);
    s.m[static_cast<Eigen::Index>(i)] = r0.sample(rng);
  }
  s.uc = uniform01(rng);
  return s;
}

HamiltonianConfig config(std::size_t steps, double eps, MomentumFamily family) {
  HamiltonianConfig cfg;
  cfg.leapfrog_steps = steps;
  cfg.step_size = eps;
  cfg.momentum.family = family;
  return cfg;
}

std::shared_ptr<GmmModel> desk_gmm() {
  const GmmDataset data = synthetic_gmm(50, 2, 2, 3.0, 0);
  return std::make_shared<GmmModel>(data.y, 2, 0);
}

double energy(const MixedState& s, const MixedTarget& t, const MomentumBase& r0) {
  double h = -t.log_density(s.xc, s.xd);
  for (Eigen::Index i = 0; i < s.m.size(); ++i) h -= r0.log_pdf(s.m[i]);
  return h;
}

}  // namespace

TEST(Momentum, LaplaceAndGaussianLaws) {
  MomentumBase lap;
  EXPECT_NEAR(lap.log_pdf(0.0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(lap.cdf(0.0), 0.5, 1e-15);
  EXPECT_NEAR(lap.quantile(lap.cdf(-2.3)), -2.3, 1e-12);
  EXPECT_EQ(lap.grad_log_pdf(1.5), -1.0);
  EXPECT_EQ(lap.grad_log_pdf(-0.5), 1.0);
  MomentumBase gau{MomentumFamily::Gaussian};
  EXPECT_NEAR(gau.cdf(1.0), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(gau.quantile(0.975), 1.959963984540054, 1e-9);
  EXPECT_EQ(gau.grad_log_pdf(0.7), -0.7);
  EXPECT_TRUE(std::isfinite(gau.quantile(0.0)));
}

TEST(Leapfrog, GaussianOneStepClosedForm) {
  const GaussianTarget t(1);
  const double eps = 0.1;
  const HamiltonianConfig cfg = config(1, eps, MomentumFamily::Gaussian);
  MixedState s;
  s.xc = Eigen::VectorXd::Constant(1, 0.8);
  s.m = Eigen::VectorXd::Constant(1, -0.3);
  const MixedState out = leapfrog(s, t, cfg);
  const double x1 = 0.8 + eps * (-0.3 - 0.5 * eps * 0.8);
  EXPECT_NEAR(out.xc[0], x1, 1e-15);
  EXPECT_NEAR(out.m[0], -0.3 - 0.5 * eps * 0.8 - 0.5 * eps * x1, 1e-15);
}

TEST(Leapfrog, LaplaceMomentumMovesBySign) {
  const GaussianTarget t(1);
  const double eps = 0.1;
  const HamiltonianConfig cfg = config(1, eps, MomentumFamily::Laplace);
  MixedState s;
  s.xc = Eigen::VectorXd::Constant(1, 0.8);
  s.m = Eigen::VectorXd::Constant(1, 0.02);
  // m_half = 0.02 - 0.04 < 0, so x moves down by eps.
  const MixedState out = leapfrog(s, t, cfg);
  EXPECT_NEAR(out.xc[0], 0.7, 1e-15);
}

TEST(Leapfrog, TinyStepBarelyMoves) {
  const GaussianTarget t(3);
  const HamiltonianConfig cfg = config(1, 1e-8, MomentumFamily::Laplace);
  Rng rng = make_rng(1);
  const MixedState s = continuous_state(rng, 3, cfg.momentum);
  const MixedState out = leapfrog(s, t, cfg);
  EXPECT_LT((out.xc - s.xc).lpNorm<Eigen::Infinity>(), 1e-7);
  EXPECT_LT((out.m - s.m).lpNorm<Eigen::Infinity>(), 1e-7);
}

TEST(Leapfrog, EnergyDriftIsSmall) {
  const GaussianTarget t(2);
  const HamiltonianConfig cfg = config(10, 0.1, MomentumFamily::Gaussian);
  Rng rng = make_rng(2);
  for (int i = 0; i < 200; ++i) {
    const MixedState s = continuous_state(rng, 2, cfg.momentum);
    const MixedState out = leapfrog(s, t, cfg);
    ASSERT_LT(std::abs(energy(out, t, cfg.momentum) - energy(s, t, cfg.momentum)), 0.1);
  }
}

TEST(Leapfrog, LaplaceEnergyDriftIsSmall) {
  const GaussianTarget t(2);
  const HamiltonianConfig cfg = config(10, 0.05, MomentumFamily::Laplace);
  Rng rng = make_rng(2);
  for (int i = 0; i < 200; ++i) {
    const MixedState s = continuous_state(rng, 2, cfg.momentum);
    const MixedState out = leapfrog(s, t, cfg);
    ASSERT_LT(std::abs(energy(out, t, cfg.momentum) - energy(s, t, cfg.momentum)), 0.1);
  }
}

TEST(Leapfrog, NegativeStepReverses) {
  const auto gmm = desk_gmm();
  const HamiltonianConfig cfg = config(10, 0.05, MomentumFamily::Laplace);
  Rng rng = make_rng(3);
  for (int i = 0; i < 20; ++i) {
    MixedState s = gmm->default_reference()->sample(rng);
    const MixedState start = s;
    leapfrog_inplace(s, *gmm, cfg, cfg.step_size);
    leapfrog_inplace(s, *gmm, cfg, -cfg.step_size);
    ASSERT_LT((s.xc - start.xc).lpNorm<Eigen::Infinity>(), 1e-10);
    ASSERT_LT((s.m - start.m).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(Leapfrog, PreservesVolume) {
  const auto gmm = desk_gmm();
  const auto n = static_cast<Eigen::Index>(gmm->continuous_dim());
  for (MomentumFamily fam : {MomentumFamily::Gaussian, MomentumFamily::Laplace}) {
    const HamiltonianConfig cfg = config(5, 0.02, fam);
    Rng rng = make_rng(4);
    for (int trial = 0; trial < 5; ++trial) {
      MixedState s = gmm->default_reference(0.1, cfg.momentum)->sample(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(s.m[i]) < 0.2) s.m[i] += 0.5;
      }
      const double h = 1e-6;
      Eigen::MatrixXd jac(2 * n, 2 * n);
      for (Eigen::Index j = 0; j < 2 * n; ++j) {
        MixedState lo = s, hi = s;
        (j < n ? lo.xc[j] : lo.m[j - n]) -= h;
        (j < n ? hi.xc[j] : hi.m[j - n]) += h;
        const MixedState a = leapfrog(lo, *gmm, cfg);
        const MixedState b = leapfrog(hi, *gmm, cfg);
        jac.col(j).head(n) = (b.xc - a.xc) / (2 * h);
        jac.col(j).tail(n) = (b.m - a.m) / (2 * h);
      }
      EXPECT_NEAR(jac.determinant(), 1.0, 1e-4);
    }
  }
}

TEST(Leapfrog, FrozenCoordinatesAndBlocksStayPut) {
  const auto gmm = desk_gmm();
  const HamiltonianConfig cfg = config(10, 0.05, MomentumFamily::Laplace);
  Rng rng = make_rng(5);
  const MixedState s = gmm->default_reference()->sample(rng);
  const MixedState out = leapfrog(s, *gmm, cfg);
  EXPECT_EQ(out.xd, s.xd);
  EXPECT_EQ(out.ud, s.ud);
  EXPECT_EQ(out.uc, s.uc);
  const auto [r, lj] = momentum_refresh(s, cfg);
  EXPECT_EQ(r.xc, s.xc);
  EXPECT_EQ(r.xd, s.xd);
  EXPECT_EQ(r.ud, s.ud);
  (void)lj;
}

TEST(Leapfrog, NonFiniteScoreNamesCoordinates) {
  const BrokenScore t;
  const HamiltonianConfig cfg = config(1, 0.1, MomentumFamily::Laplace);
  MixedState s;
  s.xc = Eigen::Vector2d(0.0, 0.0);
  s.m = Eigen::Vector2d(1.0, 1.0);
  try {
    leapfrog(s, t, cfg);
    FAIL() << "expected a throw";
  } catch (const MadmixError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("alpha"), std::string::npos);
  }
}

TEST(HamiltonianConfig, Validation) {
  EXPECT_THROW(config(0, 0.1, MomentumFamily::Laplace).validate(), MadmixError);
  EXPECT_THROW(config(200, 0.1, MomentumFamily::Laplace).validate(), MadmixError);
  EXPECT_THROW(config(10, -0.1, MomentumFamily::Laplace).validate(), MadmixError);
  EXPECT_NO_THROW(config(100, 0.1, MomentumFamily::Laplace).validate());
  const HamiltonianConfig cfg;
  EXPECT_NEAR(cfg.offset(0), std::numbers::sqrt2 - 1.0, 1e-15);
}

TEST(MomentumRefresh, ZeroShiftsAreIdentity) {
  HamiltonianConfig cfg;
  cfg.use_offsets = false;
  cfg.refresh_shift = 0.0;
  Rng rng = make_rng(6);
  MixedState s = continuous_state(rng, 4, cfg.momentum);
  s.uc = 0.0;
  const auto [out, lj] = momentum_refresh(s, cfg);
  EXPECT_LT((out.m - s.m).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_NEAR(lj, 0.0, 1e-10);
  EXPECT_EQ(out.uc, 0.0);
}

TEST(MomentumRefresh, InverseRoundTrip) {
  for (MomentumFamily fam : {MomentumFamily::Gaussian, MomentumFamily::Laplace}) {
    HamiltonianConfig cfg;
    cfg.momentum.family = fam;
    Rng rng = make_rng(7);
    for (int i = 0; i < 1000; ++i) {
      const MixedState s = continuous_state(rng, 5, cfg.momentum);
      const auto [f, lf] = momentum_refresh(s, cfg);
      const auto [b, lb] = momentum_refresh_inverse(f, cfg);
      ASSERT_LT((b.m - s.m).lpNorm<Eigen::Infinity>(), 1e-9);
      ASSERT_NEAR(b.uc, s.uc, 1e-12);
      ASSERT_NEAR(lf + lb, 0.0, 1e-9);
    }
  }
}

TEST(MomentumRefresh, PreservesMomentumAndUniformLaws) {
  for (MomentumFamily fam : {MomentumFamily::Gaussian, MomentumFamily::Laplace}) {
    HamiltonianConfig cfg;
    cfg.momentum.family = fam;
    Rng rng = make_rng(8);
    const std::size_t n = 100000;
    std::vector<double> m0, m2, uc;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [out, lj] = momentum_refresh(continuous_state(rng, 3, cfg.momentum), cfg);
      m0.push_back(out.m[0]);
      m2.push_back(out.m[2]);
      uc.push_back(out.uc);
    }
    const auto r0cdf = [&](double v) { return cfg.momentum.cdf(v); };
    const double crit = ks_critical_value(n, 0.01);
    EXPECT_LT(ks_statistic(m0, r0cdf), crit);
    EXPECT_LT(ks_statistic(m2, r0cdf), crit);
    EXPECT_LT(ks_statistic(uc, [](double v) { return std::clamp(v, 0.0, 1.0); }), crit);
  }
}

TEST(MixedMap, ZeroShiftsAndZeroStepIsIdentity) {
  const auto gmm = desk_gmm();
  HamiltonianConfig cfg = config(3, 0.0, MomentumFamily::Laplace);
  cfg.use_offsets = false;
  cfg.refresh_shift = 0.0;
  Rng rng = make_rng(9);
  MixedState s = gmm->default_reference()->sample(rng);
  s.uc = 0.0;
  const auto [out, lj] = mixed_forward(s, *gmm, cfg, ShiftParam(0.0));
  EXPECT_EQ(out.xd, s.xd);
  EXPECT_LT((out.xc - s.xc).lpNorm<Eigen::Infinity>(), 1e-14);
  EXPECT_LT((out.m - s.m).lpNorm<Eigen::Infinity>(), 1e-12);
  for (std::size_t i = 0; i < s.ud.size(); ++i) EXPECT_NEAR(out.ud[i], s.ud[i], 1e-12);
  EXPECT_NEAR(lj, 0.0, 1e-9);
}

TEST(MixedMap, GmmRoundTripAfterManyCompositions) {
  const auto gmm = desk_gmm();
  const HamiltonianConfig cfg = config(10, 0.05, MomentumFamily::Laplace);
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const MixedState start = gmm->default_reference()->sample(rng);
    MixedState s = start;
    for (int n = 0; n < 100; ++n) mixed_forward_inplace(s, *gmm, cfg, kXi);
    for (int n = 0; n < 100; ++n) mixed_inverse_inplace(s, *gmm, cfg, kXi);
    EXPECT_EQ(s.xd, start.xd);
    EXPECT_LT((s.xc - start.xc).lpNorm<Eigen::Infinity>(), 1e-7);
    EXPECT_NEAR(s.uc, start.uc, 1e-7);
  }
}

TEST(MixedMap, GmmSinglePassRecoversMomenta) {
  const auto gmm = desk_gmm();
  const HamiltonianConfig cfg = config(10, 0.05, MomentumFamily::Laplace);
  Rng rng = make_rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const MixedState start = gmm->default_reference()->sample(rng);
    const auto [f, lf] = mixed_forward(start, *gmm, cfg, kXi);
    const auto [b, lb] = mixed_inverse(f, *gmm, cfg, kXi);
    ASSERT_EQ(b.xd, start.xd);
    ASSERT_LT((b.m - start.m).lpNorm<Eigen::Infinity>(), 1e-9);
    for (std::size_t i = 0; i < b.ud.size(); ++i) ASSERT_NEAR(b.ud[i], start.ud[i], 1e-9);
    ASSERT_NEAR(lf + lb, 0.0, 1e-8);
  }
}

TEST(MixedMap, NoDiscreteBlockReducesToHamiltonianStep) {
  const GaussianTarget t(3);
  const HamiltonianConfig cfg = config(10, 0.05, MomentumFamily::Laplace);
  Rng rng = make_rng(11);
  const MixedState s = continuous_state(rng, 3, cfg.momentum);
  const auto [out, lj] = mixed_forward(s, t, cfg, kXi);
  const auto [ref, lr] = momentum_refresh(leapfrog(s, t, cfg), cfg);
  EXPECT_EQ(out.xc, ref.xc);
  EXPECT_EQ(out.m, ref.m);
  EXPECT_EQ(out.uc, ref.uc);
  EXPECT_EQ(lj, lr);
}

TEST(MixedMap, NoContinuousBlockReducesToMadPass) {
  auto toy = std::make_shared<ToyTarget>(ToyTarget::random(toy_shape(2), 3));
  const DiscreteOnly t(toy);
  const HamiltonianConfig cfg;
  Rng rng = make_rng(12);
  for (int i = 0; i < 50; ++i) {
    MixedState s;
    s.xd = {static_cast<int>(uniform01(rng) * 4), static_cast<int>(uniform01(rng) * 5)};
    s.ud = {uniform01(rng), uniform01(rng)};
    s.uc = uniform01(rng);
    const auto [out, lj] = mixed_forward(s, t, cfg, kXi);
    const FlowResult mad = mad_forward({s.xd, s.ud}, *toy, kXi);
    ASSERT_EQ(out.xd, mad.state.x);
    ASSERT_EQ(out.ud, mad.state.u);
    ASSERT_NEAR(lj, mad.log_jacobian, 1e-14);
  }
}

TEST(MixedMap, RejectsMalformedStates) {
  const auto gmm = desk_gmm();
  const HamiltonianConfig cfg;
  Rng rng = make_rng(13);
  MixedState s = gmm->default_reference()->sample(rng);
  MixedState bad = s;
  bad.uc = 1.0;
  EXPECT_THROW(mixed_forward(bad, *gmm, cfg, kXi), MadmixError);
  bad = s;
  bad.xd[0] = 2;
  EXPECT_THROW(mixed_forward(bad, *gmm, cfg, kXi), MadmixError);
  bad = s;
  bad.m.resize(3);
  EXPECT_THROW(mixed_inverse(bad, *gmm, cfg, kXi), MadmixError);
}

TEST(MixedMixFlow, LengthOneIsTheReference) {
  const auto gmm = desk_gmm();
  const MixedReferencePtr ref = gmm->default_reference();
  const MixedMixFlow flow(gmm, ref, 1);
  Rng rng = make_rng(14);
  for (int i = 0; i < 10; ++i) {
    const MixedState s = ref->sample(rng);
    EXPECT_NEAR(flow.log_density(s), ref->log_density(s), 1e-12);
  }
  EXPECT_THROW(MixedMixFlow(gmm, ref, 10, {}, ShiftParam(0.5)), MadmixError);
}

TEST(MixedMixFlow, DeterministicSamplingAndFiniteElbo) {
  const auto gmm = desk_gmm();
  const MixedMixFlow flow(gmm, gmm->default_reference(), 20);
  const MixedState a = flow.sample(std::uint64_t{3});
  const MixedState b = flow.sample(std::uint64_t{3});
  EXPECT_EQ(a.xc, b.xc);
  EXPECT_EQ(a.xd, b.xd);
  const Estimate e = mixed_elbo(flow, 50, 1);
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_GT(e.std_error, 0.0);
}

TEST(MixedMixFlow, SamplerMatchesDensity) {
  // Cell masses of (d, x) from the sampler against importance-weighted
  // density evaluations. The modes sit close together so that the discrete
  // conditionals stay moderate over the grid; with a sharp conditional the
  // MAD pass packs mass into u_d slivers no uniform proposal resolves.
  auto target = std::make_shared<TwoStateGaussian>(0.5);
  const std::vector<DiscretePMF> factors{DiscretePMF({0.5, 0.5})};
  auto ref = std::make_shared<MixedReference>(Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Constant(1, 1.5), factors);
  const MixedMixFlow flow(target, ref, 10, config(10, 0.05, MomentumFamily::Laplace));

  const int bins = 50;
  const double lo = -4.5, width = 9.0 / bins;
  auto cell = [&](const MixedState& s) {
    const int b = static_cast<int>(std::floor((s.xc[0] - lo) / width));
    return (b < 0 || b >= bins) ? -1 : s.xd[0] * bins + b;
  };
  const std::size_t n_flow = 200000;
  std::vector<double> count(2 * bins, 0.0);
  Rng rng = make_rng(15);
  for (std::size_t i = 0; i < n_flow; ++i) {
    const int c = cell(flow.sample(rng));
    if (c >= 0) count[c] += 1.0;
  }

  // Proposal: x ~ N(0, 2.5^2), m ~ Laplace(0, 2), everything else uniform.
  const double sx = 2.5, bm = 2.0;
  const std::size_t n_is = 1000000;
  std::vector<double> sum(2 * bins, 0.0), sum2(2 * bins, 0.0);
  for (std::size_t i = 0; i < n_is; ++i) {
    MixedState s;
    s.xc = Eigen::VectorXd::Constant(1, sx * standard_normal(rng));
    const double e = -bm * std::log1p(-uniform01(rng));
    s.m = Eigen::VectorXd::Constant(1, uniform01(rng) < 0.5 ? -e : e);
    s.uc = uniform01(rng);
    s.xd = {uniform01(rng) < 0.5 ? 0 : 1};
    s.ud = {uniform01(rng)};
    const int c = cell(s);
    if (c < 0) continue;
    const double z = s.xc[0] / sx;
    const double log_psi = -0.5 * z * z - std::log(sx * std::sqrt(2 * std::numbers::pi)) -
                           e / bm - std::log(2 * bm) + std::log(0.5);
    const double w = std::exp(flow.log_density(s) - log_psi);
    sum[c] += w;
    sum2[c] += w * w;
  }
  for (int c = 0; c < 2 * bins; ++c) {
    const double p = count[c] / n_flow;
    const double se_s = std::sqrt(std::max(p * (1 - p), 1.0 / n_flow) / n_flow);
    const double mean = sum[c] / n_is;
    const double se_w = std::sqrt(std::max(sum2[c] / n_is - mean * mean, 0.0) / n_is);
    EXPECT_NEAR(p, mean, 3 * std::hypot(se_s, se_w)) << "cell " << c;
  }
}
