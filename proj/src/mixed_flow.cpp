#include "madmix/mixed_flow.hpp"

#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace madmix {

namespace {

constexpr double kLog2 = 0.69314718055994530942;
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kTinyProb = 0x1p-1074;

// Conditionals of a mixed target's discrete block at fixed x_c.
class DiscreteSlice final : public FullConditionalTarget {
 public:
  DiscreteSlice(const MixedTarget& parent, Eigen::VectorXd xc)
      : parent_(parent), xc_(std::move(xc)) {}

  std::size_t dimension() const override { return parent_.discrete_dim(); }
  std::size_t support_size(std::size_t m) const override { return parent_.support_size(m); }
  DiscretePMF conditional(std::size_t m, std::span<const int> x) const override {
    return parent_.discrete_conditional(m, xc_, x);
  }
  bool has_log_mass() const override { return true; }
  double unnormalized_log_mass(std::span<const int> x) const override {
    return parent_.log_density(xc_, x);
  }

 private:
  const MixedTarget& parent_;
  Eigen::VectorXd xc_;
};

double wrap_unit(double v) { return clamp_unit(v - std::floor(v)); }

}  // namespace

TargetPtr MixedTarget::discrete_slice(const Eigen::VectorXd& xc) const {
  return std::make_shared<DiscreteSlice>(*this, xc);
}

void MixedTarget::dynamic_mask(std::span<const int>, std::vector<char>& mask) const {
  mask.assign(continuous_dim(), 1);
}

std::vector<Transform> MixedTarget::transforms() const {
  return std::vector<Transform>(continuous_dim(), Transform::Identity);
}

std::vector<std::string> MixedTarget::continuous_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < continuous_dim(); ++i) names.push_back("xc" + std::to_string(i));
  return names;
}

double MomentumBase::log_pdf(double m) const {
  if (family == MomentumFamily::Laplace) return -kLog2 - std::abs(m);
  return -kHalfLog2Pi - 0.5 * m * m;
}

double MomentumBase::grad_log_pdf(double m) const {
  if (family == MomentumFamily::Laplace) return m > 0.0 ? -1.0 : (m < 0.0 ? 1.0 : 0.0);
  return -m;
}

double MomentumBase::cdf(double m) const {
  if (family == MomentumFamily::Laplace) {
    return m < 0.0 ? 0.5 * std::exp(m) : 1.0 - 0.5 * std::exp(-m);
  }
  return 0.5 * std::erfc(-m / std::numbers::sqrt2);
}

double MomentumBase::quantile(double p) const {
  p = std::clamp(p, kTinyProb, 1.0 - 0x1p-53);
  if (family == MomentumFamily::Laplace) {
    return p < 0.5 ? std::log(2.0 * p) : -std::log(2.0 * (1.0 - p));
  }
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

double MomentumBase::sample(Rng& rng) const { return quantile(uniform01(rng)); }

void HamiltonianConfig::validate() const {
  if (leapfrog_steps < 1) throw MadmixError("HamiltonianConfig: leapfrog_steps must be >= 1");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
    throw MadmixError("HamiltonianConfig: step_size must be finite and non-negative");
  }
  if (step_size * static_cast<double>(leapfrog_steps) > 10.0) {
    throw MadmixError("HamiltonianConfig: step_size * leapfrog_steps exceeds 10");
  }
  if (!std::isfinite(refresh_shift)) throw MadmixError("HamiltonianConfig: refresh_shift not finite");
}

double HamiltonianConfig::offset(std::size_t i) const {
  if (!use_offsets) return 0.0;
  const double v = static_cast<double>(i + 1) * std::numbers::sqrt2;
  return v - std::floor(v);
}

void leapfrog_inplace(MixedState& s, const MixedTarget& target, const HamiltonianConfig& cfg,
                      double h) {
  const auto n = static_cast<Eigen::Index>(target.continuous_dim());
  if (n == 0 || h == 0.0) return;
  std::vector<char> mask;
  target.dynamic_mask(s.xd, mask);
  auto checked_score = [&]() {
    Eigen::VectorXd g = target.score(s.xc, s.xd);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[i] && !std::isfinite(g[i])) {
        std::ostringstream msg;
        const std::vector<std::string> names = target.continuous_names();
        msg << "leapfrog: non-finite score at";
        for (Eigen::Index j = 0; j < n; ++j) {
          if (mask[j] && !std::isfinite(g[j])) msg << ' ' << names[static_cast<std::size_t>(j)];
        }
        throw MadmixError(msg.str());
      }
    }
    return g;
  };
  Eigen::VectorXd g = checked_score();
  for (std::size_t step = 0; step < cfg.leapfrog_steps; ++step) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[i]) s.m[i] += 0.5 * h * g[i];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[i]) s.xc[i] -= h * cfg.momentum.grad_log_pdf(s.m[i]);
    }
    g = checked_score();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask[i]) s.m[i] += 0.5 * h * g[i];
    }
  }
}

MixedState leapfrog(const MixedState& state, const MixedTarget& target,
                    const HamiltonianConfig& cfg) {
  cfg.validate();
  MixedState out = state;
  leapfrog_inplace(out, target, cfg, cfg.step_size);
  return out;
}

double momentum_refresh_inplace(MixedState& s, const HamiltonianConfig& cfg, bool inverse) {
  const MomentumBase& r0 = cfg.momentum;
  double log_j = 0.0;
  if (!inverse) {
    for (Eigen::Index i = 0; i < s.m.size(); ++i) {
      const double before = r0.log_pdf(s.m[i]);
      const double rho = wrap_unit(r0.cdf(s.m[i]) + s.uc + cfg.offset(static_cast<std::size_t>(i)));
      s.m[i] = r0.quantile(rho);
      log_j += before - r0.log_pdf(s.m[i]);
    }
    s.uc = wrap_unit(s.uc + cfg.refresh_shift);
  } else {
    s.uc = wrap_unit(s.uc - cfg.refresh_shift);
    for (Eigen::Index i = 0; i < s.m.size(); ++i) {
      const double before = r0.log_pdf(s.m[i]);
      const double rho = wrap_unit(r0.cdf(s.m[i]) - s.uc - cfg.offset(static_cast<std::size_t>(i)));
      s.m[i] = r0.quantile(rho);
      log_j += before - r0.log_pdf(s.m[i]);
    }
  }
  return log_j;
}

std::pair<MixedState, double> momentum_refresh(const MixedState& state,
                                               const HamiltonianConfig& cfg) {
  MixedState out = state;
  const double lj = momentum_refresh_inplace(out, cfg, false);
  return {std::move(out), lj};
}

std::pair<MixedState, double> momentum_refresh_inverse(const MixedState& state,
                                                       const HamiltonianConfig& cfg) {
  MixedState out = state;
  const double lj = momentum_refresh_inplace(out, cfg, true);
  return {std::move(out), lj};
}

namespace {

double discrete_pass(MixedState& s, const MixedTarget& target, ShiftParam xi, bool inverse) {
  if (target.discrete_dim() == 0) return 0.0;
  const TargetPtr slice = target.discrete_slice(s.xc);
  AugmentedState block{std::move(s.xd), std::move(s.ud)};
  DiscretePMF scratch;
  const double lj = inverse ? mad_inverse_inplace(block, *slice, xi, scratch)
                            : mad_forward_inplace(block, *slice, xi, scratch);
  s.xd = std::move(block.x);
  s.ud = std::move(block.u);
  return lj;
}

void check_mixed_state(const MixedState& s, const MixedTarget& target) {
  const auto mc = static_cast<Eigen::Index>(target.continuous_dim());
  if (s.xc.size() != mc || s.m.size() != mc) throw MadmixError("MixedState: continuous size mismatch");
  if (s.xd.size() != target.discrete_dim() || s.ud.size() != target.discrete_dim()) {
    throw MadmixError("MixedState: discrete size mismatch");
  }
  if (!(s.uc >= 0.0 && s.uc < 1.0)) throw MadmixError("MixedState: u_c outside [0, 1)");
  for (std::size_t m = 0; m < s.xd.size(); ++m) {
    if (s.xd[m] < 0 || static_cast<std::size_t>(s.xd[m]) >= target.support_size(m)) {
      throw MadmixError("MixedState: discrete coordinate outside support");
    }
    if (!(s.ud[m] >= 0.0 && s.ud[m] < 1.0)) throw MadmixError("MixedState: u_d outside [0, 1)");
  }
}

}  // namespace

double mixed_forward_inplace(MixedState& s, const MixedTarget& target,
                             const HamiltonianConfig& cfg, ShiftParam xi) {
  leapfrog_inplace(s, target, cfg, cfg.step_size);
  double lj = momentum_refresh_inplace(s, cfg, false);
  lj += discrete_pass(s, target, xi, false);
  return lj;
}

double mixed_inverse_inplace(MixedState& s, const MixedTarget& target,
                             const HamiltonianConfig& cfg, ShiftParam xi) {
  double lj = discrete_pass(s, target, xi, true);
  lj += momentum_refresh_inplace(s, cfg, true);
  leapfrog_inplace(s, target, cfg, -cfg.step_size);
  return lj;
}

std::pair<MixedState, double> mixed_forward(const MixedState& state, const MixedTarget& target,
                                            const HamiltonianConfig& cfg, ShiftParam xi) {
  cfg.validate();
  check_mixed_state(state, target);
  MixedState out = state;
  const double lj = mixed_forward_inplace(out, target, cfg, xi);
  return {std::move(out), lj};
}

std::pair<MixedState, double> mixed_inverse(const MixedState& state, const MixedTarget& target,
                                            const HamiltonianConfig& cfg, ShiftParam xi) {
  cfg.validate();
  check_mixed_state(state, target);
  MixedState out = state;
  const double lj = mixed_inverse_inplace(out, target, cfg, xi);
  return {std::move(out), lj};
}

MixedReference::MixedReference(Eigen::VectorXd center, Eigen::VectorXd scale,
                               std::vector<DiscretePMF> factors, MomentumBase momentum)
    : center_(std::move(center)),
      scale_(std::move(scale)),
      factors_(std::move(factors)),
      momentum_(momentum) {
  if (center_.size() != scale_.size()) throw MadmixError("MixedReference: center/scale mismatch");
  for (Eigen::Index i = 0; i < scale_.size(); ++i) {
    if (!(scale_[i] > 0.0)) throw MadmixError("MixedReference: scales must be positive");
  }
}

MixedState MixedReference::sample(Rng& rng) const {
  MixedState s;
  const Eigen::Index mc = center_.size();
  s.xc.resize(mc);
  s.m.resize(mc);
  for (Eigen::Index i = 0; i < mc; ++i) s.xc[i] = center_[i] + scale_[i] * standard_normal(rng);
  for (Eigen::Index i = 0; i < mc; ++i) s.m[i] = momentum_.sample(rng);
  s.uc = uniform01(rng);
  s.xd.resize(factors_.size());
  s.ud.resize(factors_.size());
  for (std::size_t m = 0; m < factors_.size(); ++m) {
    s.xd[m] = static_cast<int>(factors_[m].sample(rng));
    s.ud[m] = uniform01(rng);
  }
  return s;
}

double MixedReference::log_density(const MixedState& s) const {
  if (!(s.uc >= 0.0 && s.uc < 1.0)) return -std::numeric_limits<double>::infinity();
  double lp = 0.0;
  for (Eigen::Index i = 0; i < center_.size(); ++i) {
    const double z = (s.xc[i] - center_[i]) / scale_[i];
    lp += -kHalfLog2Pi - std::log(scale_[i]) - 0.5 * z * z;
    lp += momentum_.log_pdf(s.m[i]);
  }
  for (std::size_t m = 0; m < factors_.size(); ++m) {
    if (!(s.ud[m] >= 0.0 && s.ud[m] < 1.0)) return -std::numeric_limits<double>::infinity();
    lp += factors_[m].log_prob(static_cast<std::size_t>(s.xd[m]));
  }
  return lp;
}

MixedMixFlow::MixedMixFlow(MixedTargetPtr target, MixedReferencePtr reference,
                           std::size_t n_flow, HamiltonianConfig cfg, ShiftParam xi)
    : target_(std::move(target)),
      reference_(std::move(reference)),
      n_flow_(n_flow),
      cfg_(cfg),
      xi_(xi) {
  if (!target_ || !reference_) throw MadmixError("MixedMixFlow: null target or reference");
  if (n_flow_ < 1) throw MadmixError("MixedMixFlow: flow length must be at least 1");
  if (reference_->center().size() != static_cast<Eigen::Index>(target_->continuous_dim())) {
    throw MadmixError("MixedMixFlow: reference dimension does not match target");
  }
  cfg_.validate();
  if (target_->discrete_dim() > 0 && xi_.is_low_order_rational()) {
    throw MadmixError("MixedMixFlow: shift is a low-order rational (non-ergodic rotation)");
  }
}

double MixedMixFlow::log_density(const MixedState& state) const {
  MixedState s = state;
  std::vector<double> terms(n_flow_);
  terms[0] = reference_->log_density(s);
  double cumulative = 0.0;
  for (std::size_t n = 1; n < n_flow_; ++n) {
    cumulative += mixed_inverse_inplace(s, *target_, cfg_, xi_);
    terms[n] = reference_->log_density(s) + cumulative;
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(n_flow_));
}

MixedState MixedMixFlow::sample_component(Rng& rng, std::size_t n) const {
  MixedState s = reference_->sample(rng);
  for (std::size_t j = 0; j < n; ++j) mixed_forward_inplace(s, *target_, cfg_, xi_);
  return s;
}

MixedState MixedMixFlow::sample(Rng& rng) const {
  const std::size_t n = static_cast<std::size_t>(rng() % n_flow_);
  return sample_component(rng, n);
}

MixedState MixedMixFlow::sample(std::uint64_t seed) const {
  Rng rng = make_rng(seed, 0x4d58);
  return sample(rng);
}

double MixedMixFlow::log_augmented_target(const MixedState& s) const {
  double lp = target_->log_density(s.xc, s.xd);
  for (Eigen::Index i = 0; i < s.m.size(); ++i) lp += cfg_.momentum.log_pdf(s.m[i]);
  return lp;
}

MixedSampleSet mixed_sample_set(const MixedMixFlow& flow, std::size_t n_samples,
                                std::uint64_t seed, bool with_density) {
  Rng rng = make_rng(seed, 0x4d58);
  MixedSampleSet out;
  out.states.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    out.states.push_back(flow.sample(rng));
    if (with_density) {
      const MixedState& s = out.states.back();
      out.elbo_terms.push_back(flow.log_augmented_target(s) - flow.log_density(s));
    }
  }
  return out;
}

Estimate mixed_elbo(const MixedMixFlow& flow, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw MadmixError("mixed_elbo: need at least two samples");
  const MixedSampleSet set = mixed_sample_set(flow, n_samples, seed, true);
  return mean_and_se(set.elbo_terms);
}

}  // namespace madmix
