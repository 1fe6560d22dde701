#include "madmix/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "madmix/stats.hpp"

namespace madmix {

GibbsChain::GibbsChain(TargetPtr target, std::vector<int> initial, std::uint64_t seed)
    : target_(std::move(target)), state_(std::move(initial)), rng_(make_rng(seed, 0x6762)) {
  if (!target_) throw MadmixError("GibbsChain: null target");
  AugmentedState probe{state_, std::vector<double>(state_.size(), 0.0)};
  check_state(*target_, probe);
}

GibbsChain::GibbsChain(TargetPtr target, std::uint64_t seed)
    : target_(std::move(target)), rng_(make_rng(seed, 0x6762)) {
  if (!target_) throw MadmixError("GibbsChain: null target");
  state_.resize(target_->dimension());
  for (std::size_t m = 0; m < state_.size(); ++m) {
    state_[m] = static_cast<int>(rng_() % target_->support_size(m));
  }
}

const std::vector<int>& GibbsChain::sweep() {
  for (std::size_t m = 0; m < state_.size(); ++m) {
    target_->conditional_into(m, state_, scratch_);
    state_[m] = static_cast<int>(scratch_.sample(rng_));
  }
  ++sweeps_;
  return state_;
}

const std::vector<int>& gibbs_sweep(GibbsChain& chain) { return chain.sweep(); }

std::vector<std::size_t> gibbs_flat_samples(GibbsChain& chain, std::size_t n_sweeps,
                                            std::size_t burn_in) {
  for (std::size_t i = 0; i < burn_in; ++i) chain.sweep();
  std::vector<std::size_t> out;
  out.reserve(n_sweeps);
  for (std::size_t i = 0; i < n_sweeps; ++i) out.push_back(flatten_state(chain.target(), chain.sweep()));
  return out;
}

Eigen::VectorXd sample_dirichlet(Rng& rng, const Eigen::VectorXd& alpha) {
  Eigen::VectorXd g(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0)) throw MadmixError("sample_dirichlet: concentration must be positive");
    g[i] = std::max(gamma_draw(rng, alpha[i], 1.0), std::numeric_limits<double>::min());
  }
  return g / g.sum();
}

Eigen::VectorXd sample_mvn(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw MadmixError("sample_mvn: covariance not positive definite");
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(rng);
  return mean + llt.matrixL() * z;
}

Eigen::MatrixXd sample_inverse_wishart(Rng& rng, const Eigen::MatrixXd& scale, double dof) {
  const auto d = scale.rows();
  if (!(dof > static_cast<double>(d) - 1.0)) {
    throw MadmixError("sample_inverse_wishart: degrees of freedom must exceed D - 1");
  }
  Eigen::LLT<Eigen::MatrixXd> llt_s(scale);
  if (llt_s.info() != Eigen::Success) throw MadmixError("sample_inverse_wishart: scale not positive definite");
  const Eigen::MatrixXd inv_scale = llt_s.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd a = inv_scale.llt().matrixL();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    b(i, i) = std::sqrt(gamma_draw(rng, 0.5 * (dof - static_cast<double>(i)), 2.0));
    for (Eigen::Index j = 0; j < i; ++j) b(i, j) = standard_normal(rng);
  }
  const Eigen::MatrixXd ab = a * b;
  const Eigen::MatrixXd w = ab * ab.transpose();
  Eigen::MatrixXd sigma = w.llt().solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (sigma + sigma.transpose());
}

double sample_inverse_gamma(Rng& rng, const InvGammaLaw& law) {
  return 1.0 / gamma_draw(rng, law.shape, 1.0 / law.scale);
}

GmmGibbs::GmmGibbs(const GmmModel& model, std::uint64_t seed)
    : model_(model),
      params_(model.initial_params()),
      labels_(model.initial_labels()),
      rng_(make_rng(seed, 0x676962)) {}

void GmmGibbs::sweep() {
  const Eigen::MatrixXd table = model_.log_responsibility_table(params_);
  const auto k = static_cast<std::size_t>(table.cols());
  std::vector<double> row(k);
  std::vector<std::size_t> counts(k, 0);
  for (int l : labels_) ++counts[static_cast<std::size_t>(l)];
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    auto& label = labels_[static_cast<std::size_t>(i)];
    const auto current = static_cast<std::size_t>(label);
    if (counts[current] <= model_.min_cluster_size(current)) continue;
    for (std::size_t c = 0; c < k; ++c) row[c] = table(i, static_cast<Eigen::Index>(c));
    --counts[current];
    label = static_cast<int>(DiscretePMF::from_log_weights(row).sample(rng_));
    ++counts[static_cast<std::size_t>(label)];
  }
  const GmmStats s = model_.stats(labels_);
  params_.w = sample_dirichlet(rng_, model_.weight_conditional(s));
  for (std::size_t c = 0; c < k; ++c) {
    const auto [scatter, dof] = model_.covariance_conditional(s, c);
    params_.sigma[c] = sample_inverse_wishart(rng_, scatter, dof);
    const auto [mean, cov] = model_.mean_conditional(s, c, params_.sigma[c]);
    params_.mu[c] = sample_mvn(rng_, mean, cov);
  }
}

SpikeSlabGibbs::SpikeSlabGibbs(const SpikeSlabModel& model, std::uint64_t seed)
    : model_(model),
      params_(model.initial_params()),
      gamma_(model.n_coef(), 1),
      rng_(make_rng(seed, 0x737362)) {}

void SpikeSlabGibbs::sweep() {
  const std::size_t p = model_.n_coef();
  for (std::size_t j = 0; j < p; ++j) {
    const double odds = model_.gamma_log_odds(j, params_, gamma_);
    gamma_[j] = uniform01(rng_) < sigmoid(odds) ? 1 : 0;
    if (gamma_[j] == 1) {
      const auto [mean, var] = model_.coefficient_conditional(j, params_, gamma_);
      params_.beta[static_cast<Eigen::Index>(j)] = mean + std::sqrt(var) * standard_normal(rng_);
    } else {
      params_.beta[static_cast<Eigen::Index>(j)] = 0.0;
    }
  }
  const auto [mean, cov] = model_.beta_conditional(params_, gamma_);
  if (mean.size() > 0) {
    const Eigen::VectorXd draw = sample_mvn(rng_, mean, cov);
    Eigen::Index idx = 0;
    for (std::size_t j = 0; j < p; ++j) {
      if (gamma_[j] == 1) params_.beta[static_cast<Eigen::Index>(j)] = draw[idx++];
    }
  }
  params_.tau2 = sample_inverse_gamma(rng_, model_.tau2_conditional(params_, gamma_));
  if (model_.hyper().printed_sigma_conditional) {
    const auto [shape, rate] = model_.sigma2_printed_conditional(params_, gamma_);
    params_.sigma2 = gamma_draw(rng_, shape, 1.0 / rate);
  } else {
    params_.sigma2 = sample_inverse_gamma(rng_, model_.sigma2_conditional(params_, gamma_));
  }
  const auto [a, b] = model_.theta_conditional(gamma_);
  params_.theta = std::clamp(beta_draw(rng_, a, b), 1e-12, 1.0 - 1e-12);
}

double MeanFieldApprox::log_prob(std::span<const int> x) const {
  if (x.size() != factors.size()) throw MadmixError("MeanFieldApprox: state has wrong length");
  double lp = 0.0;
  for (std::size_t m = 0; m < x.size(); ++m) lp += factors[m].log_prob(static_cast<std::size_t>(x[m]));
  return lp;
}

DiscretePMF MeanFieldApprox::flattened() const {
  std::size_t total = 1;
  for (const auto& f : factors) {
    if (total > (std::size_t{1} << 24) / f.size()) throw MadmixError("MeanFieldApprox: too many states");
    total *= f.size();
  }
  std::vector<double> probs(total);
  std::vector<int> x(factors.size(), 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (std::size_t m = factors.size(); m-- > 0;) {
      x[m] = static_cast<int>(rest % factors[m].size());
      rest /= factors[m].size();
    }
    probs[idx] = std::exp(log_prob(x));
  }
  return DiscretePMF::from_weights(probs);
}

double mean_field_elbo(const FullConditionalTarget& target, std::span<const DiscretePMF> factors) {
  double entropy = 0.0;
  for (const auto& f : factors) {
    for (double p : f.probs()) {
      if (p > 0.0) entropy -= p * std::log(p);
    }
  }
  return target.mean_field_expected_log_mass(factors) + entropy;
}

MeanFieldApprox cavi_fit(const FullConditionalTarget& target, std::size_t max_iters, double tol) {
  if (!target.has_log_mass()) throw MadmixError("cavi_fit: target has no log-mass");
  MeanFieldApprox q;
  for (std::size_t m = 0; m < target.dimension(); ++m) {
    std::vector<double> w(target.support_size(m), 1.0);
    q.factors.push_back(DiscretePMF::from_weights(w));
  }
  double current = mean_field_elbo(target, q.factors);
  q.elbo_trace.push_back(current);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    const double sweep_start = current;
    for (std::size_t m = 0; m < target.dimension(); ++m) {
      const std::vector<double> e = target.mean_field_expectation(m, q.factors);
      q.factors[m] = DiscretePMF::from_log_weights(e);
      const double next = mean_field_elbo(target, q.factors);
      const double drop = current - next;
      if (drop > 1e-10 * (1.0 + std::abs(current))) q.monotone = false;
      q.max_decrease = std::max(q.max_decrease, drop);
      current = next;
      q.elbo_trace.push_back(current);
    }
    q.iterations = iter + 1;
    if (std::abs(current - sweep_start) < tol) {
      q.converged = true;
      break;
    }
  }
  q.elbo = current;
  return q;
}

EmpiricalPmf empirical_pmf(std::span<const std::size_t> flat_samples, std::size_t n_states) {
  if (flat_samples.empty()) throw MadmixError("empirical_pmf: empty sample set");
  if (n_states == 0) throw MadmixError("empirical_pmf: empty support");
  EmpiricalPmf out;
  out.n_samples = flat_samples.size();
  out.raw.assign(n_states, 0.0);
  for (std::size_t s : flat_samples) {
    if (s >= n_states) throw MadmixError("empirical_pmf: sample outside support");
    out.raw[s] += 1.0;
  }
  const double n = static_cast<double>(flat_samples.size());
  std::vector<double> smoothed(n_states);
  for (std::size_t i = 0; i < n_states; ++i) {
    out.raw[i] /= n;
    smoothed[i] = out.raw[i] > 0.0 ? out.raw[i] : 1.0 / (2.0 * n);
  }
  out.smoothed = DiscretePMF::from_weights(smoothed);
  return out;
}

double kl_to_target(std::span<const double> pmf, const DiscretePMF& exact) {
  if (pmf.size() != exact.size()) throw MadmixError("kl_to_target: support sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const double t = exact.prob(i);
    if (!(t > 0.0)) throw MadmixError("kl_to_target: target atom with zero mass");
    if (pmf[i] > 0.0) kl += pmf[i] * (std::log(pmf[i]) - std::log(t));
  }
  return std::max(kl, 0.0);
}

double kl_to_target(const DiscretePMF& pmf, const DiscretePMF& exact) {
  return kl_to_target(pmf.probs(), exact);
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MadmixError("total_variation: support sizes differ");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

double total_variation(const DiscretePMF& a, const DiscretePMF& b) {
  return total_variation(a.probs(), b.probs());
}

DiscretePMF RecordingTarget::conditional(std::size_t m, std::span<const int> x) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(m);
  }
  return inner_->conditional(m, x);
}

void RecordingTarget::conditional_into(std::size_t m, std::span<const int> x,
                                       DiscretePMF& out) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.push_back(m);
  }
  inner_->conditional_into(m, x, out);
}

std::vector<std::size_t> RecordingTarget::take_log() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::size_t> out;
  out.swap(log_);
  return out;
}

}  // namespace madmix
