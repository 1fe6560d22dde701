#include "madmix/models/spikeslab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "madmix/stats.hpp"

namespace madmix {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

std::size_t active_count(std::span<const int> gamma) {
  return static_cast<std::size_t>(std::count(gamma.begin(), gamma.end(), 1));
}

double binary_prob(double log_odds) { return std::clamp(sigmoid(log_odds), 1e-300, 1.0 - 0x1p-53); }

}  // namespace

SpikeSlabModel::SpikeSlabModel(Eigen::MatrixXd x, Eigen::VectorXd y, SpikeSlabHyper hyper)
    : x_(std::move(x)), y_(std::move(y)), hyper_(hyper) {
  if (x_.rows() < 1 || x_.cols() < 1) throw MadmixError("SpikeSlabModel: empty design");
  if (x_.rows() != y_.size()) throw MadmixError("SpikeSlabModel: X and y row counts differ");
  if (!x_.allFinite() || !y_.allFinite()) throw MadmixError("SpikeSlabModel: non-finite data");
  if (!(hyper_.alpha1 > 0 && hyper_.alpha2 > 0 && hyper_.s2 > 0 && hyper_.a > 0 && hyper_.b > 0)) {
    throw MadmixError("SpikeSlabModel: hyperparameters must be positive");
  }
  col_norm2_ = x_.colwise().squaredNorm().transpose();
}

SpikeSlabParams SpikeSlabModel::unpack(const Eigen::VectorXd& xc) const {
  if (xc.size() != static_cast<Eigen::Index>(continuous_dim())) {
    throw MadmixError("SpikeSlabModel: continuous state has wrong length");
  }
  SpikeSlabParams p;
  p.theta = sigmoid(xc[0]);
  p.tau2 = std::exp(xc[1]);
  p.sigma2 = std::exp(xc[2]);
  p.beta = xc.tail(static_cast<Eigen::Index>(n_coef()));
  return p;
}

Eigen::VectorXd SpikeSlabModel::pack(const SpikeSlabParams& p) const {
  if (p.beta.size() != static_cast<Eigen::Index>(n_coef())) {
    throw MadmixError("SpikeSlabModel: beta has wrong length");
  }
  Eigen::VectorXd xc(static_cast<Eigen::Index>(continuous_dim()));
  xc[0] = std::log(p.theta) - std::log1p(-p.theta);
  xc[1] = std::log(p.tau2);
  xc[2] = std::log(p.sigma2);
  xc.tail(static_cast<Eigen::Index>(n_coef())) = p.beta;
  return xc;
}

double SpikeSlabModel::rss(const SpikeSlabParams& p, std::span<const int> gamma) const {
  Eigen::VectorXd r = y_;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (gamma[j] == 1) r -= x_.col(static_cast<Eigen::Index>(j)) * p.beta[static_cast<Eigen::Index>(j)];
  }
  return r.squaredNorm();
}

double SpikeSlabModel::log_posterior(const SpikeSlabParams& p, std::span<const int> gamma) const {
  if (gamma.size() != n_coef()) throw MadmixError("SpikeSlabModel: gamma has wrong length");
  const double n = static_cast<double>(n_obs());
  const double k = static_cast<double>(active_count(gamma));
  const double pp = static_cast<double>(n_coef());
  double lp = (k + hyper_.a - 1.0) * std::log(p.theta) + (pp - k + hyper_.b - 1.0) * std::log1p(-p.theta);
  double beta2 = 0.0;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (gamma[j] == 1) beta2 += p.beta[static_cast<Eigen::Index>(j)] * p.beta[static_cast<Eigen::Index>(j)];
  }
  lp += -0.5 * k * (kLog2Pi + std::log(p.sigma2 * p.tau2)) - beta2 / (2.0 * p.sigma2 * p.tau2);
  lp += -0.5 * n * (kLog2Pi + std::log(p.sigma2)) - rss(p, gamma) / (2.0 * p.sigma2);
  lp += 0.5 * std::log(0.5 * hyper_.s2) - std::lgamma(0.5) - 1.5 * std::log(p.tau2) -
        0.5 * hyper_.s2 / p.tau2;
  lp += hyper_.alpha1 * std::log(hyper_.alpha2) - std::lgamma(hyper_.alpha1) -
        (hyper_.alpha1 + 1.0) * std::log(p.sigma2) - hyper_.alpha2 / p.sigma2;
  return lp;
}

double SpikeSlabModel::log_density(const Eigen::VectorXd& xc, std::span<const int> xd) const {
  const SpikeSlabParams p = unpack(xc);
  double lp = log_posterior(p, xd);
  lp += std::log(p.theta) + std::log1p(-p.theta) + xc[1] + xc[2];
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (xd[j] != 1) {
      const double b = p.beta[static_cast<Eigen::Index>(j)];
      lp += -0.5 * (kLog2Pi + b * b);
    }
  }
  return lp;
}

Eigen::VectorXd SpikeSlabModel::score(const Eigen::VectorXd& xc, std::span<const int> xd) const {
  const SpikeSlabParams p = unpack(xc);
  if (xd.size() != n_coef()) throw MadmixError("SpikeSlabModel: gamma has wrong length");
  const double n = static_cast<double>(n_obs());
  const double k = static_cast<double>(active_count(xd));
  const double pp = static_cast<double>(n_coef());
  Eigen::VectorXd r = y_;
  double beta2 = 0.0;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (xd[j] == 1) {
      const double b = p.beta[static_cast<Eigen::Index>(j)];
      r -= x_.col(static_cast<Eigen::Index>(j)) * b;
      beta2 += b * b;
    }
  }
  const double rs = r.squaredNorm();
  Eigen::VectorXd g(xc.size());
  g[0] = (k + hyper_.a) * (1.0 - p.theta) - (pp - k + hyper_.b) * p.theta;
  g[1] = -0.5 * (1.0 + k) + (0.5 * hyper_.s2 + beta2 / (2.0 * p.sigma2)) / p.tau2;
  g[2] = -0.5 * n - 0.5 * k - hyper_.alpha1 +
         (0.5 * rs + beta2 / (2.0 * p.tau2) + hyper_.alpha2) / p.sigma2;
  const Eigen::VectorXd xtr = x_.transpose() * r;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    g[3 + i] = xd[j] == 1 ? xtr[i] / p.sigma2 - p.beta[i] / (p.sigma2 * p.tau2) : -p.beta[i];
  }
  return g;
}

Eigen::VectorXd SpikeSlabModel::compact_score(const Eigen::VectorXd& xc,
                                              std::span<const int> gamma) const {
  const Eigen::VectorXd full = score(xc, gamma);
  Eigen::VectorXd out(static_cast<Eigen::Index>(3 + active_count(gamma)));
  out.head(3) = full.head(3);
  Eigen::Index idx = 3;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (gamma[j] == 1) out[idx++] = full[3 + static_cast<Eigen::Index>(j)];
  }
  return out;
}

double SpikeSlabModel::gamma_log_odds(std::size_t p, const SpikeSlabParams& params,
                                      std::span<const int> gamma) const {
  if (p >= n_coef()) throw MadmixError("SpikeSlabModel: coefficient index out of range");
  Eigen::VectorXd z = y_;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (j != p && gamma[j] == 1) {
      z -= x_.col(static_cast<Eigen::Index>(j)) * params.beta[static_cast<Eigen::Index>(j)];
    }
  }
  const double xz = x_.col(static_cast<Eigen::Index>(p)).dot(z);
  const double c = col_norm2_[static_cast<Eigen::Index>(p)] + 1.0 / params.tau2;
  return std::log(params.theta) - std::log1p(-params.theta) - 0.5 * std::log(params.tau2) -
         0.5 * std::log(c) + xz * xz / (2.0 * params.sigma2 * c);
}

DiscretePMF SpikeSlabModel::gamma_conditional(std::size_t p, const SpikeSlabParams& params,
                                              std::span<const int> gamma) const {
  DiscretePMF out;
  out.assign_binary(binary_prob(gamma_log_odds(p, params, gamma)));
  return out;
}

std::pair<double, double> SpikeSlabModel::coefficient_conditional(
    std::size_t p, const SpikeSlabParams& params, std::span<const int> gamma) const {
  Eigen::VectorXd z = y_;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (j != p && gamma[j] == 1) {
      z -= x_.col(static_cast<Eigen::Index>(j)) * params.beta[static_cast<Eigen::Index>(j)];
    }
  }
  const double c = col_norm2_[static_cast<Eigen::Index>(p)] + 1.0 / params.tau2;
  return {x_.col(static_cast<Eigen::Index>(p)).dot(z) / c, params.sigma2 / c};
}

InvGammaLaw SpikeSlabModel::tau2_conditional(const SpikeSlabParams& p,
                                             std::span<const int> gamma) const {
  double beta2 = 0.0;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (gamma[j] == 1) beta2 += p.beta[static_cast<Eigen::Index>(j)] * p.beta[static_cast<Eigen::Index>(j)];
  }
  const double k = static_cast<double>(active_count(gamma));
  return {0.5 + 0.5 * k, 0.5 * hyper_.s2 + beta2 / (2.0 * p.sigma2)};
}

InvGammaLaw SpikeSlabModel::sigma2_conditional(const SpikeSlabParams& p,
                                               std::span<const int> gamma) const {
  double beta2 = 0.0;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (gamma[j] == 1) beta2 += p.beta[static_cast<Eigen::Index>(j)] * p.beta[static_cast<Eigen::Index>(j)];
  }
  const double k = static_cast<double>(active_count(gamma));
  const double n = static_cast<double>(n_obs());
  return {hyper_.alpha1 + 0.5 * (n + k),
          hyper_.alpha2 + 0.5 * rss(p, gamma) + beta2 / (2.0 * p.tau2)};
}

std::pair<double, double> SpikeSlabModel::sigma2_printed_conditional(
    const SpikeSlabParams& p, std::span<const int> gamma) const {
  const double n = static_cast<double>(n_obs());
  return {hyper_.alpha1 + 0.5 * n, hyper_.alpha2 + 0.5 * rss(p, gamma)};
}

std::pair<double, double> SpikeSlabModel::theta_conditional(std::span<const int> gamma) const {
  const double k = static_cast<double>(active_count(gamma));
  return {hyper_.a + k, hyper_.b + static_cast<double>(n_coef()) - k};
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> SpikeSlabModel::beta_conditional(
    const SpikeSlabParams& p, std::span<const int> gamma) const {
  std::vector<Eigen::Index> active;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    if (gamma[j] == 1) active.push_back(static_cast<Eigen::Index>(j));
  }
  const auto k = static_cast<Eigen::Index>(active.size());
  if (k == 0) return {Eigen::VectorXd(), Eigen::MatrixXd()};
  Eigen::MatrixXd xa(x_.rows(), k);
  for (Eigen::Index i = 0; i < k; ++i) xa.col(i) = x_.col(active[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd ridge = xa.transpose() * xa;
  ridge.diagonal().array() += 1.0 / p.tau2;
  Eigen::LLT<Eigen::MatrixXd> llt(ridge);
  if (llt.info() != Eigen::Success) throw MadmixError("SpikeSlabModel: singular ridge matrix");
  const Eigen::MatrixXd h = p.sigma2 * llt.solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::VectorXd mean = llt.solve(xa.transpose() * y_);
  return {mean, h};
}

DiscretePMF SpikeSlabModel::discrete_conditional(std::size_t m, const Eigen::VectorXd& xc,
                                                 std::span<const int> xd) const {
  return gamma_conditional(m, unpack(xc), xd);
}

void SpikeSlabModel::dynamic_mask(std::span<const int> xd, std::vector<char>& mask) const {
  mask.assign(continuous_dim(), 1);
  for (std::size_t j = 0; j < n_coef(); ++j) mask[3 + j] = xd[j] == 1 ? 1 : 0;
}

std::vector<Transform> SpikeSlabModel::transforms() const {
  std::vector<Transform> t{Transform::Logit, Transform::Log, Transform::Log};
  t.insert(t.end(), n_coef(), Transform::Identity);
  return t;
}

std::vector<std::string> SpikeSlabModel::continuous_names() const {
  std::vector<std::string> names{"theta_u", "log_tau2", "log_sigma2"};
  for (std::size_t j = 0; j < n_coef(); ++j) names.push_back("beta" + std::to_string(j));
  return names;
}

Eigen::VectorXd SpikeSlabModel::least_squares() const {
  return x_.colPivHouseholderQr().solve(y_);
}

SpikeSlabParams SpikeSlabModel::initial_params() const {
  SpikeSlabParams p;
  p.beta = least_squares();
  const double resid = (y_ - x_ * p.beta).squaredNorm();
  const double dof = std::max(1.0, static_cast<double>(n_obs()) - static_cast<double>(n_coef()));
  p.sigma2 = std::max(resid / dof, 1e-8);
  p.tau2 = 1.0;
  p.theta = 0.5;
  return p;
}

MixedReferencePtr SpikeSlabModel::default_reference(double scale, MomentumBase momentum) const {
  const SpikeSlabParams p0 = initial_params();
  const std::vector<int> all_in(n_coef(), 1);
  std::vector<DiscretePMF> factors;
  for (std::size_t j = 0; j < n_coef(); ++j) {
    const double p1 = binary_prob(gamma_log_odds(j, p0, all_in));
    DiscretePMF f;
    f.assign_binary(0.9 * p1 + 0.05);
    factors.push_back(f);
  }
  const Eigen::VectorXd center = pack(p0);
  return std::make_shared<MixedReference>(center, Eigen::VectorXd::Constant(center.size(), scale),
                                          std::move(factors), momentum);
}

RegressionDataset synthetic_regression(std::size_t n, std::size_t p, std::size_t n_nonzero,
                                       double snr, std::uint64_t seed) {
  if (n < 1 || p < 1 || n_nonzero > p || !(snr > 0.0)) {
    throw MadmixError("synthetic_regression: invalid sizes or SNR");
  }
  Rng rng = make_rng(seed, 0x7373);
  RegressionDataset d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) d.x(i, j) = standard_normal(rng);
  }
  d.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  if (n_nonzero > 0) {
    const double mag = std::sqrt(snr / static_cast<double>(n_nonzero));
    for (std::size_t j = 0; j < n_nonzero; ++j) {
      d.beta[static_cast<Eigen::Index>(j)] = (j % 2 == 0 ? 1.0 : -1.0) * mag;
    }
  }
  d.noise_sd = 1.0;
  d.y = d.x * d.beta;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y[i] += d.noise_sd * standard_normal(rng);
  return d;
}

}  // namespace madmix
