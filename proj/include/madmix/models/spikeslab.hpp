#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "madmix/mixed_flow.hpp"

namespace madmix {

struct SpikeSlabHyper {
  double alpha1 = 0.1;  ///< sigma^2 ~ InvGamma(alpha1, alpha2)
  double alpha2 = 0.1;
  double s2 = 0.5;      ///< tau^2 ~ InvGamma(1/2, s2 / 2)
  double a = 1.0;       ///< theta ~ Beta(a, b)
  double b = 1.0;
  /// Sample sigma^2 from Gamma(alpha1 + N/2, rate alpha2 + RSS/2) instead of
  /// the conjugate inverse-gamma conditional.
  bool printed_sigma_conditional = false;
};

struct SpikeSlabParams {
  double theta = 0.5;
  double tau2 = 1.0;
  double sigma2 = 1.0;
  Eigen::VectorXd beta;  ///< length P; only entries with gamma_p = 1 enter the likelihood
};

/// Shape and scale of an inverse-gamma law.
struct InvGammaLaw {
  double shape = 1.0;
  double scale = 1.0;
};

/// y ~ N(X_A beta_A, sigma^2 I), beta_p | gamma_p = 1 ~ N(0, sigma^2 tau^2),
/// gamma_p ~ Bern(theta).
///
/// Continuous block: (logit theta, log tau^2, log sigma^2, beta_1..beta_P).
/// Discrete block: gamma_1..gamma_P. Coefficients with gamma_p = 0 carry an
/// independent N(0, 1) pseudo-prior and are held fixed by the Hamiltonian step.
/// The gamma conditionals integrate beta_p out.
class SpikeSlabModel final : public MixedTarget {
 public:
  SpikeSlabModel(Eigen::MatrixXd x, Eigen::VectorXd y, SpikeSlabHyper hyper = {});

  std::size_t n_obs() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t n_coef() const { return static_cast<std::size_t>(x_.cols()); }
  const SpikeSlabHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& design() const { return x_; }
  const Eigen::VectorXd& response() const { return y_; }

  SpikeSlabParams unpack(const Eigen::VectorXd& xc) const;
  Eigen::VectorXd pack(const SpikeSlabParams& p) const;

  /// Log posterior in natural coordinates (no pseudo-prior, no Jacobian).
  double log_posterior(const SpikeSlabParams& p, std::span<const int> gamma) const;
  /// Residual sum of squares using the active coefficients.
  double rss(const SpikeSlabParams& p, std::span<const int> gamma) const;

  /// log P(gamma_p = 1 | rest) - log P(gamma_p = 0 | rest) with beta_p integrated out.
  double gamma_log_odds(std::size_t p, const SpikeSlabParams& params,
                        std::span<const int> gamma) const;
  DiscretePMF gamma_conditional(std::size_t p, const SpikeSlabParams& params,
                                std::span<const int> gamma) const;
  /// beta_p | gamma_p = 1, rest: N(x_p^T z_p / c, sigma^2 / c), c = x_p^T x_p + 1/tau^2.
  std::pair<double, double> coefficient_conditional(std::size_t p, const SpikeSlabParams& params,
                                                    std::span<const int> gamma) const;
  InvGammaLaw tau2_conditional(const SpikeSlabParams& p, std::span<const int> gamma) const;
  InvGammaLaw sigma2_conditional(const SpikeSlabParams& p, std::span<const int> gamma) const;
  /// The printed alternative: Gamma(shape, rate) for sigma^2.
  std::pair<double, double> sigma2_printed_conditional(const SpikeSlabParams& p,
                                                       std::span<const int> gamma) const;
  std::pair<double, double> theta_conditional(std::span<const int> gamma) const;
  /// Active-block beta | rest: N(H X_A^T y / sigma^2, H), H = sigma^2 (X_A^T X_A + tau^-2 I)^-1.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> beta_conditional(const SpikeSlabParams& p,
                                                               std::span<const int> gamma) const;

  /// Gradient over (theta_u, log tau^2, log sigma^2, beta_A) of the
  /// reparametrized log posterior; length 3 + |A|.
  Eigen::VectorXd compact_score(const Eigen::VectorXd& xc, std::span<const int> gamma) const;

  Eigen::VectorXd least_squares() const;
  SpikeSlabParams initial_params() const;
  MixedReferencePtr default_reference(double scale = 0.1, MomentumBase momentum = {}) const;

  std::size_t continuous_dim() const override { return 3 + n_coef(); }
  std::size_t discrete_dim() const override { return n_coef(); }
  std::size_t support_size(std::size_t) const override { return 2; }
  double log_density(const Eigen::VectorXd& xc, std::span<const int> xd) const override;
  Eigen::VectorXd score(const Eigen::VectorXd& xc, std::span<const int> xd) const override;
  DiscretePMF discrete_conditional(std::size_t m, const Eigen::VectorXd& xc,
                                   std::span<const int> xd) const override;
  void dynamic_mask(std::span<const int> xd, std::vector<char>& mask) const override;
  std::vector<Transform> transforms() const override;
  std::vector<std::string> continuous_names() const override;

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  SpikeSlabHyper hyper_;
  Eigen::VectorXd col_norm2_;
};

struct RegressionDataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd beta;  ///< true coefficients
  double noise_sd = 1.0;
};

/// Standard-normal design; the first `n_nonzero` coefficients are nonzero
/// with alternating signs and magnitudes set so Var(X beta) / noise^2 = snr.
RegressionDataset synthetic_regression(std::size_t n, std::size_t p, std::size_t n_nonzero,
                                       double snr, std::uint64_t seed);

}  // namespace madmix
