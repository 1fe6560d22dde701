#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <mutex>
#include <vector>

#include "madmix/discrete_core.hpp"
#include "madmix/models/gmm.hpp"
#include "madmix/models/spikeslab.hpp"

namespace madmix {

/// Sequential-scan Gibbs sampler on a discrete target.
class GibbsChain {
 public:
  GibbsChain(TargetPtr target, std::vector<int> initial, std::uint64_t seed);
  /// Starts from a uniform random state.
  GibbsChain(TargetPtr target, std::uint64_t seed);

  /// One sweep m = 0..M-1, each coordinate drawn given the latest values.
  const std::vector<int>& sweep();
  const std::vector<int>& state() const { return state_; }
  std::size_t sweeps() const { return sweeps_; }
  const FullConditionalTarget& target() const { return *target_; }

 private:
  TargetPtr target_;
  std::vector<int> state_;
  Rng rng_;
  std::size_t sweeps_ = 0;
  DiscretePMF scratch_;
};

const std::vector<int>& gibbs_sweep(GibbsChain& chain);

/// Flattened indices of `n_sweeps` successive Gibbs states after `burn_in` sweeps.
std::vector<std::size_t> gibbs_flat_samples(GibbsChain& chain, std::size_t n_sweeps,
                                            std::size_t burn_in = 0);

// Conjugate draws used by the mixed-model samplers.
Eigen::VectorXd sample_dirichlet(Rng& rng, const Eigen::VectorXd& alpha);
Eigen::VectorXd sample_mvn(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
/// Sigma^{-1} ~ Wishart(scale^{-1}, dof) by the Bartlett decomposition.
Eigen::MatrixXd sample_inverse_wishart(Rng& rng, const Eigen::MatrixXd& scale, double dof);
double sample_inverse_gamma(Rng& rng, const InvGammaLaw& law);

/// Blocked Gibbs for the mixture: labels, weights, covariances with means
/// integrated out, then means. Labels are drawn one at a time on the region
/// where every cluster keeps at least min_cluster_size points, outside of
/// which the posterior is improper.
class GmmGibbs {
 public:
  GmmGibbs(const GmmModel& model, std::uint64_t seed);
  void sweep();
  const GmmParams& params() const { return params_; }
  const std::vector<int>& labels() const { return labels_; }
  Eigen::VectorXd packed() const { return model_.pack(params_); }

 private:
  const GmmModel& model_;
  GmmParams params_;
  std::vector<int> labels_;
  Rng rng_;
};

/// Gibbs for spike-and-slab regression with gamma_p drawn with beta_p
/// integrated out, followed by beta_p | gamma_p.
class SpikeSlabGibbs {
 public:
  SpikeSlabGibbs(const SpikeSlabModel& model, std::uint64_t seed);
  void sweep();
  const SpikeSlabParams& params() const { return params_; }
  const std::vector<int>& gamma() const { return gamma_; }

 private:
  const SpikeSlabModel& model_;
  SpikeSlabParams params_;
  std::vector<int> gamma_;
  Rng rng_;
};

struct MeanFieldApprox {
  std::vector<DiscretePMF> factors;
  double elbo = 0.0;
  std::vector<double> elbo_trace;  ///< ELBO after every coordinate update
  std::size_t iterations = 0;
  bool converged = false;
  bool monotone = true;
  double max_decrease = 0.0;

  double log_prob(std::span<const int> x) const;
  /// Flattened product PMF (coordinate 0 most significant).
  DiscretePMF flattened() const;
};

/// Coordinate ascent q_m(x_m) ∝ exp(E_{q_-m}[log p(x)]) from uniform factors,
/// stopping once a full sweep changes the ELBO by less than `tol`.
MeanFieldApprox cavi_fit(const FullConditionalTarget& target, std::size_t max_iters = 200,
                         double tol = 1e-12);
/// E_q[log p(x)] + H(q) under the target's unnormalized log-mass.
double mean_field_elbo(const FullConditionalTarget& target, std::span<const DiscretePMF> factors);

struct EmpiricalPmf {
  DiscretePMF smoothed;     ///< counts with 1/(2n) added to empty atoms, renormalized
  std::vector<double> raw;  ///< plain frequencies
  std::size_t n_samples = 0;
};

EmpiricalPmf empirical_pmf(std::span<const std::size_t> flat_samples, std::size_t n_states);
/// KL(p || exact); every exact atom must be positive.
double kl_to_target(std::span<const double> pmf, const DiscretePMF& exact);
double kl_to_target(const DiscretePMF& pmf, const DiscretePMF& exact);
double total_variation(std::span<const double> a, std::span<const double> b);
double total_variation(const DiscretePMF& a, const DiscretePMF& b);

/// Forwards to a target and logs the coordinate index of every conditional call.
class RecordingTarget final : public FullConditionalTarget {
 public:
  explicit RecordingTarget(TargetPtr inner) : inner_(std::move(inner)) {}
  std::size_t dimension() const override { return inner_->dimension(); }
  std::size_t support_size(std::size_t m) const override { return inner_->support_size(m); }
  DiscretePMF conditional(std::size_t m, std::span<const int> x) const override;
  void conditional_into(std::size_t m, std::span<const int> x, DiscretePMF& out) const override;
  bool has_log_mass() const override { return inner_->has_log_mass(); }
  double unnormalized_log_mass(std::span<const int> x) const override {
    return inner_->unnormalized_log_mass(x);
  }
  std::vector<std::size_t> take_log() const;

 private:
  TargetPtr inner_;
  mutable std::mutex mutex_;
  mutable std::vector<std::size_t> log_;
};

}  // namespace madmix
