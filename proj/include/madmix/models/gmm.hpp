#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "madmix/mixed_flow.hpp"

namespace madmix {

/// Lower-triangular packing order used for H-matrices:
/// (0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...
std::size_t packed_size(std::size_t d);
Eigen::VectorXd pack_lower(const Eigen::MatrixXd& lower);
Eigen::MatrixXd unpack_lower(const Eigen::Ref<const Eigen::VectorXd>& packed, std::size_t d);

/// H-matrix: Cholesky factor with log-transformed diagonal.
Eigen::MatrixXd h_to_cholesky(const Eigen::MatrixXd& h);
Eigen::MatrixXd cholesky_to_h(const Eigen::MatrixXd& l);
Eigen::MatrixXd h_to_covariance(const Eigen::MatrixXd& h);
Eigen::MatrixXd covariance_to_h(const Eigen::MatrixXd& sigma);
/// log |d Sigma / d H| = sum_d (D - d + 2) H_dd + D log 2 with 1-based d.
double h_log_jacobian(const Eigen::MatrixXd& h);

/// K_D with K vec(A) = vec(A^T) (column-major vec).
Eigen::MatrixXd commutation_matrix(std::size_t d);
/// d vec(L L^T) / d vec(L) = (I + K_D)(L (x) I_D).
Eigen::MatrixXd cholesky_product_jacobian(const Eigen::MatrixXd& l);
/// Packed gradient in H of f(Sigma(H)) given G = d f / d Sigma, via the
/// Kronecker chain rule with the diagonal exp-scaling. Log-Jacobian not included.
Eigen::VectorXd covariance_gradient_to_h(const Eigen::MatrixXd& h, const Eigen::MatrixXd& g);

struct GmmHyper {
  std::vector<double> alpha;           ///< Dirichlet concentration per component
  std::vector<Eigen::VectorXd> m0;     ///< initial means
  std::vector<Eigen::MatrixXd> s0;     ///< initial covariances
  std::vector<double> nu0;             ///< recorded; enters through the |Sigma|^{-nu0/2} factor
};

struct GmmParams {
  Eigen::VectorXd w;
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> sigma;
};

struct GmmStats {
  Eigen::VectorXd counts;
  std::vector<Eigen::VectorXd> ybar;     ///< zero for empty components
  std::vector<Eigen::MatrixXd> scatter;  ///< sum_n (y_n - ybar)(y_n - ybar)^T
};

/// Finite Gaussian mixture with labels as the discrete block and
/// (softmax weights, means, H-matrices) as the continuous block.
///
/// log p = sum_n [log w_{x_n} + log N(y_n; mu_{x_n}, Sigma_{x_n})]
///         + sum_k (alpha_k - 1) log w_k - (nu0_k / 2) log |Sigma_k|.
class GmmModel final : public MixedTarget {
 public:
  /// `y` is N x D. Default hyperparameters use k-means++ seeded with `seed`.
  GmmModel(Eigen::MatrixXd y, std::size_t k, std::uint64_t seed = 0);
  GmmModel(Eigen::MatrixXd y, std::size_t k, GmmHyper hyper);

  static GmmHyper default_hyper(const Eigen::MatrixXd& y, std::size_t k, std::uint64_t seed);

  std::size_t n_obs() const { return static_cast<std::size_t>(y_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(y_.cols()); }
  std::size_t n_components() const { return k_; }
  const Eigen::MatrixXd& data() const { return y_; }
  const GmmHyper& hyper() const { return hyper_; }

  GmmStats stats(std::span<const int> labels) const;

  // Exact full conditionals.
  DiscretePMF label_conditional(std::size_t n, const GmmParams& params) const;
  Eigen::VectorXd weight_conditional(const GmmStats& stats) const;
  /// Inverse-Wishart (scale, dof) for Sigma_k with mu_k integrated out.
  std::pair<Eigen::MatrixXd, double> covariance_conditional(const GmmStats& stats,
                                                            std::size_t k) const;
  /// Smallest N_k for which covariance_conditional is a proper law.
  std::size_t min_cluster_size(std::size_t k) const;
  /// Normal (mean, covariance) of mu_k given Sigma_k.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_conditional(const GmmStats& stats,
                                                               std::size_t k,
                                                               const Eigen::MatrixXd& sigma) const;

  /// Log joint in constrained coordinates (no reparametrization Jacobian).
  double log_joint(const GmmParams& params, std::span<const int> labels) const;
  /// d log_joint / d w_k holding the other weights fixed.
  Eigen::VectorXd raw_weight_score(const GmmParams& params, const GmmStats& stats) const;
  Eigen::VectorXd raw_mean_score(const GmmParams& params, const GmmStats& stats,
                                 std::size_t k) const;
  /// d log_joint / d Sigma_k treating entries as free.
  Eigen::MatrixXd raw_covariance_score(const GmmParams& params, const GmmStats& stats,
                                       std::size_t k) const;

  /// (v_1..v_{K-1}, mu_1..mu_K, H_1..H_K) with w = softmax(v, 0).
  Eigen::VectorXd pack(const GmmParams& params) const;
  GmmParams unpack(const Eigen::VectorXd& xc) const;

  GmmParams initial_params() const;
  /// Posterior mode with labels summed out, by EM from initial_params().
  GmmParams map_params(std::size_t max_iters = 500) const;
  std::vector<int> initial_labels() const;
  /// Reference centred at map_params(); label factors are the
  /// responsibilities there mixed 999:1 with uniform.
  MixedReferencePtr default_reference(double scale = 0.1, MomentumBase momentum = {}) const;

  std::size_t continuous_dim() const override;
  std::size_t discrete_dim() const override { return n_obs(); }
  std::size_t support_size(std::size_t) const override { return k_; }
  double log_density(const Eigen::VectorXd& xc, std::span<const int> xd) const override;
  Eigen::VectorXd score(const Eigen::VectorXd& xc, std::span<const int> xd) const override;
  DiscretePMF discrete_conditional(std::size_t m, const Eigen::VectorXd& xc,
                                   std::span<const int> xd) const override;
  TargetPtr discrete_slice(const Eigen::VectorXd& xc) const override;
  std::vector<Transform> transforms() const override;
  std::vector<std::string> continuous_names() const override;

  /// N x K table of log w_k + log N(y_n; mu_k, Sigma_k).
  Eigen::MatrixXd log_responsibility_table(const GmmParams& params) const;

 private:
  void validate() const;

  Eigen::MatrixXd y_;
  std::size_t k_;
  GmmHyper hyper_;
};

struct GmmDataset {
  Eigen::MatrixXd y;
  std::vector<int> labels;
};

/// Draws N points from a K-component mixture with means on a circle of
/// radius `separation` and identity-scaled covariances.
GmmDataset synthetic_gmm(std::size_t n, std::size_t k, std::size_t d, double separation,
                         std::uint64_t seed);

/// Numeric CSV with one observation per row; a non-numeric first row is
/// treated as a header.
Eigen::MatrixXd load_csv_matrix(const std::string& path);

}  // namespace madmix
