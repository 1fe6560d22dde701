#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "madmix/discrete_core.hpp"
#include "madmix/mad_map.hpp"
#include "madmix/stats.hpp"

namespace madmix {

/// How a continuous coordinate maps back to the model's natural parameter.
enum class Transform { Identity, Log, Logit, SoftmaxWeight, CholeskyLogDiag, CholeskyOffDiag };

/// Target on X_c x X_d, with continuous coordinates already unconstrained.
class MixedTarget {
 public:
  virtual ~MixedTarget() = default;

  virtual std::size_t continuous_dim() const = 0;
  virtual std::size_t discrete_dim() const = 0;
  virtual std::size_t support_size(std::size_t m) const = 0;

  /// log pi(x_c, x_d) up to a constant, including reparametrization log-Jacobians.
  virtual double log_density(const Eigen::VectorXd& xc, std::span<const int> xd) const = 0;
  /// Gradient of log_density in x_c. Entries outside dynamic_mask are unused.
  virtual Eigen::VectorXd score(const Eigen::VectorXd& xc, std::span<const int> xd) const = 0;

  virtual DiscretePMF discrete_conditional(std::size_t m, const Eigen::VectorXd& xc,
                                           std::span<const int> xd) const = 0;

  /// Discrete block as a FullConditionalTarget with x_c held fixed. Models
  /// override this to precompute per-x_c quantities once per pass.
  virtual TargetPtr discrete_slice(const Eigen::VectorXd& xc) const;

  /// Continuous coordinates the Hamiltonian block moves for this x_d
  /// (all by default). Frozen coordinates keep both position and momentum.
  virtual void dynamic_mask(std::span<const int> xd, std::vector<char>& mask) const;

  virtual std::vector<Transform> transforms() const;
  virtual std::vector<std::string> continuous_names() const;
};

using MixedTargetPtr = std::shared_ptr<const MixedTarget>;

enum class MomentumFamily { Laplace, Gaussian };

/// Base law r_0 of each momentum coordinate (unit scale).
struct MomentumBase {
  MomentumFamily family = MomentumFamily::Laplace;

  double log_pdf(double m) const;
  /// d/dm log r_0(m); the leapfrog position update is x -= eps * grad_log_pdf(m).
  double grad_log_pdf(double m) const;
  double cdf(double m) const;
  double quantile(double p) const;
  double sample(Rng& rng) const;
};

struct HamiltonianConfig {
  std::size_t leapfrog_steps = 10;
  double step_size = 0.05;
  MomentumBase momentum{};
  /// Shift applied to the scalar refresh uniform after every refresh.
  double refresh_shift = std::numbers::pi / 16.0;
  /// Per-coordinate refresh offsets are frac((i + 1) sqrt 2) when true, zero otherwise.
  bool use_offsets = true;

  void validate() const;
  double offset(std::size_t i) const;
};

/// (x_c, m, u_c, x_d, u_d).
struct MixedState {
  Eigen::VectorXd xc;
  Eigen::VectorXd m;
  double uc = 0.0;
  std::vector<int> xd;
  std::vector<double> ud;
};

/// L leapfrog steps of size cfg.step_size on (x_c, m); volume preserving.
MixedState leapfrog(const MixedState& state, const MixedTarget& target,
                    const HamiltonianConfig& cfg);
void leapfrog_inplace(MixedState& state, const MixedTarget& target, const HamiltonianConfig& cfg,
                      double step_size);

/// Inverse-CDF momentum refresh driven by u_c; returns the log-Jacobian.
std::pair<MixedState, double> momentum_refresh(const MixedState& state,
                                               const HamiltonianConfig& cfg);
std::pair<MixedState, double> momentum_refresh_inverse(const MixedState& state,
                                                       const HamiltonianConfig& cfg);
double momentum_refresh_inplace(MixedState& state, const HamiltonianConfig& cfg, bool inverse);

/// H-hat (leapfrog then refresh) followed by the MAD pass on (x_d, u_d)
/// with conditionals given the updated x_c.
std::pair<MixedState, double> mixed_forward(const MixedState& state, const MixedTarget& target,
                                            const HamiltonianConfig& cfg, ShiftParam xi);
std::pair<MixedState, double> mixed_inverse(const MixedState& state, const MixedTarget& target,
                                            const HamiltonianConfig& cfg, ShiftParam xi);
double mixed_forward_inplace(MixedState& state, const MixedTarget& target,
                             const HamiltonianConfig& cfg, ShiftParam xi);
double mixed_inverse_inplace(MixedState& state, const MixedTarget& target,
                             const HamiltonianConfig& cfg, ShiftParam xi);

/// q_0: x_c ~ N(center, diag(scale^2)), m ~ r_0, u_c ~ U, x_d ~ product PMFs, u_d ~ U.
class MixedReference {
 public:
  MixedReference(Eigen::VectorXd center, Eigen::VectorXd scale, std::vector<DiscretePMF> factors,
                 MomentumBase momentum = {});

  MixedState sample(Rng& rng) const;
  double log_density(const MixedState& state) const;

  const Eigen::VectorXd& center() const { return center_; }

 private:
  Eigen::VectorXd center_;
  Eigen::VectorXd scale_;
  std::vector<DiscretePMF> factors_;
  MomentumBase momentum_;
};

using MixedReferencePtr = std::shared_ptr<const MixedReference>;

class MixedMixFlow {
 public:
  MixedMixFlow(MixedTargetPtr target, MixedReferencePtr reference, std::size_t n_flow,
               HamiltonianConfig cfg = {}, ShiftParam xi = ShiftParam());

  double log_density(const MixedState& state) const;
  MixedState sample(Rng& rng) const;
  MixedState sample(std::uint64_t seed) const;
  MixedState sample_component(Rng& rng, std::size_t n) const;

  /// log pi(x_c, x_d) + sum_i log r_0(m_i); uniforms contribute zero.
  double log_augmented_target(const MixedState& state) const;

  const MixedTarget& target() const { return *target_; }
  std::size_t flow_length() const { return n_flow_; }
  const HamiltonianConfig& config() const { return cfg_; }

 private:
  MixedTargetPtr target_;
  MixedReferencePtr reference_;
  std::size_t n_flow_;
  HamiltonianConfig cfg_;
  ShiftParam xi_;
};

Estimate mixed_elbo(const MixedMixFlow& flow, std::size_t n_samples, std::uint64_t seed);

/// Draws and ELBO terms from one pass over `n_samples` flow samples.
struct MixedSampleSet {
  std::vector<MixedState> states;
  std::vector<double> elbo_terms;
};
MixedSampleSet mixed_sample_set(const MixedMixFlow& flow, std::size_t n_samples,
                                std::uint64_t seed, bool with_density = true);

}  // namespace madmix
