#include "madmix/models/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "madmix/stats.hpp"

namespace madmix {

namespace {
constexpr double kUniformLabelMix = 1e-3;
}  // namespace

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

struct CholeskyCache {
  Eigen::MatrixXd l;
  double log_det = 0.0;
};

CholeskyCache factor(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw MadmixError("GmmModel: covariance is not positive definite");
  CholeskyCache c;
  c.l = llt.matrixL();
  c.log_det = 2.0 * c.l.diagonal().array().log().sum();
  return c;
}

double log_normal(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const CholeskyCache& c) {
  const Eigen::VectorXd z = c.l.triangularView<Eigen::Lower>().solve(y - mu);
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + c.log_det + z.squaredNorm());
}

Eigen::VectorXd softmax_last_zero(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Eigen::Index k = v.size() + 1;
  Eigen::VectorXd logits(k);
  logits.head(k - 1) = v;
  logits[k - 1] = 0.0;
  const double mx = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - mx).exp();
  return w / w.sum();
}

}  // namespace

std::size_t packed_size(std::size_t d) { return d * (d + 1) / 2; }

Eigen::VectorXd pack_lower(const Eigen::MatrixXd& lower) {
  const auto d = lower.rows();
  Eigen::VectorXd out(packed_size(static_cast<std::size_t>(d)));
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) out[idx++] = lower(i, j);
  }
  return out;
}

Eigen::MatrixXd unpack_lower(const Eigen::Ref<const Eigen::VectorXd>& packed, std::size_t d) {
  if (static_cast<std::size_t>(packed.size()) != packed_size(d)) {
    throw MadmixError("unpack_lower: packed length does not match dimension");
  }
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) out(i, j) = packed[idx++];
  }
  return out;
}

Eigen::MatrixXd h_to_cholesky(const Eigen::MatrixXd& h) {
  Eigen::MatrixXd l = h.triangularView<Eigen::StrictlyLower>();
  l.diagonal() = h.diagonal().array().exp();
  return l;
}

Eigen::MatrixXd cholesky_to_h(const Eigen::MatrixXd& l) {
  if ((l.diagonal().array() <= 0.0).any()) throw MadmixError("cholesky_to_h: non-positive diagonal");
  Eigen::MatrixXd h = l.triangularView<Eigen::StrictlyLower>();
  h.diagonal() = l.diagonal().array().log();
  return h;
}

Eigen::MatrixXd h_to_covariance(const Eigen::MatrixXd& h) {
  const Eigen::MatrixXd l = h_to_cholesky(h);
  return l * l.transpose();
}

Eigen::MatrixXd covariance_to_h(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw MadmixError("covariance_to_h: not positive definite");
  return cholesky_to_h(llt.matrixL());
}

double h_log_jacobian(const Eigen::MatrixXd& h) {
  const auto d = h.rows();
  double out = static_cast<double>(d) * std::numbers::ln2;
  for (Eigen::Index i = 0; i < d; ++i) out += static_cast<double>(d - i + 1) * h(i, i);
  return out;
}

Eigen::MatrixXd commutation_matrix(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * n, n * n);
  // vec index of A(i, j) is i + j n; of A^T(i, j) = A(j, i) it is j + i n.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) k(i + j * n, j + i * n) = 1.0;
  }
  return k;
}

Eigen::MatrixXd cholesky_product_jacobian(const Eigen::MatrixXd& l) {
  const auto n = l.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = l(i, j) * eye;
  }
  const Eigen::MatrixXd k = commutation_matrix(static_cast<std::size_t>(n));
  return kron + k * kron;
}

Eigen::VectorXd covariance_gradient_to_h(const Eigen::MatrixXd& h, const Eigen::MatrixXd& g) {
  const auto n = h.rows();
  const Eigen::MatrixXd l = h_to_cholesky(h);
  const Eigen::MatrixXd j2 = cholesky_product_jacobian(l);
  const Eigen::VectorXd vec_g = Eigen::Map<const Eigen::VectorXd>(g.data(), n * n);
  const Eigen::VectorXd vec_dl = j2.transpose() * vec_g;
  Eigen::MatrixXd dl = Eigen::Map<const Eigen::MatrixXd>(vec_dl.data(), n, n);
  for (Eigen::Index i = 0; i < n; ++i) dl(i, i) *= l(i, i);
  return pack_lower(dl);
}

GmmHyper GmmModel::default_hyper(const Eigen::MatrixXd& y, std::size_t k, std::uint64_t seed) {
  const auto n = y.rows();
  const auto d = y.cols();
  if (k < 1 || static_cast<Eigen::Index>(k) > n) throw MadmixError("GmmModel: need 1 <= K <= N");
  Rng rng = make_rng(seed, 0x6b6d);

  // k-means++ seeding followed by Lloyd iterations.
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(y.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n))).transpose());
  std::vector<double> dist2(static_cast<std::size_t>(n));
  while (centers.size() < k) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (y.row(i).transpose() - c).squaredNorm());
      dist2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= dist2[static_cast<std::size_t>(i)];
        if (target < 0.0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    }
    centers.push_back(y.row(pick).transpose());
  }
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best_k = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = (y.row(i).transpose() - centers[c]).squaredNorm();
        if (dd < best) {
          best = dd;
          best_k = static_cast<int>(c);
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best_k) changed = true;
      assign[static_cast<std::size_t>(i)] = best_k;
    }
    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(d));
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += y.row(i).transpose();
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) centers[c] = sums[c] / counts[c];
    }
    if (!changed && iter > 0) break;
  }
  // Order components by their first coordinate so the labelling is reproducible.
  std::vector<std::size_t> order(k);
  for (std::size_t c = 0; c < k; ++c) order[c] = c;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return centers[a][0] < centers[b][0]; });

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd r =
        y.row(i).transpose() - centers[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    pooled += r * r.transpose();
  }
  pooled /= static_cast<double>(std::max<Eigen::Index>(n - static_cast<Eigen::Index>(k), 1));
  pooled += 1e-6 * Eigen::MatrixXd::Identity(d, d);

  GmmHyper hyper;
  hyper.alpha.assign(k, 1.0);
  hyper.nu0.assign(k, 1.0);
  for (std::size_t c = 0; c < k; ++c) {
    hyper.m0.push_back(centers[order[c]]);
    hyper.s0.push_back(pooled);
  }
  return hyper;
}

GmmModel::GmmModel(Eigen::MatrixXd y, std::size_t k, std::uint64_t seed)
    : y_(std::move(y)), k_(k), hyper_(default_hyper(y_, k, seed)) {
  validate();
}

GmmModel::GmmModel(Eigen::MatrixXd y, std::size_t k, GmmHyper hyper)
    : y_(std::move(y)), k_(k), hyper_(std::move(hyper)) {
  validate();
}

void GmmModel::validate() const {
  if (y_.rows() < 1 || y_.cols() < 1) throw MadmixError("GmmModel: empty data");
  if (!y_.allFinite()) throw MadmixError("GmmModel: non-finite data");
  if (k_ < 1) throw MadmixError("GmmModel: K must be positive");
  if (hyper_.alpha.size() != k_ || hyper_.m0.size() != k_ || hyper_.s0.size() != k_ ||
      hyper_.nu0.size() != k_) {
    throw MadmixError("GmmModel: hyperparameter sizes must equal K");
  }
  for (std::size_t c = 0; c < k_; ++c) {
    if (!(hyper_.alpha[c] > 0.0)) throw MadmixError("GmmModel: alpha must be positive");
    if (hyper_.m0[c].size() != y_.cols() || hyper_.s0[c].rows() != y_.cols()) {
      throw MadmixError("GmmModel: hyperparameter dimension mismatch");
    }
  }
}

GmmStats GmmModel::stats(std::span<const int> labels) const {
  if (labels.size() != n_obs()) throw MadmixError("GmmModel: label vector has wrong length");
  const auto d = y_.cols();
  GmmStats s;
  s.counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_));
  s.ybar.assign(k_, Eigen::VectorXd::Zero(d));
  s.scatter.assign(k_, Eigen::MatrixXd::Zero(d, d));
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int c = labels[n];
    if (c < 0 || static_cast<std::size_t>(c) >= k_) throw MadmixError("GmmModel: label out of range");
    s.counts[c] += 1.0;
    s.ybar[static_cast<std::size_t>(c)] += y_.row(static_cast<Eigen::Index>(n)).transpose();
  }
  for (std::size_t c = 0; c < k_; ++c) {
    if (s.counts[static_cast<Eigen::Index>(c)] > 0) s.ybar[c] /= s.counts[static_cast<Eigen::Index>(c)];
  }
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto c = static_cast<std::size_t>(labels[n]);
    const Eigen::VectorXd r = y_.row(static_cast<Eigen::Index>(n)).transpose() - s.ybar[c];
    s.scatter[c] += r * r.transpose();
  }
  return s;
}

Eigen::MatrixXd GmmModel::log_responsibility_table(const GmmParams& params) const {
  const auto n = y_.rows();
  Eigen::MatrixXd table(n, static_cast<Eigen::Index>(k_));
  for (std::size_t c = 0; c < k_; ++c) {
    const CholeskyCache chol = factor(params.sigma[c]);
    const double log_w = std::log(params.w[static_cast<Eigen::Index>(c)]);
    for (Eigen::Index i = 0; i < n; ++i) {
      table(i, static_cast<Eigen::Index>(c)) =
          log_w + log_normal(y_.row(i).transpose(), params.mu[c], chol);
    }
  }
  return table;
}

DiscretePMF GmmModel::label_conditional(std::size_t n, const GmmParams& params) const {
  if (n >= n_obs()) throw MadmixError("GmmModel: observation index out of range");
  std::vector<double> logw(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    logw[c] = std::log(params.w[static_cast<Eigen::Index>(c)]) +
              log_normal(y_.row(static_cast<Eigen::Index>(n)).transpose(), params.mu[c],
                         factor(params.sigma[c]));
  }
  return DiscretePMF::from_log_weights(logw);
}

Eigen::VectorXd GmmModel::weight_conditional(const GmmStats& stats) const {
  Eigen::VectorXd a(static_cast<Eigen::Index>(k_));
  for (std::size_t c = 0; c < k_; ++c) {
    a[static_cast<Eigen::Index>(c)] = hyper_.alpha[c] + stats.counts[static_cast<Eigen::Index>(c)];
  }
  return a;
}

std::pair<Eigen::MatrixXd, double> GmmModel::covariance_conditional(const GmmStats& stats,
                                                                   std::size_t k) const {
  const double nk = stats.counts[static_cast<Eigen::Index>(k)];
  if (nk <= 0.0) throw MadmixError("GmmModel: empty cluster in covariance conditional");
  const double d = static_cast<double>(dim());
  const double dof = nk + hyper_.nu0[k] - d - 2.0;
  if (!(dof > d - 1.0)) {
    throw MadmixError("GmmModel: covariance conditional needs more points in cluster " +
                      std::to_string(k));
  }
  return {stats.scatter[k], dof};
}

std::size_t GmmModel::min_cluster_size(std::size_t k) const {
  // dof = N_k + nu0 - D - 2 must exceed D - 1.
  const double d = static_cast<double>(dim());
  return static_cast<std::size_t>(std::floor(2.0 * d + 1.0 - hyper_.nu0.at(k))) + 1;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> GmmModel::mean_conditional(
    const GmmStats& stats, std::size_t k, const Eigen::MatrixXd& sigma) const {
  const double nk = stats.counts[static_cast<Eigen::Index>(k)];
  if (nk <= 0.0) throw MadmixError("GmmModel: empty cluster in mean conditional");
  return {stats.ybar[k], sigma / nk};
}

double GmmModel::log_joint(const GmmParams& params, std::span<const int> labels) const {
  if (labels.size() != n_obs()) throw MadmixError("GmmModel: label vector has wrong length");
  std::vector<CholeskyCache> chol;
  chol.reserve(k_);
  for (std::size_t c = 0; c < k_; ++c) chol.push_back(factor(params.sigma[c]));
  double lp = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto c = static_cast<std::size_t>(labels[n]);
    lp += std::log(params.w[static_cast<Eigen::Index>(c)]) +
          log_normal(y_.row(static_cast<Eigen::Index>(n)).transpose(), params.mu[c], chol[c]);
  }
  for (std::size_t c = 0; c < k_; ++c) {
    lp += (hyper_.alpha[c] - 1.0) * std::log(params.w[static_cast<Eigen::Index>(c)]);
    lp -= 0.5 * hyper_.nu0[c] * chol[c].log_det;
  }
  return lp;
}

Eigen::VectorXd GmmModel::raw_weight_score(const GmmParams& params, const GmmStats& stats) const {
  Eigen::VectorXd g(static_cast<Eigen::Index>(k_));
  for (std::size_t c = 0; c < k_; ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    g[i] = (stats.counts[i] + hyper_.alpha[c] - 1.0) / params.w[i];
  }
  return g;
}

Eigen::VectorXd GmmModel::raw_mean_score(const GmmParams& params, const GmmStats& stats,
                                         std::size_t k) const {
  const double nk = stats.counts[static_cast<Eigen::Index>(k)];
  if (nk == 0.0) return Eigen::VectorXd::Zero(y_.cols());
  return nk * params.sigma[k].llt().solve(stats.ybar[k] - params.mu[k]);
}

Eigen::MatrixXd GmmModel::raw_covariance_score(const GmmParams& params, const GmmStats& stats,
                                               std::size_t k) const {
  const double nk = stats.counts[static_cast<Eigen::Index>(k)];
  const auto d = y_.cols();
  Eigen::LLT<Eigen::MatrixXd> llt(params.sigma[k]);
  if (llt.info() != Eigen::Success) throw MadmixError("GmmModel: singular covariance");
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd outer = stats.scatter[k];
  if (nk > 0.0) {
    const Eigen::VectorXd a = params.mu[k] - stats.ybar[k];
    outer += nk * a * a.transpose();
  }
  return -0.5 * (nk + hyper_.nu0[k]) * inv + 0.5 * inv * outer * inv;
}

std::size_t GmmModel::continuous_dim() const {
  return (k_ - 1) + k_ * dim() + k_ * packed_size(dim());
}

Eigen::VectorXd GmmModel::pack(const GmmParams& params) const {
  const auto d = static_cast<Eigen::Index>(dim());
  Eigen::VectorXd xc(static_cast<Eigen::Index>(continuous_dim()));
  Eigen::Index off = 0;
  const double log_last = std::log(params.w[static_cast<Eigen::Index>(k_ - 1)]);
  for (std::size_t c = 0; c + 1 < k_; ++c) {
    xc[off++] = std::log(params.w[static_cast<Eigen::Index>(c)]) - log_last;
  }
  for (std::size_t c = 0; c < k_; ++c) {
    xc.segment(off, d) = params.mu[c];
    off += d;
  }
  const auto ps = static_cast<Eigen::Index>(packed_size(dim()));
  for (std::size_t c = 0; c < k_; ++c) {
    xc.segment(off, ps) = pack_lower(covariance_to_h(params.sigma[c]));
    off += ps;
  }
  return xc;
}

GmmParams GmmModel::unpack(const Eigen::VectorXd& xc) const {
  if (xc.size() != static_cast<Eigen::Index>(continuous_dim())) {
    throw MadmixError("GmmModel: continuous state has wrong length");
  }
  const auto d = static_cast<Eigen::Index>(dim());
  const auto ps = static_cast<Eigen::Index>(packed_size(dim()));
  const auto km1 = static_cast<Eigen::Index>(k_ - 1);
  GmmParams p;
  p.w = softmax_last_zero(xc.head(km1));
  Eigen::Index off = km1;
  for (std::size_t c = 0; c < k_; ++c) {
    p.mu.push_back(xc.segment(off, d));
    off += d;
  }
  for (std::size_t c = 0; c < k_; ++c) {
    p.sigma.push_back(h_to_covariance(unpack_lower(xc.segment(off, ps), dim())));
    off += ps;
  }
  return p;
}

double GmmModel::log_density(const Eigen::VectorXd& xc, std::span<const int> xd) const {
  const GmmParams p = unpack(xc);
  double lp = log_joint(p, xd);
  lp += p.w.array().log().sum();
  const auto ps = static_cast<Eigen::Index>(packed_size(dim()));
  Eigen::Index off = static_cast<Eigen::Index>((k_ - 1) + k_ * dim());
  for (std::size_t c = 0; c < k_; ++c) {
    lp += h_log_jacobian(unpack_lower(xc.segment(off, ps), dim()));
    off += ps;
  }
  return lp;
}

Eigen::VectorXd GmmModel::score(const Eigen::VectorXd& xc, std::span<const int> xd) const {
  const GmmParams p = unpack(xc);
  const GmmStats s = stats(xd);
  const auto d = static_cast<Eigen::Index>(dim());
  const auto ps = static_cast<Eigen::Index>(packed_size(dim()));
  Eigen::VectorXd g(xc.size());
  // log_joint + sum_k log w_k has w-coefficients c_k = N_k + alpha_k.
  double total = 0.0;
  for (std::size_t c = 0; c < k_; ++c) total += s.counts[static_cast<Eigen::Index>(c)] + hyper_.alpha[c];
  for (std::size_t c = 0; c + 1 < k_; ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    g[i] = s.counts[i] + hyper_.alpha[c] - p.w[i] * total;
  }
  Eigen::Index off = static_cast<Eigen::Index>(k_ - 1);
  for (std::size_t c = 0; c < k_; ++c) {
    g.segment(off, d) = raw_mean_score(p, s, c);
    off += d;
  }
  for (std::size_t c = 0; c < k_; ++c) {
    const Eigen::MatrixXd h = unpack_lower(xc.segment(off, ps), dim());
    Eigen::VectorXd gh = covariance_gradient_to_h(h, raw_covariance_score(p, s, c));
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
      idx += i;
      gh[idx] += static_cast<double>(d - i + 1);
      ++idx;
    }
    g.segment(off, ps) = gh;
    off += ps;
  }
  return g;
}

DiscretePMF GmmModel::discrete_conditional(std::size_t m, const Eigen::VectorXd& xc,
                                           std::span<const int>) const {
  return label_conditional(m, unpack(xc));
}

namespace {

// Labels are conditionally independent given the parameters, so every
// conditional is a fixed row of the responsibility table.
class GmmLabelSlice final : public FullConditionalTarget {
 public:
  GmmLabelSlice(Eigen::MatrixXd table) : table_(std::move(table)) {}
  std::size_t dimension() const override { return static_cast<std::size_t>(table_.rows()); }
  std::size_t support_size(std::size_t) const override {
    return static_cast<std::size_t>(table_.cols());
  }
  DiscretePMF conditional(std::size_t m, std::span<const int> x) const override {
    DiscretePMF out;
    conditional_into(m, x, out);
    return out;
  }
  void conditional_into(std::size_t m, std::span<const int>, DiscretePMF& out) const override {
    const auto k = table_.cols();
    double buf[64];
    std::vector<double> heap;
    double* w = buf;
    if (k > 64) {
      heap.resize(static_cast<std::size_t>(k));
      w = heap.data();
    }
    const auto row = static_cast<Eigen::Index>(m);
    const double mx = table_.row(row).maxCoeff();
    for (Eigen::Index c = 0; c < k; ++c) w[c] = std::max(std::exp(table_(row, c) - mx), 1e-300);
    out.assign_weights(std::span<const double>(w, static_cast<std::size_t>(k)));
  }
  bool has_log_mass() const override { return true; }
  double unnormalized_log_mass(std::span<const int> x) const override {
    double lp = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) lp += table_(static_cast<Eigen::Index>(n), x[n]);
    return lp;
  }

 private:
  Eigen::MatrixXd table_;
};

}  // namespace

TargetPtr GmmModel::discrete_slice(const Eigen::VectorXd& xc) const {
  return std::make_shared<GmmLabelSlice>(log_responsibility_table(unpack(xc)));
}

std::vector<Transform> GmmModel::transforms() const {
  std::vector<Transform> t(k_ - 1, Transform::SoftmaxWeight);
  t.insert(t.end(), k_ * dim(), Transform::Identity);
  for (std::size_t c = 0; c < k_; ++c) {
    for (std::size_t i = 0; i < dim(); ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        t.push_back(i == j ? Transform::CholeskyLogDiag : Transform::CholeskyOffDiag);
      }
    }
  }
  return t;
}

std::vector<std::string> GmmModel::continuous_names() const {
  std::vector<std::string> names;
  for (std::size_t c = 0; c + 1 < k_; ++c) names.push_back("v" + std::to_string(c));
  for (std::size_t c = 0; c < k_; ++c) {
    for (std::size_t i = 0; i < dim(); ++i) {
      names.push_back("mu" + std::to_string(c) + "_" + std::to_string(i));
    }
  }
  for (std::size_t c = 0; c < k_; ++c) {
    for (std::size_t i = 0; i < dim(); ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        names.push_back("H" + std::to_string(c) + "_" + std::to_string(i) + std::to_string(j));
      }
    }
  }
  return names;
}

GmmParams GmmModel::initial_params() const {
  GmmParams p;
  p.w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k_), 1.0 / static_cast<double>(k_));
  p.mu = hyper_.m0;
  p.sigma = hyper_.s0;
  return p;
}

std::vector<int> GmmModel::initial_labels() const {
  const Eigen::MatrixXd table = log_responsibility_table(initial_params());
  std::vector<int> labels(n_obs());
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    Eigen::Index best = 0;
    table.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

GmmParams GmmModel::map_params(std::size_t max_iters) const {
  GmmParams p = initial_params();
  const auto n = y_.rows();
  const auto d = y_.cols();
  const auto k = static_cast<Eigen::Index>(k_);
  double alpha_total = 0.0;
  for (double a : hyper_.alpha) alpha_total += a;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Eigen::MatrixXd table = log_responsibility_table(p);
    Eigen::MatrixXd r(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = table.row(i).maxCoeff();
      r.row(i) = (table.row(i).array() - mx).exp();
      r.row(i) /= r.row(i).sum();
    }
    GmmParams next = p;
    double change = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      const double rk = r.col(c).sum();
      next.w[c] = std::max(rk + hyper_.alpha[cu] - 1.0, 1e-3) /
                  (static_cast<double>(n) + alpha_total - static_cast<double>(k));
      if (rk < static_cast<double>(d) + 1.0) continue;
      const Eigen::VectorXd mu = (y_.transpose() * r.col(c)) / rk;
      Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd z = y_.row(i).transpose() - mu;
        scatter += r(i, c) * z * z.transpose();
      }
      next.mu[cu] = mu;
      next.sigma[cu] = scatter / (rk + hyper_.nu0[cu]);
      change = std::max(change, (mu - p.mu[cu]).lpNorm<Eigen::Infinity>());
    }
    next.w /= next.w.sum();
    p = std::move(next);
    if (change < 1e-10) break;
  }
  return p;
}

MixedReferencePtr GmmModel::default_reference(double scale, MomentumBase momentum) const {
  const GmmParams p0 = map_params();
  const Eigen::MatrixXd table = log_responsibility_table(p0);
  std::vector<DiscretePMF> factors;
  factors.reserve(n_obs());
  const double uniform = 1.0 / static_cast<double>(k_);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    std::vector<double> row(k_);
    for (std::size_t c = 0; c < k_; ++c) row[c] = table(i, static_cast<Eigen::Index>(c));
    DiscretePMF resp = DiscretePMF::from_log_weights(row);
    std::vector<double> mixed(k_);
    for (std::size_t c = 0; c < k_; ++c) mixed[c] = (1.0 - kUniformLabelMix) * resp.prob(c) + kUniformLabelMix * uniform;
    factors.push_back(DiscretePMF::from_weights(mixed));
  }
  const Eigen::VectorXd center = pack(p0);
  return std::make_shared<MixedReference>(center, Eigen::VectorXd::Constant(center.size(), scale),
                                          std::move(factors), momentum);
}

GmmDataset synthetic_gmm(std::size_t n, std::size_t k, std::size_t d, double separation,
                         std::uint64_t seed) {
  if (n < 1 || k < 1 || d < 1) throw MadmixError("synthetic_gmm: sizes must be positive");
  Rng rng = make_rng(seed, 0x676d6d);
  GmmDataset out;
  out.y.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    out.labels[i] = static_cast<int>(c);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    for (std::size_t j = 0; j < d; ++j) {
      double centre = 0.0;
      if (k > 1 && j == 0) centre = separation * std::cos(angle);
      if (k > 1 && j == 1) centre = separation * std::sin(angle);
      out.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = centre + standard_normal(rng);
    }
  }
  return out;
}

Eigen::MatrixXd load_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MadmixError("load_csv_matrix: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw MadmixError("load_csv_matrix: non-numeric cell in " + path);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw MadmixError("load_csv_matrix: ragged rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw MadmixError("load_csv_matrix: no data rows in " + path);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

}  // namespace madmix
