#include "madmix/stats.hpp"

#include <algorithm>
#include <stdexcept>

namespace madmix {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

Estimate mean_and_se(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("mean_and_se: need at least two values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

Estimate batch_means(std::span<const double> values, std::size_t n_batches) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("batch_means: need at least two values");
  if (n_batches < 2 || n / n_batches < 2) return mean_and_se(values);
  const std::size_t len = n / n_batches;
  std::vector<double> means(n_batches, 0.0);
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (std::size_t i = 0; i < len; ++i) means[b] += values[b * len + i];
    means[b] /= static_cast<double>(len);
  }
  Estimate est = mean_and_se(means);
  double full = 0.0;
  for (double v : values) full += v;
  est.value = full / static_cast<double>(n);
  return est;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double ks_critical_value(std::size_t n, double alpha) {
  double c = 0.0;
  if (alpha == 0.1) c = 1.2238;
  else if (alpha == 0.05) c = 1.3581;
  else if (alpha == 0.01) c = 1.6276;
  else throw std::invalid_argument("ks_critical_value: unsupported alpha");
  return c / std::sqrt(static_cast<double>(n));
}

}  // namespace madmix
