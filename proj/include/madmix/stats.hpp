#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace madmix {

/// Monte Carlo estimate paired with its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

double log_sum_exp(std::span<const double> values);

/// Mean and standard error of the mean; requires at least two values.
Estimate mean_and_se(std::span<const double> values);

/// Standard error of the mean from non-overlapping batch means (for
/// autocorrelated chains). Falls back to the iid formula for short inputs.
Estimate batch_means(std::span<const double> values, std::size_t n_batches = 50);

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|. Sorts a copy.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Asymptotic one-sample KS critical value c(alpha)/sqrt(n); alpha in {0.1, 0.05, 0.01}.
double ks_critical_value(std::size_t n, double alpha);

inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace madmix
