#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "distill/error.hpp"

namespace distill {

/// Standard normal CDF, P(Z < x).
inline double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail P(Z > x). Accurate far into the right tail where 1 - phi(x)
/// would cancel.
inline double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// The (1 - alpha)-quantile of the standard normal, i.e. the z with
/// P(Z > z) = alpha.
///
/// Bisection brackets the root, then Newton steps on log P(Z > z) polish it.
/// Working on the log of the tail keeps relative accuracy for tiny alpha.
inline double z_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("z_quantile: alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
  if (alpha == 0.5) return 0.0;
  if (alpha > 0.5) return -z_quantile(1.0 - alpha);

  double lo = 0.0;
  double hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
    double mid = 0.5 * (lo + hi);
    if (normal_upper_tail(mid) > alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double z = 0.5 * (lo + hi);
  const double log_alpha = std::log(alpha);
  for (int i = 0; i < 3; ++i) {
    double tail = normal_upper_tail(z);
    if (!(tail > 0.0)) break;
    // d/dz log tail = -pdf / tail
    double step = (std::log(tail) - log_alpha) / (normal_pdf(z) / tail);
    if (!std::isfinite(step)) break;
    z += step;
  }
  return z;
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  ///< unbiased, (n - 1) normalised
};

/// Welford's one-pass mean and unbiased variance.
inline MeanVar mean_var(std::span<const double> samples) {
  if (samples.size() < 2) {
    throw DomainError("mean_var: variance needs at least 2 samples, got " +
                      std::to_string(samples.size()));
  }
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (double x : samples) {
    ++k;
    double delta = x - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (x - mean);
  }
  return {mean, m2 / static_cast<double>(k - 1)};
}

/// Shannon entropy in bits with 0 log 0 = 0.
inline double entropy(std::span<const double> proportions) {
  double total = 0.0;
  double h = 0.0;
  for (double p : proportions) {
    if (p < 0.0 || !std::isfinite(p)) {
      throw DomainError("entropy: proportions must be finite and non-negative");
    }
    total += p;
    if (p > 0.0) h -= p * std::log2(p);
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("entropy: proportions sum to " + std::to_string(total) + ", expected 1");
  }
  return h == 0.0 ? 0.0 : h;
}

}  // namespace distill
