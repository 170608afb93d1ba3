#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

namespace oracle {

/// Inverse standard normal CDF by bisection on the long double reference.
inline double phi_inverse(long double p) {
  long double lo = -40, hi = 40;
  for (int i = 0; i < 200; ++i) {
    long double mid = (lo + hi) / 2;
    (phi_ref(mid) < p ? lo : hi) = mid;
  }
  return static_cast<double>((lo + hi) / 2);
}

/// Normal(mean, 1) truncated to [a, b] by inverse-CDF sampling.
inline std::vector<double> truncated_normal(double mean, double a, double b, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<long double> u(0, 1);
  long double fa = phi_ref(a - mean), fb = phi_ref(b - mean);
  std::vector<double> out(count);
  for (auto& x : out) x = mean + phi_inverse(fa + u(rng) * (fb - fa));
  return out;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

/// KS critical value at level 0.001.
inline double ks_critical(std::size_t n, std::size_t m) {
  return 1.95 * std::sqrt(double(n + m) / (double(n) * double(m)));
}

}  // namespace oracle
