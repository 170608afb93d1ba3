#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "distill/error.hpp"
#include "distill/parallel.hpp"
#include "distill/rng.hpp"
#include "distill/stat_kernel.hpp"

namespace distill {

struct TheoryParams {
  double mu = 0.0;     ///< mean loss gap of the pair
  double sigma = 1.0;  ///< sd of per-row loss differences
  double n = 100;
  double alpha = 0.05;
  std::size_t n_candidates = 2;  ///< N(C)
  double s_star = 0.0;           ///< smallest standardized gap S*(C)

  double s() const { return mu / sigma; }

  void validate() const {
    if (!(sigma > 0.0)) throw DomainError("TheoryParams: sigma must be positive");
    if (!(n > 0.0)) throw DomainError("TheoryParams: n must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("TheoryParams: alpha must lie in (0, 1)");
    if (n_candidates < 2) throw DomainError("TheoryParams: need at least two candidates");
  }
};

struct TransitionEstimate {
  double omega1 = 0.0;  ///< stop probability
  double omega2 = 0.0;  ///< continue probability
  std::vector<double> n_prime_samples;
};

/// Rejection threshold on |sqrt(n) d / sigma| for the two-candidate test.
inline double two_candidate_cutoff(double alpha) { return std::sqrt(2.0) * z_quantile(alpha); }

/// Probability that the two-candidate test fails at size n.
inline double omega2_exact(const TheoryParams& p) {
  p.validate();
  const double a = two_candidate_cutoff(p.alpha);
  const double m = std::sqrt(p.n) * p.s();
  return phi(a - m) - phi(-a - m);
}

/// Monte-Carlo version of the two-candidate transition. Each trial draws
/// d ~ N(mu, sigma^2 / n); the test stops when |z| > sqrt(2) Z_alpha with
/// z = sqrt(n) d / sigma, otherwise the suggested size is 2 Z_alpha^2 n / z^2.
/// Trials are processed in fixed blocks with their own RNG streams, so the
/// result does not depend on the thread count.
inline TransitionEstimate simulate_two_candidate(const TheoryParams& p, std::size_t trials, std::uint64_t seed,
                                                 bool keep_samples = true) {
  p.validate();
  if (trials == 0) throw DomainError("simulate_two_candidate: trials must be positive");
  const double z = z_quantile(p.alpha);
  const double a = std::sqrt(2.0) * z;
  const double m = std::sqrt(p.n) * p.s();
  constexpr std::size_t block = 4096;
  const std::size_t blocks = (trials + block - 1) / block;
  std::vector<std::vector<double>> kept(blocks);
  std::vector<std::size_t> cont(blocks, 0);
  parallel_for(blocks, [&](std::size_t b) {
    Rng rng = make_rng(seed, {b});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t hi = std::min(trials, (b + 1) * block);
    for (std::size_t t = b * block; t < hi; ++t) {
      double z1 = m + normal(rng);  // sqrt(n) d / sigma
      if (std::abs(z1) > a) continue;
      ++cont[b];
      if (keep_samples) kept[b].push_back(2.0 * z * z * p.n / (z1 * z1));
    }
  });
  TransitionEstimate est;
  std::size_t total = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    total += cont[b];
    est.n_prime_samples.insert(est.n_prime_samples.end(), kept[b].begin(), kept[b].end());
  }
  est.omega2 = static_cast<double>(total) / static_cast<double>(trials);
  est.omega1 = 1.0 - est.omega2;
  return est;
}

/// Joint probability that the test fails and n' >= 2 Z_alpha^2 n / delta^2.
/// delta beyond the rejection cutoff adds nothing.
inline double n_prime_tail(const TheoryParams& p, double delta) {
  p.validate();
  if (!(delta > 0.0)) throw DomainError("n_prime_tail: delta must be positive");
  const double dl = std::min(delta, two_candidate_cutoff(p.alpha));
  const double m = std::sqrt(p.n) * p.s();
  return phi(dl - m) - phi(-dl - m);
}

/// CDF of n' given that the test failed: n' = 2 Z^2 n / Z1^2 with Z1 normal
/// (mean sqrt(n) S, unit variance) truncated to [-sqrt(2) Z, sqrt(2) Z].
inline double n_prime_cdf(const TheoryParams& p, double x) {
  p.validate();
  const double z = z_quantile(p.alpha);
  const double floor_n = p.n;  // smallest possible n' (|Z1| at the cutoff)
  if (x < floor_n) return 0.0;
  const double delta = std::sqrt(2.0 * z * z * p.n / x);
  return 1.0 - n_prime_tail(p, delta) / omega2_exact(p);
}

struct Theorem1Bounds {
  double omega1_lower = 0.0;
  double omega2_upper = 0.0;
  double n_prime_upper = 0.0;
  bool in_regime = false;  ///< sqrt(n) S* > 2 sqrt(log(N / 2 alpha)); bounds may be vacuous otherwise
};

inline Theorem1Bounds theorem1_bounds(const TheoryParams& p) {
  p.validate();
  const double N = static_cast<double>(p.n_candidates);
  const double l = std::log(N / (2.0 * p.alpha));
  if (!(l > 0.0)) throw DomainError("theorem1_bounds: need N / (2 alpha) > 1");
  const double root_n_s = std::sqrt(p.n) * p.s_star;
  Theorem1Bounds b;
  b.in_regime = root_n_s > 2.0 * std::sqrt(l);
  const double gap = root_n_s - 2.0 * std::sqrt(l);
  b.omega2_upper = N * std::sqrt(8.0 / std::numbers::pi * l) * std::exp(-0.5 * gap * gap);
  b.omega1_lower = 1.0 - b.omega2_upper;
  b.n_prime_upper = 4.0 * p.n * std::log(p.n) * N * N * l;
  return b;
}

struct LemmaSandwich {
  double lower = 0.0;
  double z = 0.0;
  double upper = 0.0;

  bool ordered() const { return lower < z && z < upper; }
};

/// Bounds sqrt(2 log(1/(10a)) - log log(1/(10a))) <= Z_a <= sqrt(2 log(1/(2a))).
inline LemmaSandwich lemma1_sandwich(double alpha) {
  if (!(alpha > 0.0 && 10.0 * alpha < 1.0)) throw DomainError("lemma1_sandwich: requires 0 < alpha < 0.1");
  const double l = std::log(1.0 / (10.0 * alpha));
  LemmaSandwich s;
  s.lower = std::sqrt(2.0 * l - std::log(l));
  s.z = z_quantile(alpha);
  s.upper = std::sqrt(2.0 * std::log(1.0 / (2.0 * alpha)));
  return s;
}

/// Multi-candidate stopping simulation on a ladder of N candidates whose
/// mean losses are i * S* (i = 0..N-1) with unit-variance pairwise loss
/// differences. Each trial draws the estimated losses, picks the argmin,
/// computes the one-sided p-values against it and applies the Bonferroni
/// test. Returns the fraction of trials that fail (omega2).
inline double simulate_stopping(const TheoryParams& p, std::size_t trials, std::uint64_t seed) {
  p.validate();
  if (trials == 0) throw DomainError("simulate_stopping: trials must be positive");
  const std::size_t N = p.n_candidates;
  const double root_n = std::sqrt(p.n);
  // Independent per-candidate noise with variance 1/(2n) gives pairwise
  // difference variance 1/n.
  const double noise_sd = std::sqrt(0.5) / root_n;
  constexpr std::size_t block = 4096;
  const std::size_t blocks = (trials + block - 1) / block;
  std::vector<std::size_t> fails(blocks, 0);
  parallel_for(blocks, [&](std::size_t b) {
    Rng rng = make_rng(seed, {b});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> loss(N);
    std::size_t hi = std::min(trials, (b + 1) * block);
    for (std::size_t t = b * block; t < hi; ++t) {
      for (std::size_t i = 0; i < N; ++i) loss[i] = static_cast<double>(i) * p.s_star + noise_sd * normal(rng);
      std::size_t best = static_cast<std::size_t>(std::min_element(loss.begin(), loss.end()) - loss.begin());
      double sum_p = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        if (j != best) sum_p += normal_upper_tail(root_n * (loss[j] - loss[best]) / std::sqrt(2.0));
      }
      if (sum_p > p.alpha) ++fails[b];
    }
  });
  std::size_t total = 0;
  for (auto f : fails) total += f;
  return static_cast<double>(total) / static_cast<double>(trials);
}

}  // namespace distill
