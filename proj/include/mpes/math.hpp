#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace mpes::math {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(inv_logit(x)), stable for large |x|.
inline double log_inv_logit(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

/// log(1 - inv_logit(x)).
inline double log1m_inv_logit(double x) { return log_inv_logit(-x); }

/// log C(n, x) for real n >= x >= 0.
inline double log_choose(double n, double x) {
  return std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0);
}

inline bool is_open_probability(double p) { return p > 0.0 && p < 1.0; }

/// x log(p), with the 0 log 0 = 0 convention.
inline double xlogy(double x, double p) {
  if (x == 0.0) return 0.0;
  return x * std::log(p);
}

inline double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Half-normal on (0, inf) with the given scale.
inline double half_normal_lpdf(double x, double scale) {
  if (!(x > 0.0)) return neg_inf;
  return normal_lpdf(x, 0.0, scale) + std::log(2.0);
}

inline double binomial_lpmf(double x, double n, double p) {
  if (!is_open_probability(p) || x < 0.0 || x > n) return neg_inf;
  return log_choose(n, x) + x * std::log(p) + (n - x) * std::log1p(-p);
}

inline double poisson_lpmf(double m, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) return neg_inf;
  return m * std::log(rate) - rate - std::lgamma(m + 1.0);
}

/// Multinomial log-pmf; zero-probability categories are allowed only with zero counts.
inline double multinomial_lpmf(std::span<const double> counts, std::span<const double> probs) {
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0.0 && !(probs[k] > 0.0)) return neg_inf;
    acc += xlogy(counts[k], probs[k]) - std::lgamma(counts[k] + 1.0);
    total += counts[k];
  }
  return acc + std::lgamma(total + 1.0);
}

}  // namespace mpes::math
