#pragma once

#include <cmath>
#include <numbers>

namespace dyadgrow::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// 2 * (1 - Phi(|z|)), computed without cancellation in the tail.
inline double two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

// Student-t(df, location, scale) log density.
inline double student_t_logpdf(double x, double df, double location, double scale) {
  const double u = (x - location) / scale;
  return std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         (df + 1.0) / 2.0 * std::log1p(u * u / df);
}

// Half-t on [0, inf) folded at `location` = 0.
inline double half_t_logpdf(double x, double df, double scale) {
  if (x < 0.0) return -INFINITY;
  return std::numbers::ln2 + student_t_logpdf(x, df, 0.0, scale);
}

}  // namespace dyadgrow::stats
