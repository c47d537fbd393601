#pragma once

// C^infinity transition built from e^{-1/t}.

#include <cmath>

namespace foldlab {

inline double exp_inv(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }

/// 0 for s <= 0, 1 for s >= 1, smooth in between; step(s) + step(1 - s) = 1.
inline double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = exp_inv(s);
  const double b = exp_inv(1.0 - s);
  return a / (a + b);
}

/// 1 on [0, 1/2], 0 on [1, inf); even extension to negative t.
inline double zeta(double t) { return smooth_step(2.0 - 2.0 * std::abs(t)); }

/// Bump equal to 1 on the middle half of [lo, hi] and 0 outside.
inline double interval_bump(double t, double lo, double hi) {
  const double c = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  return zeta((t - c) / half);
}

}  // namespace foldlab
