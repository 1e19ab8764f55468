#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include "brood/error.hpp"

namespace brood {

/// Natural-log score; -inf encodes zero mass. Never NaN.
using LogScore = double;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)).
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

/// log(sum(exp(values))), max-shifted; empty input gives -inf.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

/// log(1 - exp(-x)) for x > 0, switching between the expm1 and log1p forms at ln 2.
inline double log1mexp(double x) {
  return x <= std::numbers::ln2 ? std::log(-std::expm1(-x)) : std::log1p(-std::exp(-x));
}

/// Relative tolerance used to decide that c and b of log_minus_exp coincide.
inline constexpr double kLogMinusExpTolerance = 1e-12;

/// Inverse of log_add in its first argument: returns a with log_add(a, b) == c.
/// Throws if c < b beyond tolerance; returns -inf when c and b coincide.
inline double log_minus_exp(double c, double b) {
  if (b == kNegInf) return c;
  const double tol = kLogMinusExpTolerance * std::max(1.0, std::abs(b));
  if (c < b - tol)
    throw RuntimeError("log_minus_exp: c=" + std::to_string(c) + " is below b=" + std::to_string(b));
  const double gap = c - b;
  if (gap <= tol) return kNegInf;
  return c + log1mexp(gap);
}

}  // namespace brood
