#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "fadekey/kernels/api.hpp"

// Shared scalar math helpers used across modules.  Sampling-path code goes
// through the kernels API for bit-stable results; these helpers cover the
// analytic paths (closed-form rates, bounds, test oracles).

namespace fadekey {

inline constexpr double ln2 = 0.69314718055994530941723212145818;

// Standard normal CDF via erfc (accurate in both tails).
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097);
}

// Inverse standard normal CDF.  Domain (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::domain_error("normal_quantile requires p in (0, 1)");
  }
  return kernels::normal_quantile1(p);
}

// Binary entropy in bits; h(0) = h(1) = 0.
inline double binary_entropy(double p) {
  if (!(p >= 0.0) || !(p <= 1.0)) {
    throw std::domain_error("binary_entropy requires p in [0, 1]");
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  return -(p * std::log2(p)) - (1.0 - p) * std::log2(1.0 - p);
}

// ln(n!) via an exact table for small n and a Stirling series beyond it.
double log_factorial(std::uint64_t n);

} // namespace fadekey
