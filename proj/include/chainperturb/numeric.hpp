#pragma once

#include <cmath>

namespace chainperturb {

// base^n for base in [0, 1]. Direct powering up to a million steps, then
// exp(n log base) for speed.
inline double contraction_power(double base, long long n) {
  if (n <= 1000000) return std::pow(base, static_cast<double>(n));
  if (base <= 0.0) return 0.0;
  return std::exp(static_cast<double>(n) * std::log(base));
}

}  // namespace chainperturb
