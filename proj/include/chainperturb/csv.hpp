#pragma once

#include <cstdio>
#include <string>

namespace chainperturb {

// Decimal rendering with 17 significant digits (round-trips a double).
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Compact rendering for labels, e.g. 0.5 rather than 0.500000.
inline std::string short_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace chainperturb
