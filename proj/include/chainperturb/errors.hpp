#pragma once

#include <stdexcept>
#include <string>

namespace chainperturb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operands of incompatible sizes.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Malformed input: bad probabilities, out-of-range states, bad configs.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// The parameters fall outside the range where a bound or construction is
// defined (e.g. epsilon >= 1 - alpha, a <= 0).
class InvalidRegime : public Error {
 public:
  using Error::Error;
};

// Doeblin constant is zero; the Poisson equation has no controlled solution.
class NoSpectralGap : public InvalidRegime {
 public:
  using InvalidRegime::InvalidRegime;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace chainperturb
