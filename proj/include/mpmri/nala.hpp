#pragma once

#include <cstdint>

namespace mpmri {

/// State of the adaptive regularization weight.
struct NalaState
{
  double lambda = 0.1;
  double m = 0.0;
  double r_prev = 0.0;
  bool has_prev = false;
  std::uint64_t t = 0;
  double alpha = 5e-4;
  double beta = 0.9;
};

// Throws InputError unless lambda0 >= 0, alpha > 0 and 0 <= beta < 1.
NalaState nala_init(double lambda0 = 0.1, double alpha = 5e-4, double beta = 0.9);

/// m <- beta m + r + beta (r - r_prev); lambda <- max(0, lambda - alpha m).
/// On the first call r_prev is taken as r. r_val must be finite and >= 0.
NalaState nala_step(NalaState s, double r_val);

} // namespace mpmri
