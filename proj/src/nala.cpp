#include "mpmri/nala.hpp"

#include "mpmri/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mpmri {

NalaState nala_init(double lambda0, double alpha, double beta)
{
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) {
    throw InputError("nala: lambda0 must be finite and >= 0");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InputError("nala: alpha must be finite and > 0");
  }
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw InputError("nala: beta must lie in [0, 1)");
  }
  NalaState s;
  s.lambda = lambda0;
  s.alpha = alpha;
  s.beta = beta;
  return s;
}

NalaState nala_step(NalaState s, double r_val)
{
  if (!(r_val >= 0.0) || !std::isfinite(r_val)) {
    throw InputError("nala: regularization value must be finite and >= 0, got " + std::to_string(r_val));
  }
  double const prev = s.has_prev ? s.r_prev : r_val;
  s.m = s.beta * s.m + r_val + s.beta * (r_val - prev);
  s.lambda = std::max(0.0, s.lambda - s.alpha * s.m);
  s.r_prev = r_val;
  s.has_prev = true;
  ++s.t;
  return s;
}

} // namespace mpmri
