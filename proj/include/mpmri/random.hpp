#pragma once

#include "mpmri/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mpmri {

// SplitMix64 finalizer. Good avalanche, used to derive keys and streams.
std::uint64_t mix64(std::uint64_t x);

// Combine a seed with up to three counters into one key.
std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// Counter-based generator. The n-th draw is a pure function of (key, n),
/// so a stream keyed by e.g. (seed, voxel, direction) gives the same numbers
/// regardless of the order or thread in which voxels are processed.
class Rng
{
public:
  explicit Rng(std::uint64_t key)
    : key_{mix64(key)}
  {
  }
  Rng(std::uint64_t seed, std::uint64_t stream)
    : key_{hash_key(seed, stream)}
  {
  }

  std::uint64_t next();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1], safe for log().
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Index in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; caches the second variate.
  double normal();

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};


/// Zero-mean, unit-variance Gaussian random field on a periodic W x H x S grid,
/// band-limited to spatial wavelengths >= min_wavelength voxels (ideal
/// low-pass over random Fourier modes). Indexed by Dims3::index.
std::vector<double> smooth_field(Dims3 dims, double min_wavelength, std::uint64_t seed);

} // namespace mpmri
