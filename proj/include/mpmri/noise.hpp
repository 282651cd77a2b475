#pragma once

#include "mpmri/tensor.hpp"

#include <cstdint>
#include <vector>

namespace mpmri {

/// Spatial noise-level map, as a fraction of the reference b=0 signal.
struct NoiseField
{
  Dims3 dims;
  std::vector<double> sigma; // Dims3::index layout
  double level = 0.0;
  std::uint64_t seed = 0;

  double at(std::size_t x, std::size_t y, std::size_t z) const { return sigma[dims.index(x, y, z)]; }
  double mean() const;
};

/// sigma = level * (1 + variation * G), floored at 0.2 * level, then rescaled
/// to a spatial mean of exactly `level`. G is a unit-variance Gaussian field
/// band-limited to wavelengths >= W/4. variation = 0 gives a constant map.
NoiseField make_noise_field(Dims3 dims, double level, std::uint64_t seed, double variation = 0.5);

/// Magnitude of the signal plus complex Gaussian noise with per-voxel standard
/// deviation sigma(x) * s0_ref. `dwi` is W x H x S x D (one channel per
/// gradient entry). Draws are keyed by (seed, voxel, direction).
ParamTensor add_rician(ParamTensor const &dwi, NoiseField const &field, double s0_ref, std::uint64_t seed);

// Single draw for voxel `voxel`, direction `dir`; the building block of add_rician.
double rician_sample(double signal, double sigma, std::uint64_t seed, std::uint64_t voxel, std::uint64_t dir);

} // namespace mpmri
