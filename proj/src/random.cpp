#include "mpmri/random.hpp"

#include <cmath>
#include <numbers>

namespace mpmri {

std::uint64_t mix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (a + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
  h = mix64(h ^ (c + 0xd1b54a32d192ed03ULL));
  return h;
}

std::uint64_t Rng::next()
{
  return mix64(key_ ^ mix64(counter_++));
}

double Rng::uniform()
{
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open()
{
  return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n)
{
  // Multiply-shift; bias is below 2^-64 * n, irrelevant at our sizes.
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
}

double Rng::normal()
{
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double const r = std::sqrt(-2.0 * std::log(uniform_open()));
  double const phi = 2.0 * std::numbers::pi * uniform();
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

} // namespace mpmri

namespace mpmri {

std::vector<double> smooth_field(Dims3 dims, double min_wavelength, std::uint64_t seed)
{
  std::vector<double> field(dims.size(), 0.0);
  if (field.empty()) {
    return field;
  }
  double const fmax = 1.0 / min_wavelength; // cycles per voxel
  auto const kx_max = static_cast<long>(std::floor(fmax * dims.w));
  auto const ky_max = static_cast<long>(std::floor(fmax * dims.h));
  auto const kz_max = static_cast<long>(std::floor(fmax * dims.s));
  Rng rng(seed, 0x5eed);
  std::vector<double> cx(dims.w), sx(dims.w);
  for (long kx = 0; kx <= kx_max; ++kx) {
    for (long ky = -ky_max; ky <= ky_max; ++ky) {
      for (long kz = -kz_max; kz <= kz_max; ++kz) {
        // Half-space of modes; the other half is the complex conjugate.
        if (kx == 0 && (ky < 0 || (ky == 0 && kz <= 0))) {
          continue;
        }
        double const fx = static_cast<double>(kx) / dims.w;
        double const fy = static_cast<double>(ky) / dims.h;
        double const fz = static_cast<double>(kz) / dims.s;
        if (fx * fx + fy * fy + fz * fz > fmax * fmax) {
          continue;
        }
        double const a = rng.normal();
        double const b = rng.normal();
        for (std::size_t x = 0; x < dims.w; ++x) {
          for (std::size_t y = 0; y < dims.h; ++y) {
            for (std::size_t z = 0; z < dims.s; ++z) {
              double const ph = 2.0 * std::numbers::pi * (fx * x + fy * y + fz * z);
              field[dims.index(x, y, z)] += a * std::cos(ph) + b * std::sin(ph);
            }
          }
        }
      }
    }
  }
  double mean = 0.0;
  for (double v : field) {
    mean += v;
  }
  mean /= static_cast<double>(field.size());
  double var = 0.0;
  for (double v : field) {
    var += (v - mean) * (v - mean);
  }
  var /= static_cast<double>(field.size());
  double const inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (double &v : field) {
    v = (v - mean) * inv;
  }
  return field;
}

} // namespace mpmri
