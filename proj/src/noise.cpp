#include "mpmri/noise.hpp"

#include "mpmri/error.hpp"
#include "mpmri/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mpmri {

double NoiseField::mean() const
{
  return sigma.empty() ? 0.0 : std::accumulate(sigma.begin(), sigma.end(), 0.0) / static_cast<double>(sigma.size());
}

NoiseField make_noise_field(Dims3 dims, double level, std::uint64_t seed, double variation)
{
  if (!(level > 0.0 && level <= 0.2)) {
    throw InputError("noise level must be in (0, 0.2], got " + std::to_string(level));
  }
  if (dims.size() == 0) {
    throw InputError("noise field: empty volume");
  }
  NoiseField f{dims, std::vector<double>(dims.size(), level), level, seed};
  if (variation == 0.0) {
    return f;
  }
  auto const g = smooth_field(dims, static_cast<double>(dims.w) / 4.0, seed);
  for (std::size_t i = 0; i < g.size(); ++i) {
    f.sigma[i] = std::max(0.2 * level, level * (1.0 + variation * g[i]));
  }
  double const scale = level / f.mean();
  for (double &v : f.sigma) {
    v *= scale;
  }
  return f;
}

double rician_sample(double signal, double sigma, std::uint64_t seed, std::uint64_t voxel, std::uint64_t dir)
{
  if (sigma == 0.0) {
    return signal;
  }
  Rng rng(hash_key(seed, voxel, dir));
  double const n1 = sigma * rng.normal();
  double const n2 = sigma * rng.normal();
  return std::hypot(signal + n1, n2);
}

ParamTensor add_rician(ParamTensor const &dwi, NoiseField const &field, double s0_ref, std::uint64_t seed)
{
  Dims4 const d = dwi.dims();
  if (!(field.dims == Dims3{d.w, d.h, d.s})) {
    throw InputError("add_rician: noise field dims do not match the volume");
  }
  ParamTensor out(d);
  auto const in = dwi.data();
  auto o = out.data();
  for (std::size_t v = 0; v < field.dims.size(); ++v) {
    double const sd = field.sigma[v] * s0_ref;
    for (std::size_t k = 0; k < d.n; ++k) {
      o[v * d.n + k] = rician_sample(in[v * d.n + k], sd, seed, v, k);
    }
  }
  return out;
}

} // namespace mpmri
