#pragma once

#include "mpmri/random.hpp"
#include "mpmri/tensor.hpp"
#include "mpmri/tsvd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numbers>
#include <vector>

#include <cmath>

namespace mpmri::test {

inline ParamTensor random_tensor(Dims4 d, std::uint64_t seed)
{
  Rng rng(seed, 0xabc);
  ParamTensor t(d);
  for (double &v : t.data()) {
    v = rng.normal();
  }
  return t;
}

inline double rel_diff(double a, double b)
{
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Brute-force spectra: explicit DFT sums plus eigenvalues of M^H M.
// Shares no code with the library path (no forward_dft, no JacobiSVD).
inline SingularSpectrum oracle_spectrum(ParamTensor const &t)
{
  Dims4 const d = t.dims();
  SingularSpectrum out;
  out.k = std::min(d.w, d.h);
  out.s = d.s;
  out.n = d.n;
  out.values.assign(out.k * d.s * d.n, 0.0);
  for (std::size_t k = 0; k < d.s; ++k) {
    for (std::size_t l = 0; l < d.n; ++l) {
      Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d.w, d.h);
      for (std::size_t w = 0; w < d.w; ++w) {
        for (std::size_t h = 0; h < d.h; ++h) {
          Cx acc = 0.0;
          for (std::size_t s = 0; s < d.s; ++s) {
            for (std::size_t n = 0; n < d.n; ++n) {
              double const ang = -2.0 * std::numbers::pi *
                                 (static_cast<double>(k * s) / d.s + static_cast<double>(l * n) / d.n);
              acc += t(w, h, s, n) * Cx(std::cos(ang), std::sin(ang));
            }
          }
          m(w, h) = acc;
        }
      }
      Eigen::MatrixXcd const gram = d.w >= d.h ? Eigen::MatrixXcd(m.adjoint() * m) : Eigen::MatrixXcd(m * m.adjoint());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
      Eigen::VectorXd ev = es.eigenvalues();
      std::vector<double> sv(ev.size());
      for (Eigen::Index i = 0; i < ev.size(); ++i) {
        sv[i] = std::sqrt(std::max(0.0, ev(i)));
      }
      std::sort(sv.rbegin(), sv.rend());
      for (std::size_t i = 0; i < out.k; ++i) {
        out.at(i, k, l) = sv[i];
      }
    }
  }
  return out;
}

inline double oracle_ratio(ParamTensor const &y, ParamTensor const &gt, GroupingMode g, std::size_t drop)
{
  auto const groups = channel_groups(g, y.dims().n);
  double total = 0.0;
  for (auto const &grp : groups) {
    auto const sp = truncate_spectrum(oracle_spectrum(y.channels(grp)), drop);
    auto const sg = truncate_spectrum(oracle_spectrum(gt.channels(grp)), drop);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < sp.values.size(); ++i) {
      num += (sg.values[i] - sp.values[i]) * (sg.values[i] - sp.values[i]);
      den += sg.values[i] * sg.values[i];
    }
    total += num / den;
  }
  return total / groups.size();
}

} // namespace mpmri::test
