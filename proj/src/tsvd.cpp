#include "mpmri/tsvd.hpp"

#include "mpmri/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mpmri {

namespace {

// Twiddle table: sign=-1 for the forward transform, +1 for the inverse.
Eigen::MatrixXcd dft_matrix(std::size_t n, int sign)
{
  Eigen::MatrixXcd a(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      double const ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      a(k, j) = Cx(std::cos(ang), std::sin(ang));
    }
  }
  return a;
}

void check_input(ParamTensor const &t)
{
  Dims4 const d = t.dims();
  if (d.w == 0 || d.h == 0 || d.s == 0 || d.n == 0) {
    throw InputError("tsvd: empty dimension in " + to_string(d));
  }
  auto const data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw InputError("tsvd: non-finite value at flat index " + std::to_string(i));
    }
  }
}

// Index of the slice holding the complex conjugate of slice (k, l).
std::size_t conjugate_slice(std::size_t k, std::size_t l, std::size_t s, std::size_t n)
{
  return ((s - k) % s) * n + (n - l) % n;
}

TsvdSlice factor_slice(Eigen::MatrixXcd const &m)
{
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

double spectral_ratio(SingularSpectrum const &pred, SingularSpectrum const &ref)
{
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < ref.values.size(); ++i) {
    double const d = ref.values[i] - pred.values[i];
    num += d * d;
    den += ref.values[i] * ref.values[i];
  }
  if (!(den > 0.0)) {
    throw InputError("tdr: reference spectrum is identically zero");
  }
  return num / den;
}

} // namespace

double SingularSpectrum::squared_norm() const
{
  return std::inner_product(values.begin(), values.end(), values.begin(), 0.0);
}

SingularSpectrum TsvdFactors::spectrum() const
{
  SingularSpectrum out;
  out.k = std::min(dims.w, dims.h);
  out.s = dims.s;
  out.n = dims.n;
  out.values.assign(out.k * out.s * out.n, 0.0);
  for (std::size_t ks = 0; ks < dims.s; ++ks) {
    for (std::size_t ln = 0; ln < dims.n; ++ln) {
      auto const &sig = slices[ks * dims.n + ln].sigma;
      for (std::size_t i = 0; i < out.k; ++i) {
        out.at(i, ks, ln) = sig(static_cast<Eigen::Index>(i));
      }
    }
  }
  return out;
}

std::vector<Eigen::MatrixXcd> forward_dft(ParamTensor const &t)
{
  Dims4 const d = t.dims();
  Eigen::MatrixXcd const as = dft_matrix(d.s, -1);
  Eigen::MatrixXcd const an = dft_matrix(d.n, -1);
  std::vector<Eigen::MatrixXcd> slices(d.s * d.n, Eigen::MatrixXcd(d.w, d.h));
  Eigen::MatrixXd fiber(d.s, d.n);
  Eigen::MatrixXcd freq(d.s, d.n);
  auto const data = t.data();
  for (std::size_t w = 0; w < d.w; ++w) {
    for (std::size_t h = 0; h < d.h; ++h) {
      std::size_t const base = t.index(w, h, 0, 0);
      for (std::size_t s = 0; s < d.s; ++s) {
        for (std::size_t n = 0; n < d.n; ++n) {
          fiber(s, n) = data[base + s * d.n + n];
        }
      }
      freq.noalias() = as * fiber.cast<Cx>() * an.transpose();
      for (std::size_t k = 0; k < d.s; ++k) {
        for (std::size_t l = 0; l < d.n; ++l) {
          slices[k * d.n + l](w, h) = freq(k, l);
        }
      }
    }
  }
  return slices;
}

ParamTensor inverse_dft(std::vector<Eigen::MatrixXcd> const &slices, Dims4 d)
{
  if (slices.size() != d.s * d.n) {
    throw InputError("inverse_dft: slice count does not match dims");
  }
  Eigen::MatrixXcd const as = dft_matrix(d.s, +1);
  Eigen::MatrixXcd const an = dft_matrix(d.n, +1);
  double const scale = 1.0 / static_cast<double>(d.s * d.n);
  ParamTensor out(d);
  auto data = out.data();
  Eigen::MatrixXcd freq(d.s, d.n);
  Eigen::MatrixXcd fiber(d.s, d.n);
  for (std::size_t w = 0; w < d.w; ++w) {
    for (std::size_t h = 0; h < d.h; ++h) {
      for (std::size_t k = 0; k < d.s; ++k) {
        for (std::size_t l = 0; l < d.n; ++l) {
          freq(k, l) = slices[k * d.n + l](w, h);
        }
      }
      fiber.noalias() = as * freq * an.transpose();
      std::size_t const base = out.index(w, h, 0, 0);
      for (std::size_t s = 0; s < d.s; ++s) {
        for (std::size_t n = 0; n < d.n; ++n) {
          data[base + s * d.n + n] = scale * fiber(s, n).real();
        }
      }
    }
  }
  return out;
}

TsvdFactors tsvd(ParamTensor const &t)
{
  check_input(t);
  Dims4 const d = t.dims();
  auto const slices = forward_dft(t);
  TsvdFactors f{d, std::vector<TsvdSlice>(slices.size())};
  for (std::size_t k = 0; k < d.s; ++k) {
    for (std::size_t l = 0; l < d.n; ++l) {
      std::size_t const j = k * d.n + l;
      std::size_t const p = conjugate_slice(k, l, d.s, d.n);
      if (p < j) {
        // Real input: slice p is conj(slice j), so its factors are the conjugates.
        auto const &src = f.slices[p];
        f.slices[j] = {src.u.conjugate(), src.sigma, src.v.conjugate()};
      } else {
        f.slices[j] = factor_slice(slices[j]);
      }
    }
  }
  return f;
}

SingularSpectrum singular_spectrum(ParamTensor const &t)
{
  check_input(t);
  Dims4 const d = t.dims();
  auto const slices = forward_dft(t);
  SingularSpectrum out;
  out.k = std::min(d.w, d.h);
  out.s = d.s;
  out.n = d.n;
  out.values.assign(out.k * d.s * d.n, 0.0);
  for (std::size_t k = 0; k < d.s; ++k) {
    for (std::size_t l = 0; l < d.n; ++l) {
      std::size_t const j = k * d.n + l;
      std::size_t const p = conjugate_slice(k, l, d.s, d.n);
      std::size_t const src = std::min(p, j);
      if (p < j) {
        for (std::size_t i = 0; i < out.k; ++i) {
          out.at(i, k, l) = out.at(i, src / d.n, src % d.n);
        }
        continue;
      }
      Eigen::BDCSVD<Eigen::MatrixXcd> svd(slices[j]);
      auto const &sig = svd.singularValues();
      for (std::size_t i = 0; i < out.k; ++i) {
        out.at(i, k, l) = sig(static_cast<Eigen::Index>(i));
      }
    }
  }
  return out;
}

std::vector<SingularSpectrum> tsvd_spectrum(ParamTensor const &t, GroupingMode grouping)
{
  std::vector<SingularSpectrum> out;
  auto const groups = channel_groups(grouping, t.dims().n);
  out.reserve(groups.size());
  if (groups.size() == 1) {
    out.push_back(singular_spectrum(t));
    return out;
  }
  for (auto const &g : groups) {
    out.push_back(singular_spectrum(t.channels(g)));
  }
  return out;
}

SingularSpectrum truncate_spectrum(SingularSpectrum s, std::size_t drop)
{
  if (drop >= s.k) {
    throw InputError("truncate_spectrum: drop " + std::to_string(drop) + " must be below K = " + std::to_string(s.k));
  }
  for (std::size_t i = s.k - drop; i < s.k; ++i) {
    for (std::size_t ks = 0; ks < s.s; ++ks) {
      for (std::size_t ln = 0; ln < s.n; ++ln) {
        s.at(i, ks, ln) = 0.0;
      }
    }
  }
  return s;
}

TsvdFactors truncate_factors(TsvdFactors f, std::size_t drop)
{
  std::size_t const k = std::min(f.dims.w, f.dims.h);
  if (drop >= k) {
    throw InputError("truncate_factors: drop " + std::to_string(drop) + " must be below K = " + std::to_string(k));
  }
  for (auto &sl : f.slices) {
    sl.sigma.tail(static_cast<Eigen::Index>(drop)).setZero();
  }
  return f;
}

ParamTensor reconstruct(TsvdFactors const &f)
{
  std::vector<Eigen::MatrixXcd> slices;
  slices.reserve(f.slices.size());
  for (auto const &sl : f.slices) {
    slices.push_back(sl.u * sl.sigma.cast<Cx>().asDiagonal() * sl.v.adjoint());
  }
  return inverse_dft(slices, f.dims);
}

TdrEvaluation tdr_evaluate(ParamTensor const &y, std::vector<SingularSpectrum> const &gt_spectra,
                           GroupingMode grouping, std::size_t drop, bool with_grad)
{
  Dims4 const d = y.dims();
  auto const groups = channel_groups(grouping, d.n);
  if (gt_spectra.size() != groups.size()) {
    throw InputError("tdr: reference spectrum count does not match grouping");
  }
  double const inv_groups = 1.0 / static_cast<double>(groups.size());
  TdrEvaluation out;
  if (with_grad) {
    out.grad = ParamTensor(d);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ParamTensor const part = groups.size() == 1 ? y : y.channels(groups[g]);
    SingularSpectrum const ref = truncate_spectrum(gt_spectra[g], drop);
    if (ref.k != std::min(d.w, d.h) || ref.s != d.s || ref.n != groups[g].size()) {
      throw InputError("tdr: reference spectrum shape does not match prediction");
    }
    double const den = ref.squared_norm();
    if (!(den > 0.0)) {
      throw InputError("tdr: reference spectrum is identically zero");
    }
    if (!with_grad) {
      out.value += inv_groups * spectral_ratio(truncate_spectrum(singular_spectrum(part), drop), ref);
      continue;
    }

    TsvdFactors const f = tsvd(part);
    SingularSpectrum const pred = truncate_spectrum(f.spectrum(), drop);
    out.value += inv_groups * spectral_ratio(pred, ref);

    std::size_t const kk = ref.k;
    std::size_t const keep = kk - drop;
    Dims4 const pd = part.dims();
    std::vector<Eigen::MatrixXcd> gslices(f.slices.size());
    for (std::size_t ks = 0; ks < pd.s; ++ks) {
      for (std::size_t ln = 0; ln < pd.n; ++ln) {
        auto const &sl = f.slices[ks * pd.n + ln];
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kk));
        for (std::size_t i = 0; i < keep; ++i) {
          c(static_cast<Eigen::Index>(i)) = 2.0 * (pred.at(i, ks, ln) - ref.at(i, ks, ln)) / den * inv_groups;
        }
        for (std::size_t i = 0; i + 1 < keep; ++i) {
          if (sl.sigma(static_cast<Eigen::Index>(i)) - sl.sigma(static_cast<Eigen::Index>(i + 1)) < 1e-12) {
            ++out.diag.degenerate_slices;
            break;
          }
        }
        gslices[ks * pd.n + ln] = sl.u * c.cast<Cx>().asDiagonal() * sl.v.adjoint();
      }
    }
    // Adjoint of the unnormalized forward DFT = (S*N) x inverse DFT.
    ParamTensor gpart = inverse_dft(gslices, pd);
    gpart *= static_cast<double>(pd.s * pd.n);
    if (groups.size() == 1) {
      out.grad = std::move(gpart);
    } else {
      out.grad.set_channels(groups[g], gpart);
    }
  }
  return out;
}

double tdr_loss(ParamTensor const &y, ParamTensor const &y_gt, GroupingMode grouping, std::size_t drop)
{
  if (!(y.dims() == y_gt.dims())) {
    throw InputError("tdr_loss: prediction and reference dims differ");
  }
  return tdr_evaluate(y, tsvd_spectrum(y_gt, grouping), grouping, drop, false).value;
}

ParamTensor tdr_grad(ParamTensor const &y, ParamTensor const &y_gt, GroupingMode grouping, std::size_t drop,
                     TdrDiagnostics *diag)
{
  if (!(y.dims() == y_gt.dims())) {
    throw InputError("tdr_grad: prediction and reference dims differ");
  }
  auto ev = tdr_evaluate(y, tsvd_spectrum(y_gt, grouping), grouping, drop, true);
  if (diag) {
    *diag = ev.diag;
  }
  return std::move(ev.grad);
}

} // namespace mpmri
