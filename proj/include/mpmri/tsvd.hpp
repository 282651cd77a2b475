#pragma once

#include "mpmri/tensor.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <vector>

namespace mpmri {

using Cx = std::complex<double>;

/// Singular values of every transform-domain slice, K = min(W, H) per slice.
/// Stored K x S x N row-major: values[(i * S + k) * N + l] is the i-th largest
/// singular value of frequency slice (k, l).
struct SingularSpectrum
{
  std::size_t k = 0, s = 0, n = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t ks, std::size_t ln) const { return values[(i * s + ks) * n + ln]; }
  double &at(std::size_t i, std::size_t ks, std::size_t ln) { return values[(i * s + ks) * n + ln]; }
  double squared_norm() const;
};

struct TsvdSlice
{
  Eigen::MatrixXcd u;   // W x K
  Eigen::VectorXd sigma; // K, descending
  Eigen::MatrixXcd v;   // H x K
};

/// Order-4 t-SVD in the transform domain. slices[k * N + l] factors the DFT
/// slice at frequencies (k, l) of modes 3 and 4.
struct TsvdFactors
{
  Dims4 dims;
  std::vector<TsvdSlice> slices;

  SingularSpectrum spectrum() const;
};

// Unnormalized forward DFT along modes 3 and 4. Returns S*N complex W x H slices.
std::vector<Eigen::MatrixXcd> forward_dft(ParamTensor const &t);
// Inverse DFT (1/(S*N) scaling) back to a real tensor; imaginary parts dropped.
ParamTensor inverse_dft(std::vector<Eigen::MatrixXcd> const &slices, Dims4 dims);

TsvdFactors tsvd(ParamTensor const &t);

// Spectrum of the whole tensor (equivalent to Merged grouping).
SingularSpectrum singular_spectrum(ParamTensor const &t);
// One spectrum per channel group.
std::vector<SingularSpectrum> tsvd_spectrum(ParamTensor const &t, GroupingMode grouping);

// Zero the `drop` smallest values of each frontal slice. Requires drop < K.
SingularSpectrum truncate_spectrum(SingularSpectrum s, std::size_t drop);
TsvdFactors truncate_factors(TsvdFactors f, std::size_t drop);

ParamTensor reconstruct(TsvdFactors const &f);

struct TdrDiagnostics
{
  // Slices where two retained singular values of the prediction are closer
  // than 1e-12; the gradient there is a subgradient choice.
  std::size_t degenerate_slices = 0;
};

/// Relative spectral distance ||S_gt - S||^2 / ||S_gt||^2, averaged over the
/// channel groups. Throws InputError when a reference spectrum is zero.
double tdr_loss(ParamTensor const &y, ParamTensor const &y_gt, GroupingMode grouping, std::size_t drop);

// Gradient of tdr_loss with respect to y.
ParamTensor tdr_grad(ParamTensor const &y, ParamTensor const &y_gt, GroupingMode grouping, std::size_t drop,
                     TdrDiagnostics *diag = nullptr);

struct TdrEvaluation
{
  double value = 0.0;
  ParamTensor grad; // empty when not requested
  TdrDiagnostics diag;
};

/// Loss (and optionally gradient) against precomputed reference spectra, one
/// per group as returned by tsvd_spectrum(y_gt, grouping). Used by training,
/// where the reference spectra of a patch are reused.
TdrEvaluation tdr_evaluate(ParamTensor const &y, std::vector<SingularSpectrum> const &gt_spectra,
                           GroupingMode grouping, std::size_t drop, bool with_grad);

} // namespace mpmri
