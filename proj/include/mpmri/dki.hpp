#pragma once

#include "mpmri/qspace.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>

namespace mpmri {

/// Unique components of a fully symmetric 3x3x3x3 tensor, in the order
///   xxxx yyyy zzzz xxxy xxxz xyyy yyyz xzzz yzzz xxyy xxzz yyzz xxyz xyyz xyzz
/// with index multiplicities 1 1 1 4 4 4 4 4 4 6 6 6 12 12 12.
using KurtosisTensor = std::array<double, 15>;

inline constexpr std::array<std::array<int, 4>, 15> kKurtosisIndices{{{0, 0, 0, 0},
                                                                      {1, 1, 1, 1},
                                                                      {2, 2, 2, 2},
                                                                      {0, 0, 0, 1},
                                                                      {0, 0, 0, 2},
                                                                      {0, 1, 1, 1},
                                                                      {1, 1, 1, 2},
                                                                      {0, 2, 2, 2},
                                                                      {1, 2, 2, 2},
                                                                      {0, 0, 1, 1},
                                                                      {0, 0, 2, 2},
                                                                      {1, 1, 2, 2},
                                                                      {0, 0, 1, 2},
                                                                      {0, 1, 1, 2},
                                                                      {0, 1, 2, 2}}};
inline constexpr std::array<double, 15> kKurtosisMultiplicity{1, 1, 1, 4, 4, 4, 4, 4, 4, 6, 6, 6, 12, 12, 12};

struct DkiVoxel
{
  double s0 = 1.0;
  Eigen::Matrix3d d = Eigen::Matrix3d::Zero(); // mm^2/s
  KurtosisTensor k{};
};

struct DkiMetrics
{
  double kfa = 0.0;
  double mk = 0.0;
  double ak = 0.0;
  double rk = 0.0;
};

// Full 81-entry tensor, index ((i*3+j)*3+k)*3+l.
std::array<double, 81> expand_kurtosis(KurtosisTensor const &k);
// sum_ijkl g_i g_j g_k g_l K_ijkl
double kurtosis_projection(KurtosisTensor const &k, Eigen::Vector3d const &g);
double mean_diffusivity(DkiVoxel const &v);

/// ln S = ln s0 - b ADC(g) + b^2/6 MD^2 Kapp(g). b=0 entries return s0.
Eigen::VectorXd dki_forward(DkiVoxel const &v, GradientScheme const &scheme);

/// KFA, MK (256-point sphere average), AK (along the principal eigenvector) and
/// RK (64-point circle perpendicular to it). Apparent kurtosis is clamped to
/// [-3, 10] before averaging. Requires tr(D) > 0.
DkiMetrics dki_metrics(DkiVoxel const &v);

struct DkiFit
{
  DkiVoxel voxel;
  bool clamped = false; // some signals were <= 0 and were raised to 1e-8
  double condition = 0.0;
};

/// Two-pass weighted linear least-squares DKI fit. The design (22 columns:
/// ln s0, 6 diffusion, 15 MD^2-scaled kurtosis components) is factored once
/// and reused for every voxel.
class DkiFitter
{
public:
  explicit DkiFitter(GradientScheme const &scheme);

  DkiFit fit(std::span<double const> signals) const;
  double condition() const { return condition_; }

private:
  Eigen::MatrixXd design_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> ols_;
  double condition_ = 0.0;
};

DkiFit dki_fit_wlls(std::span<double const> signals, GradientScheme const &scheme);

// Parameter vector [ln s0, Dxx, Dyy, Dzz, Dxy, Dxz, Dyz, V(15)], V = MD^2 K.
Eigen::Matrix<double, 22, 1> dki_parameters(DkiVoxel const &v);

} // namespace mpmri
