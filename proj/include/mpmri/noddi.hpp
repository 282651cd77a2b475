#pragma once

#include "mpmri/qspace.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mpmri {

inline constexpr double kDiffPar = 1.7e-3; // intra/extra-neurite parallel diffusivity, mm^2/s
inline constexpr double kDiffIso = 3.0e-3; // free water, mm^2/s
inline constexpr double kKappaMax = 128.0;

struct NoddiVoxel
{
  double vic = 0.0;
  double viso = 0.0;
  double kappa = 0.0;
  Eigen::Vector3d mu = Eigen::Vector3d::UnitZ();
  double s0 = 1.0;
};

struct NoddiMetrics
{
  double od = 1.0;
  double vic = 0.0;
  double viso = 0.0;
};

double od_from_kappa(double kappa);
// Throws InputError for od outside (0, 1].
double kappa_from_od(double od);
NoddiMetrics noddi_metrics(NoddiVoxel const &v);

/// Product quadrature on the sphere in the frame of the Watson mean axis:
/// Gauss-Legendre in cos(theta) times the trapezoid rule in phi. Only the
/// quarter of the nodes that is distinct under phi -> -phi and n -> -n is
/// stored; the symmetries are folded into the weights.
class WatsonQuadrature
{
public:
  WatsonQuadrature(int n_theta = 48, int n_phi = 96);

  // Normalized Watson weights for concentration kappa (sum to 1).
  Eigen::ArrayXd weights(double kappa) const;
  // (g . n)^2 at every node for a gradient at angle acos(cos_psi) to the axis.
  Eigen::ArrayXd projections(double cos_psi) const;

  // Watson average of exp(-a (g.n)^2).
  double average(Eigen::ArrayXd const &weights, Eigen::ArrayXd const &proj, double a) const;

  Eigen::Index size() const { return cos_theta_.size(); }

private:
  Eigen::ArrayXd cos_theta_, sin_theta_, cos_phi_, base_weight_, x2_;
};

WatsonQuadrature const &default_quadrature();

/// Three-compartment NODDI signal with fixed diffusivities. Spherical integrals
/// use `quad`; b=0 entries return s0.
Eigen::VectorXd noddi_forward(NoddiVoxel const &v, GradientScheme const &scheme,
                              WatsonQuadrature const &quad = default_quadrature());

/// Dictionary fit: exhaustive search over vic (steps of 0.05) and 16
/// log-spaced kappa in [0.1, 64], then three rounds of per-coordinate interval
/// halving (coordinate moves are repeated at each step size until none
/// improves). The signal is linear in viso, so viso is solved in closed form
/// (clamped to [0, 1]) at every candidate instead of being gridded. The fibre axis comes from a log-linear tensor fit on the lowest
/// shell. Watson averages are read from a tricubic table built once per scheme
/// by the same quadrature as noddi_forward.
class NoddiFitter
{
public:
  explicit NoddiFitter(GradientScheme const &scheme);

  NoddiVoxel fit(std::span<double const> signals) const;

  // Table lookup of the Watson average, exposed for accuracy tests.
  double watson_average(double kappa, double a, double cos2) const;

  static std::vector<double> kappa_grid();

private:
  struct Stencil
  {
    int i0 = 0;
    double w[4] = {0, 0, 0, 0};
  };
  Stencil stencil_a(double a) const;
  Stencil stencil_c(double cos2) const;
  Stencil stencil_k(double log_kappa) const;
  double lookup(Stencil const &k, Stencil const &a, Stencil const &c) const;
  // Residual with viso solved in closed form; writes the optimal viso if asked.
  double objective(double vic, double log_kappa, std::vector<Stencil> const &cs, Eigen::VectorXd const &target,
                   double *viso) const;
  static double profile_viso(Eigen::VectorXd const &x, Eigen::VectorXd const &y, Eigen::VectorXd const &target,
                             double *viso);
  Eigen::Vector3d principal_axis(std::span<double const> normalized) const;

  GradientScheme scheme_;
  std::vector<std::size_t> weighted_, b0_;
  Eigen::VectorXd bvals_;            // per weighted entry
  Eigen::MatrixXd dirs_;             // 3 x weighted
  std::vector<std::size_t> dti_rows_; // weighted-entry positions used for the axis fit
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> dti_qr_;

  int nk_ = 0, na_ = 0, nc_ = 0;
  double logk_lo_ = 0.0, logk_step_ = 0.0, a_step_ = 0.0, c_step_ = 0.0;
  std::vector<double> table_; // [k][a][c]
};

NoddiVoxel noddi_fit_grid(std::span<double const> signals, GradientScheme const &scheme);

} // namespace mpmri
