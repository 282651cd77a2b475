#include "mpmri/dki.hpp"

#include "mpmri/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mpmri {

namespace {

constexpr double kAkcMin = -3.0;
constexpr double kAkcMax = 10.0;

double monomial(std::array<int, 4> const &idx, Eigen::Vector3d const &g)
{
  return g(idx[0]) * g(idx[1]) * g(idx[2]) * g(idx[3]);
}

std::vector<Eigen::Vector3d> const &sphere_grid()
{
  static std::vector<Eigen::Vector3d> const grid = [] {
    std::size_t const n = 256;
    double const golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Eigen::Vector3d> pts(n);
    for (std::size_t i = 0; i < n; ++i) {
      double const z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      double const r = std::sqrt(1.0 - z * z);
      double const phi = golden * static_cast<double>(i);
      pts[i] = Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z);
    }
    return pts;
  }();
  return grid;
}

double apparent_kurtosis(DkiVoxel const &v, double md, Eigen::Vector3d const &g)
{
  double const adc = g.dot(v.d * g);
  if (adc <= 0.0) {
    return 0.0;
  }
  double const akc = (md / adc) * (md / adc) * kurtosis_projection(v.k, g);
  return std::clamp(akc, kAkcMin, kAkcMax);
}

Eigen::RowVectorXd design_row(GradientEntry const &e)
{
  Eigen::RowVectorXd row(22);
  Eigen::Vector3d const &g = e.dir;
  double const b = e.b;
  row(0) = 1.0;
  row(1) = -b * g.x() * g.x();
  row(2) = -b * g.y() * g.y();
  row(3) = -b * g.z() * g.z();
  row(4) = -2.0 * b * g.x() * g.y();
  row(5) = -2.0 * b * g.x() * g.z();
  row(6) = -2.0 * b * g.y() * g.z();
  for (std::size_t u = 0; u < 15; ++u) {
    row(7 + static_cast<Eigen::Index>(u)) = b * b / 6.0 * kKurtosisMultiplicity[u] * monomial(kKurtosisIndices[u], g);
  }
  return row;
}

DkiVoxel from_parameters(Eigen::VectorXd const &p)
{
  DkiVoxel v;
  v.s0 = std::exp(p(0));
  v.d << p(1), p(4), p(5), p(4), p(2), p(6), p(5), p(6), p(3);
  double const md = v.d.trace() / 3.0;
  double const md2 = md * md;
  for (std::size_t u = 0; u < 15; ++u) {
    v.k[u] = md2 > 1e-30 ? p(7 + static_cast<Eigen::Index>(u)) / md2 : 0.0;
  }
  return v;
}

} // namespace

std::array<double, 81> expand_kurtosis(KurtosisTensor const &k)
{
  std::array<double, 81> full{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 3; ++a)
        for (int l = 0; l < 3; ++l) {
          std::array<int, 4> idx{i, j, a, l};
          std::sort(idx.begin(), idx.end());
          auto const it = std::find(kKurtosisIndices.begin(), kKurtosisIndices.end(), idx);
          full[((i * 3 + j) * 3 + a) * 3 + l] = k[static_cast<std::size_t>(it - kKurtosisIndices.begin())];
        }
  return full;
}

double kurtosis_projection(KurtosisTensor const &k, Eigen::Vector3d const &g)
{
  double acc = 0.0;
  for (std::size_t u = 0; u < 15; ++u) {
    acc += kKurtosisMultiplicity[u] * k[u] * monomial(kKurtosisIndices[u], g);
  }
  return acc;
}

double mean_diffusivity(DkiVoxel const &v)
{
  return v.d.trace() / 3.0;
}

Eigen::VectorXd dki_forward(DkiVoxel const &v, GradientScheme const &scheme)
{
  double const md = mean_diffusivity(v);
  Eigen::VectorXd out(scheme.size());
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    auto const &e = scheme.entries[i];
    if (e.b <= 0.0) {
      out(static_cast<Eigen::Index>(i)) = v.s0;
      continue;
    }
    double const adc = e.dir.dot(v.d * e.dir);
    double const kapp = kurtosis_projection(v.k, e.dir);
    out(static_cast<Eigen::Index>(i)) = v.s0 * std::exp(-e.b * adc + e.b * e.b / 6.0 * md * md * kapp);
  }
  return out;
}

DkiMetrics dki_metrics(DkiVoxel const &v)
{
  double const md = mean_diffusivity(v);
  if (!(md > 0.0)) {
    throw InputError("dki_metrics: trace of D must be positive");
  }
  DkiMetrics m;

  double sum = 0.0;
  for (auto const &g : sphere_grid()) {
    sum += apparent_kurtosis(v, md, g);
  }
  m.mk = sum / static_cast<double>(sphere_grid().size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(v.d);
  Eigen::Vector3d const e1 = es.eigenvectors().col(2);
  m.ak = apparent_kurtosis(v, md, e1);

  Eigen::Vector3d const p = es.eigenvectors().col(0);
  Eigen::Vector3d const q = es.eigenvectors().col(1);
  double rsum = 0.0;
  for (int j = 0; j < 64; ++j) {
    double const a = 2.0 * std::numbers::pi * j / 64.0;
    rsum += apparent_kurtosis(v, md, std::cos(a) * p + std::sin(a) * q);
  }
  m.rk = rsum / 64.0;

  auto const full = expand_kurtosis(v.k);
  double const mean_k = (v.k[0] + v.k[1] + v.k[2] + 2.0 * v.k[9] + 2.0 * v.k[10] + 2.0 * v.k[11]) / 5.0;
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 3; ++a)
        for (int l = 0; l < 3; ++l) {
          double const iso = ((i == j) * (a == l) + (i == a) * (j == l) + (i == l) * (j == a)) / 3.0;
          double const kv = full[((i * 3 + j) * 3 + a) * 3 + l];
          num += (kv - mean_k * iso) * (kv - mean_k * iso);
          den += kv * kv;
        }
  m.kfa = std::sqrt(den) < 1e-12 ? 0.0 : std::min(1.0, std::sqrt(num / den));
  return m;
}

DkiFitter::DkiFitter(GradientScheme const &scheme)
{
  scheme.validate();
  if (scheme.size() < 22) {
    throw InputError("dki fit: needs at least 22 measurements, scheme has " + std::to_string(scheme.size()));
  }
  if (scheme.shells().size() < 2) {
    throw InputError("dki fit: needs at least two nonzero shells");
  }
  design_.resize(static_cast<Eigen::Index>(scheme.size()), 22);
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    design_.row(static_cast<Eigen::Index>(i)) = design_row(scheme.entries[i]);
  }
  Eigen::MatrixXd scaled = design_;
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    double const n = scaled.col(c).norm();
    if (n > 0.0) {
      scaled.col(c) /= n;
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  auto const &sv = svd.singularValues();
  condition_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(condition_ < 1e10)) {
    throw InputError("dki fit: design matrix is rank deficient (column-scaled condition number " +
                     std::to_string(condition_) + ")");
  }
  ols_.compute(design_);
}

DkiFit DkiFitter::fit(std::span<double const> signals) const
{
  if (signals.size() != static_cast<std::size_t>(design_.rows())) {
    throw InputError("dki fit: signal count does not match scheme");
  }
  DkiFit out;
  out.condition = condition_;
  Eigen::VectorXd logs(design_.rows());
  for (std::size_t i = 0; i < signals.size(); ++i) {
    double s = signals[i];
    if (!(s > 0.0)) {
      s = 1e-8;
      out.clamped = true;
    }
    logs(static_cast<Eigen::Index>(i)) = std::log(s);
  }
  Eigen::VectorXd const beta_ols = ols_.solve(logs);

  // Weights are the squared predicted signals, so rows scale by S_pred.
  Eigen::VectorXd const sqrt_w = (design_ * beta_ols).array().exp();
  Eigen::MatrixXd const wx = sqrt_w.asDiagonal() * design_;
  Eigen::VectorXd const wy = sqrt_w.cwiseProduct(logs);
  Eigen::VectorXd const beta = wx.colPivHouseholderQr().solve(wy);
  if (!beta.allFinite()) {
    throw NumericalError("dki fit: non-finite parameters");
  }
  out.voxel = from_parameters(beta);
  return out;
}

DkiFit dki_fit_wlls(std::span<double const> signals, GradientScheme const &scheme)
{
  return DkiFitter(scheme).fit(signals);
}

Eigen::Matrix<double, 22, 1> dki_parameters(DkiVoxel const &v)
{
  Eigen::Matrix<double, 22, 1> p;
  double const md = mean_diffusivity(v);
  p(0) = std::log(v.s0);
  p(1) = v.d(0, 0);
  p(2) = v.d(1, 1);
  p(3) = v.d(2, 2);
  p(4) = v.d(0, 1);
  p(5) = v.d(0, 2);
  p(6) = v.d(1, 2);
  for (std::size_t u = 0; u < 15; ++u) {
    p(7 + static_cast<Eigen::Index>(u)) = md * md * v.k[u];
  }
  return p;
}

} // namespace mpmri
