#include "mpmri/noddi.hpp"

#include "mpmri/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mpmri {

namespace {

constexpr double kKappaGridLo = 0.1;
constexpr double kKappaGridHi = 64.0;
constexpr int kKappaGridCount = 16;
constexpr int kKappaSubdiv = 4; // table nodes per kappa grid step
constexpr double kFractionStep = 0.05;
constexpr int kRefineRounds = 3;
constexpr int kMaxSweeps = 64;

struct GaussLegendre
{
  std::vector<double> x, w;
};

GaussLegendre gauss_legendre(int n)
{
  GaussLegendre gl;
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double const p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double const dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) {
        break;
      }
    }
    // Recompute the derivative at the converged node for the weight.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double const p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    gl.x.push_back(x);
    gl.w.push_back(2.0 / ((1.0 - x * x) * dp * dp));
  }
  return gl;
}

void check_voxel(NoddiVoxel const &v)
{
  auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!in_unit(v.vic) || !in_unit(v.viso)) {
    throw InputError("noddi: volume fractions must lie in [0, 1]");
  }
  if (!(v.kappa >= 0.0 && v.kappa <= kKappaMax)) {
    throw InputError("noddi: kappa must lie in [0, 128]");
  }
  if (!(std::abs(v.mu.norm() - 1.0) < 1e-6)) {
    throw InputError("noddi: mean orientation must be a unit vector");
  }
}

// Cubic Lagrange weights on 4 consecutive nodes; u in node units.
template <typename S>
S cubic_stencil(double u, int n)
{
  S s;
  int i0 = static_cast<int>(std::floor(u)) - 1;
  i0 = std::clamp(i0, 0, n - 4);
  double const x = u - i0;
  s.i0 = i0;
  s.w[0] = -(x - 1) * (x - 2) * (x - 3) / 6.0;
  s.w[1] = x * (x - 2) * (x - 3) / 2.0;
  s.w[2] = -x * (x - 1) * (x - 3) / 2.0;
  s.w[3] = x * (x - 1) * (x - 2) / 6.0;
  return s;
}

} // namespace

double od_from_kappa(double kappa)
{
  if (!(kappa >= 0.0)) {
    throw InputError("od_from_kappa: kappa must be >= 0");
  }
  if (kappa == 0.0) {
    return 1.0;
  }
  return 2.0 / std::numbers::pi * std::atan(1.0 / kappa);
}

double kappa_from_od(double od)
{
  if (!(od > 0.0 && od <= 1.0)) {
    throw InputError("kappa_from_od: od must lie in (0, 1]");
  }
  return std::max(0.0, 1.0 / std::tan(od * std::numbers::pi / 2.0));
}

NoddiMetrics noddi_metrics(NoddiVoxel const &v)
{
  return {od_from_kappa(v.kappa), v.vic, v.viso};
}

WatsonQuadrature::WatsonQuadrature(int n_theta, int n_phi)
{
  if (n_theta < 2 || n_theta % 2 || n_phi < 2 || n_phi % 2) {
    throw InputError("WatsonQuadrature: orders must be even");
  }
  auto const gl = gauss_legendre(n_theta);
  std::vector<double> ct, st, cp, bw;
  double const dphi = 2.0 * std::numbers::pi / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    if (gl.x[i] <= 0.0) {
      continue; // folded onto its antipode
    }
    for (int j = 0; j <= n_phi / 2; ++j) {
      double const mult = (j == 0 || j == n_phi / 2) ? 1.0 : 2.0;
      ct.push_back(gl.x[i]);
      st.push_back(std::sqrt(1.0 - gl.x[i] * gl.x[i]));
      cp.push_back(std::cos(j * dphi));
      bw.push_back(2.0 * mult * gl.w[i] * dphi);
    }
  }
  auto to_array = [](std::vector<double> const &v) { return Eigen::Map<Eigen::ArrayXd const>(v.data(), v.size()).eval(); };
  cos_theta_ = to_array(ct);
  sin_theta_ = to_array(st);
  cos_phi_ = to_array(cp);
  base_weight_ = to_array(bw);
  x2_ = cos_theta_.square();
}

Eigen::ArrayXd WatsonQuadrature::weights(double kappa) const
{
  Eigen::ArrayXd w = base_weight_ * (kappa * (x2_ - 1.0)).exp();
  return w / w.sum();
}

Eigen::ArrayXd WatsonQuadrature::projections(double cos_psi) const
{
  double const c = std::clamp(std::abs(cos_psi), 0.0, 1.0);
  double const s = std::sqrt(1.0 - c * c);
  return (s * sin_theta_ * cos_phi_ + c * cos_theta_).square();
}

double WatsonQuadrature::average(Eigen::ArrayXd const &weights, Eigen::ArrayXd const &proj, double a) const
{
  return (weights * (-a * proj).exp()).sum();
}

WatsonQuadrature const &default_quadrature()
{
  static WatsonQuadrature const q;
  return q;
}

Eigen::VectorXd noddi_forward(NoddiVoxel const &v, GradientScheme const &scheme, WatsonQuadrature const &quad)
{
  check_voxel(v);
  Eigen::ArrayXd const w = quad.weights(v.kappa);
  double const dperp = kDiffPar * (1.0 - v.vic);
  Eigen::VectorXd out(scheme.size());
  Eigen::ArrayXd e(quad.size());
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    auto const &entry = scheme.entries[i];
    auto const ii = static_cast<Eigen::Index>(i);
    if (entry.b <= 0.0) {
      out(ii) = v.s0;
      continue;
    }
    double const b = entry.b;
    Eigen::ArrayXd const proj = quad.projections(entry.dir.dot(v.mu));
    double const a_ic = (w * (-b * kDiffPar * proj).exp()).sum();
    double const a_ec = std::exp(-b * dperp) * (w * (-b * kDiffPar * v.vic * proj).exp()).sum();
    double const tissue = v.vic * a_ic + (1.0 - v.vic) * a_ec;
    out(ii) = v.s0 * ((1.0 - v.viso) * tissue + v.viso * std::exp(-b * kDiffIso));
  }
  return out;
}

std::vector<double> NoddiFitter::kappa_grid()
{
  std::vector<double> k(kKappaGridCount);
  double const step = std::log(kKappaGridHi / kKappaGridLo) / (kKappaGridCount - 1);
  for (int i = 0; i < kKappaGridCount; ++i) {
    k[i] = kKappaGridLo * std::exp(step * i);
  }
  return k;
}

NoddiFitter::NoddiFitter(GradientScheme const &scheme)
  : scheme_{scheme}
{
  scheme_.validate();
  b0_ = scheme_.b0_indices();
  if (b0_.empty()) {
    throw InputError("noddi fit: scheme has no b=0 entry");
  }
  auto const shells = scheme_.shells();
  if (shells.size() < 2) {
    throw InputError("noddi fit: needs at least two nonzero shells");
  }
  for (std::size_t i = 0; i < scheme_.size(); ++i) {
    if (scheme_.entries[i].b > 0.0) {
      weighted_.push_back(i);
    }
  }
  auto const nw = static_cast<Eigen::Index>(weighted_.size());
  bvals_.resize(nw);
  dirs_.resize(3, nw);
  for (Eigen::Index j = 0; j < nw; ++j) {
    bvals_(j) = scheme_.entries[weighted_[j]].b;
    dirs_.col(j) = scheme_.entries[weighted_[j]].dir;
  }

  // Axis fit rows: lowest shell, or every weighted entry if it is too small.
  for (Eigen::Index j = 0; j < nw; ++j) {
    if (std::abs(bvals_(j) - shells.front()) <= 1e-3 * shells.front()) {
      dti_rows_.push_back(static_cast<std::size_t>(j));
    }
  }
  if (dti_rows_.size() < 6) {
    dti_rows_.resize(weighted_.size());
    std::iota(dti_rows_.begin(), dti_rows_.end(), 0);
  }
  Eigen::MatrixXd dti(static_cast<Eigen::Index>(dti_rows_.size()), 6);
  for (std::size_t r = 0; r < dti_rows_.size(); ++r) {
    Eigen::Vector3d const g = dirs_.col(static_cast<Eigen::Index>(dti_rows_[r]));
    double const b = bvals_(static_cast<Eigen::Index>(dti_rows_[r]));
    dti.row(static_cast<Eigen::Index>(r)) << b * g.x() * g.x(), b * g.y() * g.y(), b * g.z() * g.z(),
        2 * b * g.x() * g.y(), 2 * b * g.x() * g.z(), 2 * b * g.y() * g.z();
  }
  dti_qr_.compute(dti);

  // Watson-average table over (log kappa, a, cos^2).
  nk_ = (kKappaGridCount - 1) * kKappaSubdiv + 1;
  logk_lo_ = std::log(kKappaGridLo);
  logk_step_ = std::log(kKappaGridHi / kKappaGridLo) / (nk_ - 1);
  double const a_max = bvals_.maxCoeff() * kDiffPar;
  na_ = std::max(4, static_cast<int>(std::ceil(a_max / 0.1)) + 1);
  a_step_ = a_max / (na_ - 1);
  nc_ = 41;
  c_step_ = 1.0 / (nc_ - 1);

  auto const &quad = default_quadrature();
  Eigen::MatrixXd wk(nk_, quad.size());
  for (int k = 0; k < nk_; ++k) {
    wk.row(k) = quad.weights(std::exp(logk_lo_ + k * logk_step_)).matrix().transpose();
  }
  Eigen::MatrixXd e(quad.size(), static_cast<Eigen::Index>(na_) * nc_);
  for (int c = 0; c < nc_; ++c) {
    Eigen::ArrayXd const proj = quad.projections(std::sqrt(c * c_step_));
    for (int a = 0; a < na_; ++a) {
      e.col(a * nc_ + c) = (-(a * a_step_) * proj).exp().matrix();
    }
  }
  Eigen::MatrixXd const t = wk * e;
  table_.resize(static_cast<std::size_t>(nk_) * na_ * nc_);
  for (int k = 0; k < nk_; ++k) {
    for (int col = 0; col < na_ * nc_; ++col) {
      table_[static_cast<std::size_t>(k) * na_ * nc_ + col] = t(k, col);
    }
  }
}

NoddiFitter::Stencil NoddiFitter::stencil_a(double a) const
{
  return cubic_stencil<Stencil>(a / a_step_, na_);
}

NoddiFitter::Stencil NoddiFitter::stencil_c(double cos2) const
{
  return cubic_stencil<Stencil>(std::clamp(cos2, 0.0, 1.0) / c_step_, nc_);
}

NoddiFitter::Stencil NoddiFitter::stencil_k(double log_kappa) const
{
  double const u = (log_kappa - logk_lo_) / logk_step_;
  double const r = std::round(u);
  if (std::abs(u - r) < 1e-12) {
    Stencil s;
    s.i0 = static_cast<int>(r);
    s.w[0] = 1.0;
    return s;
  }
  return cubic_stencil<Stencil>(u, nk_);
}

double NoddiFitter::lookup(Stencil const &k, Stencil const &a, Stencil const &c) const
{
  double acc = 0.0;
  std::size_t const plane = static_cast<std::size_t>(na_) * nc_;
  for (int i = 0; i < 4; ++i) {
    if (k.w[i] == 0.0) {
      continue;
    }
    double inner = 0.0;
    for (int j = 0; j < 4; ++j) {
      double const *row = &table_[static_cast<std::size_t>(k.i0 + i) * plane +
                                  static_cast<std::size_t>(a.i0 + j) * nc_ + c.i0];
      inner += a.w[j] * (c.w[0] * row[0] + c.w[1] * row[1] + c.w[2] * row[2] + c.w[3] * row[3]);
    }
    acc += k.w[i] * inner;
  }
  return acc;
}

double NoddiFitter::watson_average(double kappa, double a, double cos2) const
{
  return lookup(stencil_k(std::log(kappa)), stencil_a(a), stencil_c(cos2));
}

double NoddiFitter::objective(double vic, double log_kappa, std::vector<Stencil> const &cs,
                              Eigen::VectorXd const &target, double *viso) const
{
  Stencil const ks = stencil_k(log_kappa);
  auto const nw = bvals_.size();
  Eigen::VectorXd x(nw), y(nw);
  for (Eigen::Index d = 0; d < nw; ++d) {
    double const b = bvals_(d);
    double const a_ic = lookup(ks, stencil_a(b * kDiffPar), cs[d]);
    double const a_ec = std::exp(-b * kDiffPar * (1.0 - vic)) * lookup(ks, stencil_a(b * kDiffPar * vic), cs[d]);
    x(d) = vic * a_ic + (1.0 - vic) * a_ec;
    y(d) = std::exp(-b * kDiffIso);
  }
  return profile_viso(x, y, target, viso);
}

double NoddiFitter::profile_viso(Eigen::VectorXd const &x, Eigen::VectorXd const &y, Eigen::VectorXd const &target,
                                 double *viso)
{
  // S = x + viso (y - x) is linear in viso: least squares in closed form, clamped.
  Eigen::VectorXd const dy = y - x;
  Eigen::VectorXd const r0 = target - x;
  double const den = dy.squaredNorm();
  double v = den > 0.0 ? std::clamp(dy.dot(r0) / den, 0.0, 1.0) : 0.0;
  if (viso) {
    *viso = v;
  }
  return (r0 - v * dy).squaredNorm();
}

Eigen::Vector3d NoddiFitter::principal_axis(std::span<double const> normalized) const
{
  Eigen::VectorXd y(static_cast<Eigen::Index>(dti_rows_.size()));
  for (std::size_t r = 0; r < dti_rows_.size(); ++r) {
    y(static_cast<Eigen::Index>(r)) = -std::log(std::max(normalized[dti_rows_[r]], 1e-8));
  }
  Eigen::VectorXd const p = dti_qr_.solve(y);
  Eigen::Matrix3d d;
  d << p(0), p(3), p(4), p(3), p(1), p(5), p(4), p(5), p(2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(d);
  return es.eigenvectors().col(2).normalized();
}

NoddiVoxel NoddiFitter::fit(std::span<double const> signals) const
{
  if (signals.size() != scheme_.size()) {
    throw InputError("noddi fit: signal count does not match scheme");
  }
  double s0 = 0.0;
  for (std::size_t i : b0_) {
    s0 += signals[i];
  }
  s0 /= static_cast<double>(b0_.size());
  if (!(s0 > 0.0)) {
    throw InputError("noddi fit: b=0 signal must be positive");
  }
  auto const nw = bvals_.size();
  Eigen::VectorXd target(nw);
  std::vector<double> normalized(weighted_.size());
  for (Eigen::Index d = 0; d < nw; ++d) {
    target(d) = signals[weighted_[d]] / s0;
    normalized[d] = target(d);
  }

  NoddiVoxel out;
  out.s0 = s0;
  out.mu = principal_axis(normalized);

  std::vector<Stencil> cs(weighted_.size());
  Eigen::VectorXd y(nw);
  for (Eigen::Index d = 0; d < nw; ++d) {
    double const c = dirs_.col(d).dot(out.mu);
    cs[d] = stencil_c(c * c);
    y(d) = std::exp(-bvals_(d) * kDiffIso);
  }

  int const nf = static_cast<int>(std::lround(1.0 / kFractionStep)) + 1;
  double best = std::numeric_limits<double>::infinity();
  double best_vic = 0.0, best_logk = 0.0;
  Eigen::VectorXd a_ic(nw), x(nw);
  for (int ki = 0; ki < kKappaGridCount; ++ki) {
    Stencil ks;
    ks.i0 = ki * kKappaSubdiv;
    ks.w[0] = 1.0;
    for (Eigen::Index d = 0; d < nw; ++d) {
      a_ic(d) = lookup(ks, stencil_a(bvals_(d) * kDiffPar), cs[d]);
    }
    for (int vi = 0; vi < nf; ++vi) {
      double const vic = vi * kFractionStep;
      for (Eigen::Index d = 0; d < nw; ++d) {
        double const b = bvals_(d);
        double const a_ec = std::exp(-b * kDiffPar * (1.0 - vic)) * lookup(ks, stencil_a(b * kDiffPar * vic), cs[d]);
        x(d) = vic * a_ic(d) + (1.0 - vic) * a_ec;
      }
      double const r = profile_viso(x, y, target, nullptr);
      if (r < best) {
        best = r;
        best_vic = vic;
        best_logk = logk_lo_ + ki * kKappaSubdiv * logk_step_;
      }
    }
  }

  // Interval halving around the best cell, one coordinate at a time.
  double p[2] = {best_vic, best_logk};
  double const lo[2] = {0.0, logk_lo_};
  double const hi[2] = {1.0, logk_lo_ + (nk_ - 1) * logk_step_};
  double step[2] = {kFractionStep, kKappaSubdiv * logk_step_};
  best = objective(p[0], p[1], cs, target, nullptr);
  for (int round = 0; round < kRefineRounds; ++round) {
    step[0] *= 0.5;
    step[1] *= 0.5;
    // Keep stepping at this resolution until no single-coordinate move helps.
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      bool moved = false;
      for (int c = 0; c < 2; ++c) {
        double const centre = p[c];
        for (double cand : {centre - step[c], centre + step[c]}) {
          double q[2] = {p[0], p[1]};
          q[c] = std::clamp(cand, lo[c], hi[c]);
          double const r = objective(q[0], q[1], cs, target, nullptr);
          if (r < best) {
            best = r;
            p[c] = q[c];
            moved = true;
          }
        }
      }
      if (!moved) {
        break;
      }
    }
  }
  double viso = 0.0;
  objective(p[0], p[1], cs, target, &viso);
  out.vic = p[0];
  out.viso = viso;
  out.kappa = std::exp(p[1]);
  return out;
}
NoddiVoxel noddi_fit_grid(std::span<double const> signals, GradientScheme const &scheme)
{
  return NoddiFitter(scheme).fit(signals);
}

} // namespace mpmri
