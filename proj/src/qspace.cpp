#include "mpmri/qspace.hpp"

#include "mpmri/error.hpp"
#include "mpmri/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace mpmri {

namespace {

bool same_shell(double a, double b)
{
  return std::abs(a - b) <= 1e-3 * std::max(std::abs(a), std::abs(b));
}

double pair_energy(Eigen::Vector3d const &a, Eigen::Vector3d const &b)
{
  return 1.0 / (a - b).norm() + 1.0 / (a + b).norm();
}

double antipodal_distance(Eigen::Vector3d const &a, Eigen::Vector3d const &b)
{
  return std::min((a - b).norm(), (a + b).norm());
}

std::vector<Eigen::Vector3d> fibonacci_hemisphere(std::size_t n, Rng &rng)
{
  double const golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  double const offset = 2.0 * std::numbers::pi * rng.uniform();
  std::vector<Eigen::Vector3d> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    double const z = 1.0 - (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    double const r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double const phi = offset + golden * static_cast<double>(i);
    pts[i] = Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z);
  }
  return pts;
}

void relax(std::vector<Eigen::Vector3d> &pts, int iterations)
{
  std::size_t const n = pts.size();
  if (n < 2) {
    return;
  }
  double energy = antipodal_energy(pts);
  double step = 0.01 / static_cast<double>(n);
  std::vector<Eigen::Vector3d> grad(n), trial(n);
  for (int it = 0; it < iterations; ++it) {
    for (auto &g : grad) {
      g.setZero();
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        Eigen::Vector3d const dm = pts[i] - pts[j];
        Eigen::Vector3d const dp = pts[i] + pts[j];
        double const m3 = std::pow(dm.norm(), 3);
        double const p3 = std::pow(dp.norm(), 3);
        Eigen::Vector3d const gi = -dm / m3 - dp / p3;
        Eigen::Vector3d const gj = dm / m3 - dp / p3;
        grad[i] += gi;
        grad[j] += gj;
      }
    }
    double max_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] -= grad[i].dot(pts[i]) * pts[i]; // tangent component
      max_norm = std::max(max_norm, grad[i].norm());
    }
    if (max_norm == 0.0) {
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      trial[i] = (pts[i] - step * grad[i]).normalized();
    }
    double const e = antipodal_energy(trial);
    if (e < energy) {
      pts.swap(trial);
      energy = e;
      step *= 1.2;
    } else {
      step *= 0.5;
    }
  }
}

double subset_energy(std::vector<Eigen::Vector3d> const &dirs, std::vector<std::size_t> const &sel)
{
  double e = 0.0;
  for (std::size_t a = 0; a < sel.size(); ++a) {
    for (std::size_t b = a + 1; b < sel.size(); ++b) {
      e += pair_energy(dirs[sel[a]], dirs[sel[b]]);
    }
  }
  return e;
}

std::vector<std::size_t> select_subset(std::vector<Eigen::Vector3d> const &dirs, std::size_t k, Rng &rng)
{
  std::size_t const n = dirs.size();
  std::vector<std::size_t> sel;
  std::vector<bool> used(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t next = rng.below(n);
  while (sel.size() < k) {
    sel.push_back(next);
    used[next] = true;
    double best = -1.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (used[c]) {
        continue;
      }
      nearest[c] = std::min(nearest[c], antipodal_distance(dirs[c], dirs[next]));
      if (nearest[c] > best) {
        best = nearest[c];
        next = c;
      }
    }
  }

  // Swap local search: replace one selected point by an unselected one when it
  // lowers the energy. Each pass tries every slot once.
  for (int pass = 0; pass < 200; ++pass) {
    bool improved = false;
    for (std::size_t slot = 0; slot < k; ++slot) {
      double current = 0.0;
      for (std::size_t o = 0; o < k; ++o) {
        if (o != slot) {
          current += pair_energy(dirs[sel[slot]], dirs[sel[o]]);
        }
      }
      double best_gain = 1e-12 * std::max(1.0, current);
      std::size_t best_c = n;
      for (std::size_t c = 0; c < n; ++c) {
        if (used[c]) {
          continue;
        }
        double e = 0.0;
        for (std::size_t o = 0; o < k; ++o) {
          if (o != slot) {
            e += pair_energy(dirs[c], dirs[sel[o]]);
          }
        }
        if (current - e > best_gain) {
          best_gain = current - e;
          best_c = c;
        }
      }
      if (best_c != n) {
        used[sel[slot]] = false;
        used[best_c] = true;
        sel[slot] = best_c;
        improved = true;
      }
    }
    if (!improved) {
      break;
    }
  }
  std::sort(sel.begin(), sel.end());
  return sel;
}

} // namespace

std::vector<double> GradientScheme::shells() const
{
  std::vector<double> out;
  for (auto const &e : entries) {
    if (e.b <= 0.0) {
      continue;
    }
    if (std::none_of(out.begin(), out.end(), [&](double s) { return same_shell(s, e.b); })) {
      out.push_back(e.b);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> GradientScheme::shell_indices(double shell) const
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].b > 0.0 && same_shell(entries[i].b, shell)) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> GradientScheme::b0_indices() const
{
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].b <= 0.0) {
      out.push_back(i);
    }
  }
  return out;
}

std::size_t GradientScheme::weighted_count() const
{
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](auto const &e) { return e.b > 0.0; }));
}

void GradientScheme::validate() const
{
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto const &e = entries[i];
    if (!std::isfinite(e.b) || e.b < 0.0) {
      throw InputError("gradient entry " + std::to_string(i) + ": b must be finite and nonnegative");
    }
    if (e.b > 0.0 && std::abs(e.dir.norm() - 1.0) > 1e-9) {
      throw InputError("gradient entry " + std::to_string(i) + ": direction is not unit length");
    }
  }
}

double antipodal_energy(std::vector<Eigen::Vector3d> const &dirs)
{
  double e = 0.0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      e += pair_energy(dirs[i], dirs[j]);
    }
  }
  return e;
}

GradientScheme make_dense_scheme(std::size_t dirs_per_shell, std::vector<double> const &shells, std::uint64_t seed)
{
  if (dirs_per_shell == 0) {
    throw InputError("make_dense_scheme: dirs_per_shell must be >= 1");
  }
  if (shells.empty()) {
    throw InputError("make_dense_scheme: no shells given");
  }
  GradientScheme scheme;
  scheme.entries.push_back({Eigen::Vector3d::Zero(), 0.0});
  for (std::size_t s = 0; s < shells.size(); ++s) {
    if (!(shells[s] > 0.0)) {
      throw InputError("make_dense_scheme: shell b-values must be positive");
    }
    Rng rng(seed, s);
    auto pts = fibonacci_hemisphere(dirs_per_shell, rng);
    relax(pts, 500);
    for (auto &p : pts) {
      if (p.z() < 0.0) {
        p = -p;
      }
      scheme.entries.push_back({p.normalized(), shells[s]});
    }
  }
  return scheme;
}

GradientScheme subsample(GradientScheme const &scheme, std::size_t k_per_shell, std::uint64_t seed)
{
  scheme.validate();
  std::vector<bool> keep(scheme.size(), false);
  for (std::size_t i : scheme.b0_indices()) {
    keep[i] = true;
  }
  auto const shells = scheme.shells();
  for (std::size_t s = 0; s < shells.size(); ++s) {
    auto const idx = scheme.shell_indices(shells[s]);
    if (k_per_shell > idx.size()) {
      throw InputError("subsample: k = " + std::to_string(k_per_shell) + " exceeds shell b=" +
                       std::to_string(shells[s]) + " with " + std::to_string(idx.size()) + " directions");
    }
    if (k_per_shell == idx.size()) {
      for (std::size_t i : idx) {
        keep[i] = true;
      }
      continue;
    }
    std::vector<Eigen::Vector3d> dirs;
    for (std::size_t i : idx) {
      dirs.push_back(scheme.entries[i].dir);
    }
    Rng rng(seed, 1000 + s);
    for (std::size_t j : select_subset(dirs, k_per_shell, rng)) {
      keep[idx[j]] = true;
    }
  }
  GradientScheme out;
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    if (keep[i]) {
      out.entries.push_back(scheme.entries[i]);
    }
  }
  return out;
}

double acceleration_factor(GradientScheme const &dense, GradientScheme const &sparse)
{
  dense.validate();
  sparse.validate();
  std::size_t const ns = sparse.weighted_count();
  if (ns == 0) {
    throw InputError("acceleration_factor: sparse scheme has no weighted entries");
  }
  return static_cast<double>(dense.weighted_count()) / static_cast<double>(ns);
}

GradientScheme read_scheme(std::istream &in, std::string const &source)
{
  GradientScheme scheme;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto const first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    std::istringstream ss(line);
    GradientEntry e;
    std::string extra;
    if (!(ss >> e.dir.x() >> e.dir.y() >> e.dir.z() >> e.b) || (ss >> extra)) {
      throw InputError(source + ":" + std::to_string(lineno) + ": expected 'gx gy gz b'");
    }
    if (e.b < 0.0 || (e.b > 0.0 && std::abs(e.dir.norm() - 1.0) > 1e-9)) {
      throw InputError(source + ":" + std::to_string(lineno) + ": invalid entry (unit direction and b >= 0 required)");
    }
    scheme.entries.push_back(e);
  }
  return scheme;
}

GradientScheme read_scheme_file(std::string const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open scheme file " + path);
  }
  return read_scheme(in, path);
}

void write_scheme(std::ostream &out, GradientScheme const &scheme)
{
  out << "# gx gy gz b\n";
  out << std::setprecision(17);
  for (auto const &e : scheme.entries) {
    out << e.dir.x() << ' ' << e.dir.y() << ' ' << e.dir.z() << ' ' << e.b << '\n';
  }
}

} // namespace mpmri
