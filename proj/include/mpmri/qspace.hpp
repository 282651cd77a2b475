#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mpmri {

struct GradientEntry
{
  Eigen::Vector3d dir = Eigen::Vector3d::Zero(); // unit for b > 0
  double b = 0.0;                                // s/mm^2
};

struct GradientScheme
{
  std::vector<GradientEntry> entries;

  std::size_t size() const { return entries.size(); }
  // Distinct nonzero b-values, ascending.
  std::vector<double> shells() const;
  // Entry indices belonging to `shell` (b within 0.1% of it).
  std::vector<std::size_t> shell_indices(double shell) const;
  std::vector<std::size_t> b0_indices() const;
  std::size_t weighted_count() const;
  // Throws InputError naming the first bad entry.
  void validate() const;
};

/// Antipodally symmetric electrostatic energy
/// sum_{i<j} 1/|g_i - g_j| + 1/|g_i + g_j|.
double antipodal_energy(std::vector<Eigen::Vector3d> const &dirs);

/// One b=0 entry followed by `dirs_per_shell` directions per shell. Each shell
/// starts from a hemispherical Fibonacci lattice (seeded rotation) and is
/// relaxed by 500 projected gradient steps on the antipodal energy.
GradientScheme make_dense_scheme(std::size_t dirs_per_shell, std::vector<double> const &shells, std::uint64_t seed);

/// Keeps all b=0 entries and `k_per_shell` directions of each shell, chosen by
/// greedy farthest-point selection under the antipodal metric followed by up to
/// 200 swap passes on the electrostatic energy. Entries keep their original order.
GradientScheme subsample(GradientScheme const &scheme, std::size_t k_per_shell, std::uint64_t seed);

// Ratio of weighted (b > 0) entry counts.
double acceleration_factor(GradientScheme const &dense, GradientScheme const &sparse);

// Text format: one "gx gy gz b" line per entry, '#' starts a comment line.
GradientScheme read_scheme(std::istream &in, std::string const &source = "<stream>");
GradientScheme read_scheme_file(std::string const &path);
void write_scheme(std::ostream &out, GradientScheme const &scheme);

} // namespace mpmri
