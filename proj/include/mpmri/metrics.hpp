#pragma once

#include "mpmri/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mpmri {

/// 10 log10(range^2 / MSE) over the mask, range = max - min of gt inside the
/// mask. Returns +inf when MSE = 0.
double psnr(std::span<double const> pred, std::span<double const> gt, std::vector<bool> const &mask);

struct SsimOptions
{
  int radius = 3;  // 7 x 7 window
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  // Dynamic range; taken from gt inside the mask when unset.
  std::optional<double> range;
};

/// Mean local SSIM over the masked pixels of one W x H slice (row index
/// x * h + y) whose window lies inside the slice.
double ssim_slice(std::span<double const> pred, std::span<double const> gt, std::size_t w, std::size_t h,
                  std::vector<bool> const &mask, double range, SsimOptions const &opt = {});

/// Slice-wise SSIM of a single-channel volume (Dims3 layout): every axial
/// slice with at least one scored pixel contributes its masked mean, and the
/// slice values are averaged.
double ssim(std::span<double const> pred, std::span<double const> gt, Dims3 dims, std::vector<bool> const &mask,
            SsimOptions const &opt = {});

double nrmse(std::span<double const> pred, std::span<double const> gt, std::vector<bool> const &mask);

// 2|A n B| / (|A| + |B|); 1 when both are empty.
double dice(std::vector<bool> const &a, std::vector<bool> const &b);

struct TTest
{
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
};

/// Two-sided paired t-test on a - b.
TTest paired_t_test(std::span<double const> a, std::span<double const> b);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

struct ChannelMetrics
{
  std::string name;
  double psnr = 0.0, ssim = 0.0, nrmse = 0.0;
};

struct MetricReport
{
  std::vector<ChannelMetrics> channels;
  ChannelMetrics all; // channel means
  std::size_t mask_voxels = 0;
  std::vector<std::pair<std::string, double>> p_values;
};

/// Per-channel metrics of W x H x S x N maps inside `mask` (Dims3 layout).
MetricReport evaluate_maps(ParamTensor const &pred, ParamTensor const &gt, std::vector<bool> const &mask,
                           std::vector<std::string> const &names);

// Extract channel c of a W x H x S x N tensor in Dims3 layout.
std::vector<double> channel_volume(ParamTensor const &t, std::size_t c);

// Infinite values are written as "inf"/"-inf".
std::string format_number(double v);
std::string report_json(MetricReport const &r);
std::string csv_header();
// One row per channel plus an "ALL" row.
std::string csv_rows(MetricReport const &r, std::string const &method, std::string const &sampling,
                     std::string const &noise);

} // namespace mpmri
