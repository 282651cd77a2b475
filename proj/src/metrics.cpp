#include "mpmri/metrics.hpp"

#include "mpmri/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace mpmri {

namespace {

void check_sizes(std::span<double const> pred, std::span<double const> gt, std::vector<bool> const &mask,
                 char const *who)
{
  if (pred.size() != gt.size() || gt.size() != mask.size()) {
    throw InputError(std::string(who) + ": size mismatch");
  }
}

std::pair<double, double> masked_minmax(std::span<double const> v, std::vector<bool> const &mask, char const *who)
{
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  }
  if (lo > hi) {
    throw InputError(std::string(who) + ": empty mask");
  }
  return {lo, hi};
}

nlohmann::json number_or_string(double v)
{
  if (std::isinf(v)) {
    return format_number(v);
  }
  return v;
}

} // namespace

double psnr(std::span<double const> pred, std::span<double const> gt, std::vector<bool> const &mask)
{
  check_sizes(pred, gt, mask, "psnr");
  auto const [lo, hi] = masked_minmax(gt, mask, "psnr");
  double const range = hi - lo;
  if (!(range > 0.0)) {
    throw InputError("psnr: ground truth has zero range inside the mask");
  }
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i]) {
      se += (pred[i] - gt[i]) * (pred[i] - gt[i]);
      ++n;
    }
  }
  double const mse = se / static_cast<double>(n);
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(range * range / mse);
}

double ssim_slice(std::span<double const> pred, std::span<double const> gt, std::size_t w, std::size_t h,
                  std::vector<bool> const &mask, double range, SsimOptions const &opt)
{
  if (pred.size() != w * h || gt.size() != w * h || mask.size() != w * h) {
    throw InputError("ssim: size mismatch");
  }
  int const r = opt.radius;
  int const side = 2 * r + 1;
  if (w < static_cast<std::size_t>(side) || h < static_cast<std::size_t>(side)) {
    throw InputError("ssim: slice smaller than the window");
  }
  std::vector<double> win(static_cast<std::size_t>(side * side));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      double const g = std::exp(-(i * i + j * j) / (2.0 * opt.sigma * opt.sigma));
      win[static_cast<std::size_t>((i + r) * side + (j + r))] = g;
      total += g;
    }
  }
  for (auto &g : win) {
    g /= total;
  }
  double const c1 = (opt.k1 * range) * (opt.k1 * range);
  double const c2 = (opt.k2 * range) * (opt.k2 * range);

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t x = static_cast<std::size_t>(r); x + static_cast<std::size_t>(r) < w; ++x) {
    for (std::size_t y = static_cast<std::size_t>(r); y + static_cast<std::size_t>(r) < h; ++y) {
      if (!mask[x * h + y]) {
        continue;
      }
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j) {
          auto const k = (x + static_cast<std::size_t>(i + r) - static_cast<std::size_t>(r)) * h +
                         (y + static_cast<std::size_t>(j + r) - static_cast<std::size_t>(r));
          double const g = win[static_cast<std::size_t>((i + r) * side + (j + r))];
          double const a = pred[k], b = gt[k];
          mx += g * a;
          my += g * b;
          sxx += g * a * a;
          syy += g * b * b;
          sxy += g * a * b;
        }
      }
      double const vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  if (count == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sum / static_cast<double>(count);
}

double ssim(std::span<double const> pred, std::span<double const> gt, Dims3 dims, std::vector<bool> const &mask,
            SsimOptions const &opt)
{
  check_sizes(pred, gt, mask, "ssim");
  if (pred.size() != dims.size()) {
    throw InputError("ssim: size does not match dims");
  }
  double range = 0.0;
  if (opt.range) {
    range = *opt.range;
  } else {
    auto const [lo, hi] = masked_minmax(gt, mask, "ssim");
    range = hi - lo;
  }
  if (!(range > 0.0)) {
    throw InputError("ssim: ground truth is constant inside the mask");
  }
  std::vector<double> a(dims.w * dims.h), b(dims.w * dims.h);
  std::vector<bool> m(dims.w * dims.h);
  double sum = 0.0;
  std::size_t slices = 0;
  for (std::size_t z = 0; z < dims.s; ++z) {
    for (std::size_t x = 0; x < dims.w; ++x) {
      for (std::size_t y = 0; y < dims.h; ++y) {
        auto const i = dims.index(x, y, z);
        a[x * dims.h + y] = pred[i];
        b[x * dims.h + y] = gt[i];
        m[x * dims.h + y] = mask[i];
      }
    }
    double const v = ssim_slice(a, b, dims.w, dims.h, m, range, opt);
    if (!std::isnan(v)) {
      sum += v;
      ++slices;
    }
  }
  if (slices == 0) {
    throw InputError("ssim: no masked pixel has a full window");
  }
  return sum / static_cast<double>(slices);
}

double nrmse(std::span<double const> pred, std::span<double const> gt, std::vector<bool> const &mask)
{
  check_sizes(pred, gt, mask, "nrmse");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i]) {
      num += (pred[i] - gt[i]) * (pred[i] - gt[i]);
      den += gt[i] * gt[i];
    }
  }
  if (!(den > 0.0)) {
    throw InputError("nrmse: ground truth has zero norm inside the mask");
  }
  return std::sqrt(num / den);
}

double dice(std::vector<bool> const &a, std::vector<bool> const &b)
{
  if (a.size() != b.size()) {
    throw InputError("dice: size mismatch");
  }
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] && b[i];
  }
  if (na + nb == 0) {
    return 1.0;
  }
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double incomplete_beta(double a, double b, double x)
{
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw InputError("incomplete_beta: invalid arguments");
  }
  if (x == 0.0 || x == 1.0) {
    return x;
  }
  // Continued fraction converges fast for x < (a+1)/(a+b+2); otherwise use symmetry.
  if (x > (a + 1.0) / (a + b + 2.0)) {
    return 1.0 - incomplete_beta(b, a, 1.0 - x);
  }
  double const ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) {
    d = tiny;
  }
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 500; ++m) {
    double const m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    c = 1.0 + num / c;
    d = std::abs(d) < tiny ? 1.0 / tiny : 1.0 / d;
    c = std::abs(c) < tiny ? tiny : c;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    c = 1.0 + num / c;
    d = std::abs(d) < tiny ? 1.0 / tiny : 1.0 / d;
    c = std::abs(c) < tiny ? tiny : c;
    double const delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-15) {
      break;
    }
  }
  return std::exp(ln_front) * f / a;
}

double student_t_two_sided(double t, double df)
{
  if (std::isinf(t)) {
    return 0.0;
  }
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTest paired_t_test(std::span<double const> a, std::span<double const> b)
{
  if (a.size() != b.size()) {
    throw InputError("paired_t_test: samples differ in length");
  }
  if (a.size() < 2) {
    throw InputError("paired_t_test: needs at least two pairs");
  }
  auto const n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean += a[i] - b[i];
  }
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double const d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTest r;
  r.mean_diff = mean;
  double const sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    if (mean == 0.0) {
      return r;
    }
    r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  r.p = student_t_two_sided(r.t, n - 1.0);
  return r;
}

std::vector<double> channel_volume(ParamTensor const &t, std::size_t c)
{
  auto const &d = t.dims();
  std::vector<double> out(d.w * d.h * d.s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = t.data()[i * d.n + c];
  }
  return out;
}

MetricReport evaluate_maps(ParamTensor const &pred, ParamTensor const &gt, std::vector<bool> const &mask,
                           std::vector<std::string> const &names)
{
  auto const &d = gt.dims();
  if (!(pred.dims() == d) || mask.size() != d.w * d.h * d.s || names.size() != d.n) {
    throw InputError("evaluate_maps: dims, mask and channel names disagree");
  }
  MetricReport r;
  r.mask_voxels = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  r.all.name = "ALL";
  Dims3 const vol{d.w, d.h, d.s};
  for (std::size_t c = 0; c < d.n; ++c) {
    auto const p = channel_volume(pred, c);
    auto const g = channel_volume(gt, c);
    ChannelMetrics m{names[c], psnr(p, g, mask), ssim(p, g, vol, mask), nrmse(p, g, mask)};
    r.all.psnr += m.psnr / static_cast<double>(d.n);
    r.all.ssim += m.ssim / static_cast<double>(d.n);
    r.all.nrmse += m.nrmse / static_cast<double>(d.n);
    r.channels.push_back(std::move(m));
  }
  return r;
}

std::string format_number(double v)
{
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  // Shortest text that reads back to the same double.
  char buf[32];
  auto const res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string report_json(MetricReport const &r)
{
  nlohmann::json j;
  j["mask_voxels"] = r.mask_voxels;
  auto row = [](ChannelMetrics const &m) {
    return nlohmann::json{{"name", m.name}, {"psnr", number_or_string(m.psnr)}, {"ssim", m.ssim}, {"nrmse", m.nrmse}};
  };
  for (auto const &m : r.channels) {
    j["channels"].push_back(row(m));
  }
  j["all"] = row(r.all);
  for (auto const &[name, p] : r.p_values) {
    j["p_values"][name] = p;
  }
  return j.dump(2);
}

std::string csv_header()
{
  return "method,sampling,noise,channel,psnr,ssim,nrmse\n";
}

std::string csv_rows(MetricReport const &r, std::string const &method, std::string const &sampling,
                     std::string const &noise)
{
  std::ostringstream os;
  auto line = [&](ChannelMetrics const &m) {
    os << method << ',' << sampling << ',' << noise << ',' << m.name << ',' << format_number(m.psnr) << ','
       << format_number(m.ssim) << ',' << format_number(m.nrmse) << '\n';
  };
  for (auto const &m : r.channels) {
    line(m);
  }
  line(r.all);
  return os.str();
}

} // namespace mpmri
