#include "mpmri/phantom.hpp"

#include "mpmri/dki.hpp"
#include "mpmri/error.hpp"
#include "mpmri/mpt1.hpp"
#include "mpmri/parallel.hpp"
#include "mpmri/random.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace mpmri {

namespace {

// Field streams for smooth_field seeds.
enum Stream : std::uint64_t
{
  kShape = 1,
  kCsf,
  kWhite,
  kVic,
  kViso,
  kOd,
  kS0,
  kTilt = 16
};

double normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double lerp(Interval r, double u)
{
  return r.lo + (r.hi - r.lo) * u;
}

std::string tissue_name(Tissue t)
{
  switch (t) {
  case Tissue::WhiteMatter:
    return "wm";
  case Tissue::GrayMatter:
    return "gm";
  case Tissue::Csf:
    return "csf";
  default:
    return "background";
  }
}

} // namespace

TissueRange tissue_range(Tissue t)
{
  switch (t) {
  case Tissue::WhiteMatter:
    return {{0.5, 0.8}, {0.0, 0.1}, {0.05, 0.4}};
  case Tissue::GrayMatter:
    return {{0.3, 0.5}, {0.0, 0.2}, {0.5, 0.9}};
  case Tissue::Csf:
    return {{0.0, 0.3}, {0.9, 1.0}, {0.5, 0.9}};
  default:
    return {};
  }
}

std::size_t Phantom::mask_count() const
{
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

Phantom gen_phantom(Dims3 dims, std::uint64_t seed)
{
  if (dims.w < 16 || dims.h < 16 || dims.s < 4) {
    throw InputError("gen_phantom: needs W, H >= 16 and S >= 4, got " + std::to_string(dims.w) + "x" +
                     std::to_string(dims.h) + "x" + std::to_string(dims.s));
  }
  double const wl = static_cast<double>(dims.w);
  auto field = [&](std::uint64_t stream, double wavelength) {
    return smooth_field(dims, wavelength, hash_key(seed, stream));
  };
  auto const shape = field(kShape, wl / 2.0);
  auto const csf = field(kCsf, wl / 3.0);
  auto const white = field(kWhite, wl / 4.0);
  auto const f_vic = field(kVic, wl / 4.0);
  auto const f_viso = field(kViso, wl / 4.0);
  auto const f_od = field(kOd, wl / 4.0);
  auto const f_s0 = field(kS0, wl / 2.0);
  std::array<std::vector<double>, 3> tilt;
  for (std::size_t c = 0; c < 3; ++c) {
    tilt[c] = field(kTilt + c, wl / 3.0);
  }

  Phantom p;
  p.dims = dims;
  p.seed = seed;
  p.labels.assign(dims.size(), Tissue::Background);
  p.noddi.assign(dims.size(), NoddiVoxel{});
  p.mask.assign(dims.size(), false);
  p.gt_params = ParamTensor(dims.with_channels(kParamCount));

  double const cx = 0.5 * static_cast<double>(dims.w), cy = 0.5 * static_cast<double>(dims.h);
  for (std::size_t x = 0; x < dims.w; ++x) {
    for (std::size_t y = 0; y < dims.h; ++y) {
      for (std::size_t z = 0; z < dims.s; ++z) {
        auto const i = dims.index(x, y, z);
        double const dx = static_cast<double>(x) + 0.5 - cx;
        double const dy = static_cast<double>(y) + 0.5 - cy;
        double const ex = dx / (0.46 * static_cast<double>(dims.w));
        double const ey = dy / (0.46 * static_cast<double>(dims.h));
        double const ez = ((static_cast<double>(z) + 0.5) / static_cast<double>(dims.s) - 0.5) / 0.75;
        if (ex * ex + ey * ey + ez * ez > 1.0 + 0.12 * shape[i]) {
          continue;
        }
        Tissue t = Tissue::GrayMatter;
        if (csf[i] > 1.3) {
          t = Tissue::Csf;
        } else if (white[i] > 0.0) {
          t = Tissue::WhiteMatter;
        }
        auto const range = tissue_range(t);
        NoddiVoxel v;
        v.vic = lerp(range.vic, normal_cdf(f_vic[i]));
        v.viso = lerp(range.viso, normal_cdf(f_viso[i]));
        double const od = lerp(range.od, normal_cdf(f_od[i]));
        v.kappa = std::min(kKappaMax, kappa_from_od(od));
        v.s0 = std::clamp(1.0 + 0.1 * f_s0[i], 0.7, 1.3);

        Eigen::Vector3d dir(-dy, dx, 0.0);
        double const r = dir.norm();
        if (r > 0.0) {
          dir /= r;
        }
        dir += 0.35 * Eigen::Vector3d(tilt[0][i], tilt[1][i], tilt[2][i]);
        v.mu = dir.norm() > 1e-9 ? Eigen::Vector3d(dir.normalized()) : Eigen::Vector3d::UnitZ();

        p.labels[i] = t;
        p.noddi[i] = v;
        p.mask[i] = true;
        p.gt_params(x, y, z, 4) = od_from_kappa(v.kappa);
        p.gt_params(x, y, z, 5) = v.vic;
        p.gt_params(x, y, z, 6) = v.viso;
      }
    }
  }
  return p;
}

RenderedPhantom render_ground_truth(Phantom const &p, GradientScheme const &dense)
{
  auto const &d = p.dims;
  DkiFitter const fitter(dense);
  RenderedPhantom out{ParamTensor(d.with_channels(dense.size())), p.gt_params};
  parallel_for(d.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!p.mask[i]) {
        continue;
      }
      Eigen::VectorXd const sig = noddi_forward(p.noddi[i], dense);
      std::copy(sig.data(), sig.data() + sig.size(), out.signals.data().begin() + static_cast<std::ptrdiff_t>(i * dense.size()));
      auto const fit = fitter.fit(std::span<double const>(sig.data(), static_cast<std::size_t>(sig.size())));
      auto const m = dki_metrics(fit.voxel);
      double const vals[4] = {m.kfa, m.mk, m.ak, m.rk};
      for (std::size_t c = 0; c < 4; ++c) {
        if (!std::isfinite(vals[c])) {
          throw NumericalError("render_ground_truth: non-finite DKI metric at voxel " + std::to_string(i));
        }
        out.gt_params.data()[i * kParamCount + c] = vals[c];
      }
    }
  });
  return out;
}

void save_phantom(std::filesystem::path const &dir, Phantom const &p)
{
  std::filesystem::create_directories(dir);
  auto const &d = p.dims;
  Mpt1 labels{{d.w, d.h, d.s}, std::vector<double>(d.size())};
  Mpt1 noddi{{d.w, d.h, d.s, 7}, std::vector<double>(d.size() * 7)};
  for (std::size_t i = 0; i < d.size(); ++i) {
    labels.data[i] = static_cast<double>(p.labels[i]);
    auto const &v = p.noddi[i];
    double const row[7] = {v.vic, v.viso, v.kappa, v.mu.x(), v.mu.y(), v.mu.z(), v.s0};
    std::copy(row, row + 7, noddi.data.begin() + static_cast<std::ptrdiff_t>(i * 7));
  }
  write_mpt1(dir / "labels.mpt", labels);
  write_mpt1(dir / "noddi.mpt", noddi);
  save_tensor(dir / "gt.mpt", p.gt_params);

  nlohmann::json meta;
  meta["format"] = "MPT1";
  meta["seed"] = p.seed;
  meta["dims"] = {d.w, d.h, d.s};
  meta["channels"] = std::vector<std::string>(kParamNames.begin(), kParamNames.end());
  for (Tissue t : {Tissue::WhiteMatter, Tissue::GrayMatter, Tissue::Csf}) {
    auto const r = tissue_range(t);
    meta["classes"][tissue_name(t)] = {{"label", static_cast<int>(t)},
                                       {"vic", {r.vic.lo, r.vic.hi}},
                                       {"viso", {r.viso.lo, r.viso.hi}},
                                       {"od", {r.od.lo, r.od.hi}}};
  }
  write_text_atomic(dir / "phantom.json", meta.dump(2) + "\n");
}

Phantom load_phantom(std::filesystem::path const &dir)
{
  std::ifstream is(dir / "phantom.json");
  if (!is) {
    throw InputError((dir / "phantom.json").string() + ": cannot open");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(is);
  } catch (nlohmann::json::exception const &e) {
    throw InputError((dir / "phantom.json").string() + ": " + e.what());
  }
  Phantom p;
  try {
    auto const dims = meta.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) {
      throw InputError("phantom.json: dims must have three entries");
    }
    p.dims = {dims[0], dims[1], dims[2]};
    p.seed = meta.at("seed").get<std::uint64_t>();
  } catch (nlohmann::json::exception const &e) {
    throw InputError((dir / "phantom.json").string() + ": " + e.what());
  }
  auto const &d = p.dims;
  auto const labels = read_mpt1(dir / "labels.mpt");
  auto const noddi = read_mpt1(dir / "noddi.mpt");
  p.gt_params = load_tensor(dir / "gt.mpt");
  if (labels.dims != std::vector<std::uint64_t>{d.w, d.h, d.s} ||
      noddi.dims != std::vector<std::uint64_t>{d.w, d.h, d.s, 7} || p.gt_params.dims() != d.with_channels(kParamCount)) {
    throw InputError(dir.string() + ": phantom tensors do not match phantom.json dims");
  }
  p.labels.resize(d.size());
  p.noddi.resize(d.size());
  p.mask.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double const l = labels.data[i];
    if (!(l == 0 || l == 1 || l == 2 || l == 3)) {
      throw InputError((dir / "labels.mpt").string() + ": invalid label at voxel " + std::to_string(i));
    }
    p.labels[i] = static_cast<Tissue>(static_cast<int>(l));
    p.mask[i] = p.labels[i] != Tissue::Background;
    double const *row = &noddi.data[i * 7];
    NoddiVoxel v;
    v.vic = row[0];
    v.viso = row[1];
    v.kappa = row[2];
    v.mu = Eigen::Vector3d(row[3], row[4], row[5]);
    v.s0 = row[6];
    p.noddi[i] = v;
  }
  return p;
}

} // namespace mpmri
