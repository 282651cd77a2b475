#include "mpmri/dki.hpp"
#include "mpmri/error.hpp"
#include "mpmri/phantom.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>

using namespace mpmri;

namespace {

GradientScheme const &dense()
{
  static GradientScheme const s = make_dense_scheme(90, {1000.0, 2000.0, 3000.0}, 7);
  return s;
}

Phantom const &default_phantom()
{
  static Phantom const p = gen_phantom({48, 48, 12}, 3);
  return p;
}

} // namespace

TEST_CASE("phantom respects class ranges and mask")
{
  auto const &p = default_phantom();
  std::size_t counts[4] = {0, 0, 0, 0};
  double od_lo = 1.0, od_hi = 0.0;
  for (std::size_t i = 0; i < p.dims.size(); ++i) {
    auto const t = p.labels[i];
    counts[static_cast<int>(t)]++;
    CHECK(p.mask[i] == (t != Tissue::Background));
    if (t == Tissue::Background) {
      continue;
    }
    auto const r = tissue_range(t);
    auto const &v = p.noddi[i];
    double const od = od_from_kappa(v.kappa);
    CHECK(r.vic.contains(v.vic));
    CHECK(r.viso.contains(v.viso));
    CHECK(r.od.contains(od + 1e-12));
    CHECK(v.mu.norm() == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(p.gt_params.data()[i * kParamCount + 4] == od);
    od_lo = std::min(od_lo, od);
    od_hi = std::max(od_hi, od);
  }
  for (int c = 0; c < 4; ++c) {
    CHECK(counts[c] > 0);
  }
  CHECK(od_lo <= 0.1);
  CHECK(od_hi >= 0.8);
}

TEST_CASE("phantom generation is deterministic")
{
  auto const a = gen_phantom({16, 16, 4}, 9);
  auto const b = gen_phantom({16, 16, 4}, 9);
  auto const c = gen_phantom({16, 16, 4}, 10);
  CHECK(a.labels == b.labels);
  CHECK(a.gt_params == b.gt_params);
  CHECK_FALSE(a.gt_params == c.gt_params);
  CHECK_THROWS_AS(gen_phantom({15, 16, 4}, 1), InputError);
  CHECK_THROWS_AS(gen_phantom({16, 16, 3}, 1), InputError);
}

TEST_CASE("rendered ground truth")
{
  auto const p = gen_phantom({24, 24, 4}, 5);
  auto const r = render_ground_truth(p, dense());
  auto const r2 = render_ground_truth(p, dense());
  CHECK(r.signals == r2.signals);
  CHECK(r.gt_params == r2.gt_params);
  CHECK(r.signals.dims() == Dims4{24, 24, 4, dense().size()});

  DkiFitter const fitter(dense());
  std::size_t wm = 0;
  for (std::size_t i = 0; i < p.dims.size(); ++i) {
    double const *gt = &r.gt_params.data()[i * kParamCount];
    if (!p.mask[i]) {
      for (std::size_t c = 0; c < kParamCount; ++c) {
        CHECK(gt[c] == 0.0);
      }
      continue;
    }
    for (std::size_t c = 0; c < kParamCount; ++c) {
      CHECK(std::isfinite(gt[c]));
    }
    for (std::size_t c = 4; c < kParamCount; ++c) {
      CHECK((gt[c] >= 0.0 && gt[c] <= 1.0));
    }
    if (p.labels[i] == Tissue::Csf) {
      CHECK(gt[6] >= 0.9);
    }
    if (p.labels[i] == Tissue::WhiteMatter) {
      ++wm;
      CHECK(gt[1] > 0.0);
      // DKI channels agree with an independent fit of the stored signals.
      auto const sig = r.signals.data().subspan(i * dense().size(), dense().size());
      auto const m = dki_metrics(fitter.fit(sig).voxel);
      CHECK(gt[1] == m.mk);
      CHECK(gt[0] == m.kfa);
    }
  }
  CHECK(wm > 0);
}

TEST_CASE("phantom save and load")
{
  auto const dir = std::filesystem::temp_directory_path() / "mpmri_test_phantom";
  std::filesystem::remove_all(dir);
  auto const p = gen_phantom({16, 16, 4}, 2);
  save_phantom(dir, p);
  auto const q = load_phantom(dir);
  CHECK(q.dims == p.dims);
  CHECK(q.seed == p.seed);
  CHECK(q.labels == p.labels);
  CHECK(q.mask == p.mask);
  CHECK(q.gt_params == p.gt_params);
  for (std::size_t i = 0; i < p.dims.size(); ++i) {
    CHECK(q.noddi[i].kappa == p.noddi[i].kappa);
    CHECK(q.noddi[i].mu == p.noddi[i].mu);
  }
  std::filesystem::remove(dir / "labels.mpt");
  CHECK_THROWS_AS(load_phantom(dir), InputError);
  std::filesystem::remove_all(dir);
}
