#include "mpmri/error.hpp"
#include "mpmri/noise.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace mpmri;
using Catch::Approx;

namespace {

// Asymptotic Kolmogorov distribution survival function.
double kolmogorov_p(double lambda)
{
  double p = 0.0;
  for (int k = 1; k < 100; ++k) {
    p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

} // namespace

TEST_CASE("noise field", "[noise]")
{
  Dims3 const d{48, 48, 12};
  for (double level : {0.025, 0.05, 0.075}) {
    auto const f = make_noise_field(d, level, 3);
    CHECK(f.mean() == Approx(level).epsilon(0.01));
    CHECK(*std::min_element(f.sigma.begin(), f.sigma.end()) >= 0.0);
    double const lo = *std::min_element(f.sigma.begin(), f.sigma.end());
    double const hi = *std::max_element(f.sigma.begin(), f.sigma.end());
    CHECK(hi > 1.2 * level); // actually varies
    CHECK(lo < 0.8 * level);
  }
  auto const flat = make_noise_field(d, 0.05, 3, 0.0);
  for (double s : flat.sigma) {
    CHECK(s == 0.05);
  }
  CHECK_THROWS_AS(make_noise_field(d, 0.0, 1), InputError);
  CHECK_THROWS_AS(make_noise_field(d, 0.25, 1), InputError);

  // Smooth: neighbouring voxels differ far less than the field's spread.
  auto const f = make_noise_field(d, 0.05, 9);
  double step = 0.0;
  for (std::size_t x = 0; x + 1 < d.w; ++x) {
    step = std::max(step, std::abs(f.at(x + 1, 10, 5) - f.at(x, 10, 5)));
  }
  CHECK(step < 0.25 * 0.05);
}

TEST_CASE("rician statistics", "[noise]")
{
  std::size_t const n = 1000000;
  SECTION("zero signal gives the Rayleigh mean")
  {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += rician_sample(0.0, 1.0, 42, i, 0);
    }
    CHECK(sum / n == Approx(std::sqrt(std::numbers::pi / 2.0)).margin(0.005));
  }
  SECTION("high-SNR bias sigma^2 / 2S")
  {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += rician_sample(20.0, 1.0, 43, i, 1);
    }
    CHECK(sum / n - 20.0 == Approx(1.0 / 40.0).epsilon(0.2));
  }
  SECTION("Rayleigh noise floor passes Kolmogorov-Smirnov")
  {
    std::vector<double> r;
    for (std::size_t i = 0; i < 10000; ++i) {
      r.push_back(rician_sample(0.0, 1.0, 44, i, 2));
    }
    std::sort(r.begin(), r.end());
    double dmax = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      double const cdf = 1.0 - std::exp(-r[i] * r[i] / 2.0);
      dmax = std::max({dmax, std::abs(cdf - static_cast<double>(i) / r.size()),
                       std::abs(cdf - static_cast<double>(i + 1) / r.size())});
    }
    CHECK(kolmogorov_p(dmax * std::sqrt(10000.0)) > 0.01);
  }
}

TEST_CASE("add_rician", "[noise]")
{
  Dims3 const d{16, 16, 4};
  ParamTensor dwi(d.with_channels(5), 0.7);
  auto const field = make_noise_field(d, 0.05, 1);

  SECTION("zero noise is the identity")
  {
    NoiseField zero = field;
    std::fill(zero.sigma.begin(), zero.sigma.end(), 0.0);
    CHECK(add_rician(dwi, zero, 1.0, 3) == dwi);
  }
  SECTION("deterministic and nonnegative")
  {
    auto const a = add_rician(dwi, field, 1.0, 3);
    auto const b = add_rician(dwi, field, 1.0, 3);
    CHECK(a == b);
    CHECK(std::all_of(a.data().begin(), a.data().end(), [](double v) { return v >= 0.0; }));
    CHECK_FALSE(a == add_rician(dwi, field, 1.0, 4));
  }
  SECTION("dims must match")
  {
    CHECK_THROWS_AS(add_rician(ParamTensor({8, 8, 4, 2}), field, 1.0, 1), InputError);
  }
}
