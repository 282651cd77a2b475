#include "mpmri/error.hpp"
#include "mpmri/nala.hpp"
#include "mpmri/random.hpp"

#include <catch_amalgamated.hpp>

#include <vector>

using namespace mpmri;

namespace {

// Reference recurrence written out with plain arrays.
std::vector<double> lambda_trajectory(double lambda0, double alpha, double beta, std::vector<double> const &r)
{
  std::vector<double> out;
  double m = 0.0, lambda = lambda0;
  for (std::size_t t = 0; t < r.size(); ++t) {
    double const diff = t == 0 ? 0.0 : r[t] - r[t - 1];
    m = beta * m + r[t] + beta * diff;
    lambda = lambda - alpha * m;
    if (lambda < 0.0) {
      lambda = 0.0;
    }
    out.push_back(lambda);
  }
  return out;
}

} // namespace

TEST_CASE("defaults")
{
  auto const s = nala_init();
  CHECK(s.lambda == 0.1);
  CHECK(s.alpha == 5e-4);
  CHECK(s.beta == 0.9);
  CHECK(s.m == 0.0);
  CHECK(s.t == 0);
}

TEST_CASE("constant unit regularization value")
{
  auto s = nala_step(nala_init(), 1.0);
  CHECK(s.m == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(s.lambda == Catch::Approx(0.0995).epsilon(1e-14));
  s = nala_step(s, 1.0);
  CHECK(s.m == Catch::Approx(1.9).epsilon(1e-15));
  CHECK(s.lambda == Catch::Approx(0.09855).epsilon(1e-14));
  CHECK(s.t == 2);
}

TEST_CASE("zero regularization keeps lambda")
{
  auto s = nala_init(0.3);
  for (int i = 0; i < 50; ++i) {
    s = nala_step(s, 0.0);
  }
  CHECK(s.lambda == 0.3);
}

TEST_CASE("beta zero is plain descent")
{
  auto s = nala_init(1.0, 0.01, 0.0);
  std::vector<double> const r{0.5, 0.2, 0.9};
  double lambda = 1.0;
  for (double v : r) {
    s = nala_step(s, v);
    lambda -= 0.01 * v;
    CHECK(s.m == v);
    CHECK(s.lambda == Catch::Approx(lambda).epsilon(1e-15));
  }
}

TEST_CASE("lambda is clamped at zero")
{
  auto s = nala_step(nala_init(1e-5, 5e-4, 0.9), 1.0);
  CHECK(s.lambda == 0.0);
  s = nala_step(s, 1.0);
  CHECK(s.lambda == 0.0);
}

TEST_CASE("matches the reference recurrence and is alpha-linear")
{
  Rng rng(4, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r(40);
    for (auto &v : r) {
      v = rng.uniform(0.0, 0.1);
    }
    std::vector<double> scaled[3];
    double const alphas[3] = {1e-4, 5e-4, 1e-3};
    for (int a = 0; a < 3; ++a) {
      auto const ref = lambda_trajectory(0.1, alphas[a], 0.9, r);
      auto s = nala_init(0.1, alphas[a], 0.9);
      for (std::size_t t = 0; t < r.size(); ++t) {
        s = nala_step(s, r[t]);
        CHECK(s.lambda == Catch::Approx(ref[t]).epsilon(1e-14));
        CHECK(s.lambda > 0.0);
        CHECK(s.m >= 0.0);
        scaled[a].push_back((0.1 - s.lambda) / alphas[a]);
      }
    }
    for (std::size_t t = 0; t < r.size(); ++t) {
      CHECK(std::abs(scaled[0][t] - scaled[1][t]) <= 1e-12);
      CHECK(std::abs(scaled[2][t] - scaled[1][t]) <= 1e-12);
    }
  }
}

TEST_CASE("lambda is non-increasing for nonnegative inputs")
{
  Rng rng(8, 0);
  auto s = nala_init();
  double prev = s.lambda;
  for (int i = 0; i < 500; ++i) {
    s = nala_step(s, rng.uniform(0.0, 3.0));
    CHECK(s.lambda <= prev);
    CHECK(s.lambda >= 0.0);
    prev = s.lambda;
  }
}

TEST_CASE("invalid arguments")
{
  CHECK_THROWS_AS(nala_init(-0.1), InputError);
  CHECK_THROWS_AS(nala_init(0.1, 0.0), InputError);
  CHECK_THROWS_AS(nala_init(0.1, 1e-3, 1.0), InputError);
  CHECK_NOTHROW(nala_init(0.0));
  CHECK_THROWS_AS(nala_step(nala_init(), -1.0), InputError);
}
