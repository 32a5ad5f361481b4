#include <doctest.h>

#include <cmath>
#include <random>

#include "ntks/encoding.hpp"

using namespace ntks;

namespace {

// Sample mean and standard error, drawn with the standard library generator so
// the oracle shares no code with the library's sampler.
struct Sample {
  double mean = 0, se = 0;
};

template <class F>
Sample sample(std::size_t draws, F&& f) {
  long double s = 0, s2 = 0;
  for (std::size_t t = 0; t < draws; ++t) {
    const double v = f();
    s += v;
    s2 += (long double)v * v;
  }
  const double mean = static_cast<double>(s / draws);
  const double var = static_cast<double>(s2 / draws) - mean * mean;
  return {mean, std::sqrt(std::max(var, 0.0) / static_cast<double>(draws))};
}

// (x~_i . x~_j) for one frequency draw, written out directly.
double rff_inner(std::mt19937_64& g, std::size_t d, double sigma, double dx, double dy) {
  std::normal_distribution<double> nd(0.0, sigma);
  double acc = 0;
  for (std::size_t k = 0; k < d / 2; ++k) acc += std::cos(2.0 * M_PI * (nd(g) * dx + nd(g) * dy));
  return 2.0 / static_cast<double>(d) * acc;
}

}  // namespace

TEST_CASE("encoder output") {
  RffEncoder enc;
  enc.dim = 2;
  enc.bandwidth = 1.0;
  enc.frequencies = Matrix(1, 2);
  enc.frequencies(0, 0) = 1.0;
  enc.frequencies(0, 1) = -1.0;
  const Vector e = enc.encode(Vector{0.3, 0.3});
  CHECK(e[0] == doctest::Approx(1.0));
  CHECK(std::abs(e[1]) < 1e-15);

  Rng rng(3);
  const RffEncoder big = make_rff_encoder(rng, 2, 256, 10.0);
  CHECK(big.frequencies.rows() == 128);
  for (int t = 0; t < 10000; ++t) {
    const Vector x{rng.uniform() * 4 - 2, rng.uniform() * 4 - 2};
    REQUIRE(std::abs(norm2(big.encode(x)) - 1.0) <= 1e-12);
  }
  const Vector x{0.25, 0.75};
  CHECK(dot(big.encode(x), big.encode(x)) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(make_rff_encoder(rng, 2, 7, 10.0), Error);
  CHECK_THROWS_AS(make_rff_encoder(rng, 2, 256, 0.0), Error);
}

TEST_CASE("dataset rho") {
  Rng rng(5);
  const RffEncoder enc = make_rff_encoder(rng, 2, 64, 5.0);
  const Grid2D g = make_grid(4);
  const EncodedDataset ds = build_dataset(g.points, Vector(g.points.size(), 0.5), &enc);
  CHECK(ds.encoded);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(std::abs(ds.rho(i, i) - 1.0) <= 1e-12);
    for (std::size_t j = 0; j < ds.size(); ++j) CHECK(ds.rho(i, j) == ds.rho(j, i));
  }
  const EncodedDataset raw = build_dataset(g.points, Vector(g.points.size(), 0.5), nullptr);
  CHECK(raw.dim() == 2);
  CHECK(raw.rho(1, 1) == doctest::Approx(g.points[1][0] * g.points[1][0] + g.points[1][1] * g.points[1][1]));
}

TEST_CASE("tau_x") {
  CHECK(raw_tau_x(Vector{1, 2}, Vector{2, 4}) == doctest::Approx(1.0));
  CHECK(raw_tau_x(Vector{1, 0}, Vector{0, 3}) == 0.0);
  CHECK(raw_tau_x(Vector{1, 0}, Vector{1, 1}) == doctest::Approx(0.5));
  try {
    raw_tau_x(Vector{0, 0}, Vector{1, 1});
    FAIL("expected DegenerateInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateInput);
  }

  Rng rng(8);
  const RffEncoder enc = make_rff_encoder(rng, 2, 32, 3.0);
  const Vector xi{0.2, 0.4}, xj{0.7, 0.1};
  CHECK(encoded_tau_x(enc, xi, xi) == doctest::Approx(1.0));
  const double ip = dot(enc.encode(xi), enc.encode(xj));
  CHECK(std::abs(encoded_tau_x(enc, xi, xj) - ip * ip) <= 1e-12);
}

TEST_CASE("kappa") {
  CHECK(kappa(3.0, 0.0) == 1.0);
  CHECK(kappa(2.0, 0.1) < kappa(1.0, 0.1));

  std::mt19937_64 g(101);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Sample s = sample(1000000, [&] { return std::cos(2.0 * M_PI * nd(g) * 0.5); });
  CHECK(std::abs(s.mean - kappa(1.0, 0.5)) <= 3.0 * s.se);

  Rng rng(2);
  const McEstimate mc = mc_kappa(rng, 1.0, 0.5, 200000);
  CHECK(std::abs(mc.mean - kappa(1.0, 0.5)) <= 4.0 * mc.std_error);
}

TEST_CASE("second moment") {
  CHECK(second_moment(16, 3.0, 0.0) == doctest::Approx(1.0));
  CHECK(second_moment(64, 1e4, 0.5) == doctest::Approx(1.0 / 64));

  std::mt19937_64 g(202);
  const Sample s = sample(100000, [&] {
    const double ip = rff_inner(g, 4, 2.0, 0.25, 0.0);
    return ip * ip;
  });
  CHECK(std::abs(s.mean - second_moment(4, 2.0, 0.25)) <= 3.0 * s.se);

  Rng rng(3);
  const McEstimate mc = mc_second_moment(rng, 4, 2.0, 0.25, 100000);
  CHECK(std::abs(mc.mean - second_moment(4, 2.0, 0.25)) <= 4.0 * mc.std_error);
}

TEST_CASE("grid-averaged encoded similarity") {
  const Grid2D two = make_grid(2);
  // pairs at distance 1 (four ordered pairs each way) and sqrt(2) (two)
  const double expect = (8 * second_moment(8, 0.5, 1.0) + 4 * second_moment(8, 0.5, std::sqrt(2.0))) / 12.0;
  CHECK(avg_offdiag_tau(two, 8, 0.5) == doctest::Approx(expect).epsilon(1e-12));

  Grid2D pair;
  pair.side = 0;
  pair.points = {{0.1, 0.2}, {0.4, 0.6}};
  CHECK(avg_offdiag_tau(pair, 16, 2.0) == doctest::Approx(second_moment(16, 2.0, 0.5)).epsilon(1e-12));

  const Grid2D g16 = make_grid(16);
  const double big = avg_offdiag_tau(g16, 256, 1000.0);
  CHECK(big < 2.0 / 256);
  CHECK(big > 0.5 / 256);

  double prev = 2.0;
  for (double s : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    const double v = avg_offdiag_tau(g16, 256, s);
    CHECK(v < prev);
    prev = v;
  }

  // empirical mean over 50 frequency draws on a coarse grid
  const Grid2D g4 = make_grid(4);
  Rng rng(77);
  const std::size_t n = g4.points.size();
  const Sample s = sample(50, [&] {
    const RffEncoder enc = make_rff_encoder(rng, 2, 16, 1.0);
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) acc += encoded_tau_x(enc, g4.points[i], g4.points[j]);
    return acc / static_cast<double>(n * (n - 1));
  });
  CHECK(std::abs(s.mean - avg_offdiag_tau(g4, 16, 1.0)) <= 3.0 * s.se);
}

TEST_CASE("raw average excludes the origin") {
  const Grid2D g = make_grid(2);
  // remaining points (1,0), (0,1), (1,1): taus 0, 0.5, 0.5
  CHECK(raw_avg_offdiag_tau(g) == doctest::Approx(1.0 / 3.0));
  const Grid2D g16 = make_grid(16);
  CHECK(avg_offdiag_tau(g16, 256, 10.0) < raw_avg_offdiag_tau(g16));
}
