#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "misclass/math.hpp"
#include "misclass/parallel.hpp"
#include "misclass/rng.hpp"

using namespace misclass;
using Catch::Approx;

TEST_CASE("expit and logit are inverses", "[math]") {
  CHECK(expit(0.0) == 0.5);
  CHECK(expit(-0.5) == Approx(0.3775406688).epsilon(1e-9));
  for (double p : {1e-8, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-8}) {
    CHECK(expit(logit(p)) == Approx(p).epsilon(1e-12));
  }
  CHECK(expit(800.0) == 1.0);
  CHECK(expit(-800.0) == 0.0);
}

TEST_CASE("normal cdf and quantile", "[math]") {
  CHECK(norm_cdf(0.0) == 0.5);
  CHECK(norm_cdf(1.0) == Approx(0.8413447461).epsilon(1e-9));
  CHECK(norm_cdf(-1.0) == Approx(0.1586552539).epsilon(1e-9));
  CHECK(norm_quantile(0.975) == Approx(1.959963985).epsilon(1e-8));
  for (double p : {0.001, 0.025, 0.5, 0.8, 0.999}) {
    CHECK(norm_cdf(norm_quantile(p)) == Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("student t quantiles match tables", "[math]") {
  CHECK(student_t_quantile(0.975, 3.0) == Approx(3.182446305).epsilon(1e-8));
  CHECK(student_t_quantile(0.5, 7.0) == Approx(0.0).margin(1e-14));
  CHECK(student_t_cdf(3.182446305, 3.0) == Approx(0.975).epsilon(1e-9));
}

TEST_CASE("inverse Mills ratio is smooth across the tail switch", "[math]") {
  // phi/Phi should match the direct ratio where the direct ratio is exact.
  for (double t : {-3.0, -10.0, -24.9, -25.1, -30.0}) {
    const double direct = norm_pdf(t) / norm_cdf(t);
    if (std::isfinite(direct) && norm_cdf(t) > 0) {
      CHECK(inverse_mills(t) == Approx(direct).epsilon(1e-9));
    }
  }
  // Far tail: r(t) ~ -t.
  CHECK(inverse_mills(-50.0) == Approx(50.0 + 1.0 / 50.0).epsilon(1e-3));
}

TEST_CASE("log_sum_exp basics and shift invariance", "[math]") {
  std::vector<double> lw = {0.0, std::log(3.0)};
  CHECK(log_sum_exp(lw) == Approx(std::log(4.0)).epsilon(1e-14));

  // Adding a constant shifts the result by exactly that constant.
  std::vector<double> shifted = {1000.0, 1000.0 + std::log(3.0)};
  CHECK(log_sum_exp(shifted) - 1000.0 ==
        Approx(std::log(4.0)).epsilon(1e-14));

  std::vector<double> degenerate = {-std::numeric_limits<double>::infinity(),
                                    std::nan("")};
  CHECK_THROWS_AS(log_sum_exp(degenerate), AllWeightsDegenerate);
}

TEST_CASE("philox block matches Random123 known-answer vectors", "[rng]") {
  std::array<std::uint32_t, 4> out{};

  PhiloxRng::block({0u, 0u, 0u, 0u}, {0u, 0u}, out);
  CHECK(out == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du,
                                            0xbc57ac4cu, 0x9b00dbd8u});

  PhiloxRng::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   {0xffffffffu, 0xffffffffu}, out);
  CHECK(out == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu,
                                            0xa20bc7c6u, 0x6d5451fdu});

  PhiloxRng::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   {0xa4093822u, 0x299f31d0u}, out);
  CHECK(out == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu,
                                            0x5001e420u, 0x24126ea1u});
}

TEST_CASE("substreams are deterministic and independent of call order", "[rng]") {
  PhiloxRng a(42, 7);
  PhiloxRng b(42, 7);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u32() == b.next_u32());

  // A different stream under the same seed produces a different sequence.
  PhiloxRng c(42, 8);
  bool any_diff = false;
  PhiloxRng a2(42, 7);
  for (int i = 0; i < 16; ++i) any_diff |= (a2.next_u32() != c.next_u32());
  CHECK(any_diff);
}

TEST_CASE("uniform01 and bernoulli behave statistically", "[rng]") {
  PhiloxRng rng(123, 0);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == Approx(0.5).margin(4.0 / std::sqrt(12.0 * n)));
  CHECK(var == Approx(1.0 / 12.0).margin(0.002));

  PhiloxRng rng2(9, 3);
  int ones = 0;
  for (int i = 0; i < 100000; ++i) ones += rng2.bernoulli(0.3);
  CHECK(ones / 100000.0 == Approx(0.3).margin(3.0 * std::sqrt(0.21 / 100000)));
}

TEST_CASE("normal draws via inverse cdf have correct moments", "[rng]") {
  PhiloxRng rng(2024, 1);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(sum / n == Approx(0.0).margin(3.0 / std::sqrt(static_cast<double>(n))));
  CHECK(sum2 / n == Approx(1.0).margin(0.02));
}

TEST_CASE("parallel_for visits every index once and propagates errors", "[rng]") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (int h : hits) REQUIRE(h == 1);

  CHECK_THROWS_AS(parallel_for(8, 2,
                               [&](std::size_t i) {
                                 if (i == 5) throw OutOfRange("boom");
                               }),
                  OutOfRange);
}
