#include <cmath>
#include <random>

#include "doctest.h"
#include "vpdmix/fixed_point.hpp"

using namespace vpdmix;

namespace {

// Extended-precision product oracle: exact rational product of two grid
// values, truncated toward zero onto the grid.
std::int64_t exact_mul_raw(std::int64_t a, std::int64_t b) {
  __int128 p = static_cast<__int128>(a) * b;
  __int128 q = p / (static_cast<__int128>(1) << 32);  // C++ / truncates to 0
  return static_cast<std::int64_t>(q);
}

}  // namespace

TEST_CASE("encode matches exact grid values") {
  CHECK(encode(1.5).raw == 6442450944LL);
  CHECK(encode(0.0).raw == 0);
  CHECK(encode(-2.25).raw == -9663676416LL);
  CHECK_THROWS_AS(encode(2147483648.0), std::range_error);
}

TEST_CASE("encode/decode round trip") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    double x = d(rng);
    CHECK(std::fabs(decode(encode(x)) - x) <= std::ldexp(1.0, -32) * 1.0001);
  }
}

TEST_CASE("fp_mul exact cases") {
  CHECK(fp_mul(encode(2), encode(3)) == encode(6));
  CHECK(fp_mul(encode(0.5), encode(0.5)) == encode(0.25));
  CHECK(fp_mul(encode(-1.5), encode(2)) == encode(-3));
  CHECK(fp_mul(encode(-0.5), encode(-0.5)) == encode(0.25));
  CHECK_THROWS_AS(fp_mul(encode(1 << 20), encode(1 << 20)), std::range_error);
}

TEST_CASE("fp_mul equals the truncated rational product") {
  double third = decode(encode(1.0 / 3.0));
  double r = decode(fp_mul(encode(1.0 / 3.0), encode(3)));
  CHECK(std::fabs(r - 3.0 * third) <= 2 * std::ldexp(1.0, -32));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-30000.0, 30000.0);
  for (int i = 0; i < 5000; ++i) {
    FixedPoint a = encode(d(rng)), b = encode(d(rng));
    CHECK(fp_mul(a, b).raw == exact_mul_raw(a.raw, b.raw));
  }
}

TEST_CASE("fp_div converges on the documented domain") {
  DivConfig cfg;
  CHECK(std::fabs(decode(fp_div(encode(1), encode(3), cfg)) - 1.0 / 3.0) < 1e-6);
  CHECK(std::fabs(decode(fp_div(encode(5), encode(1), cfg)) - 5.0) < 1e-6);
  CHECK(std::fabs(decode(fp_div(encode(-3), encode(2), cfg)) + 1.5) < 1e-6);
  CHECK(std::fabs(decode(fp_div(encode(3), encode(-2), cfg)) + 1.5) < 1e-6);
}

TEST_CASE("fp_div by zero returns zero") {
  CHECK(fp_div(encode(1), encode(0)).raw == 0);
  CHECK(fp_div(encode(-7.5), encode(0)).raw == 0);
  CHECK(fp_div(encode(0), encode(0)).raw == 0);
}

TEST_CASE("fp_div self-consistency sweep") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> num(-100.0, 100.0);
  std::uniform_real_distribution<double> den(0.01, 100.0);
  DivConfig cfg;
  cfg.iterations = 20;
  for (int i = 0; i < 1000; ++i) {
    double a = num(rng), b = den(rng);
    if (rng() & 1) b = -b;
    double q = decode(fp_div(encode(a), encode(b), cfg));
    double back = decode(fp_mul(encode(q), encode(b)));
    CHECK(std::fabs(back - a) <= 1e-5 * std::max(1.0, std::fabs(a)));
  }
}

TEST_CASE("fp_div small divisors need more iterations") {
  DivConfig cfg;
  cfg.iterations = 40;
  double b = decode(encode(1e-7));  // the grid value actually divided by
  double q = decode(fp_div(encode(1), encode(b), cfg));
  CHECK(std::fabs(q - 1.0 / b) / (1.0 / b) < 1e-5);
}

TEST_CASE("fp_exp basics") {
  CHECK(std::fabs(decode(fp_exp(encode(0))) - 1.0) <= std::ldexp(1.0, -20));
  CHECK(std::fabs(decode(fp_exp(encode(1))) - std::exp(1.0)) < 1e-3 * std::exp(1.0));
  CHECK(fp_exp(encode(-25)).raw == 0);  // below the grid, truncates to 0
  CHECK_THROWS_AS(fp_exp(encode(22)), std::range_error);
}

TEST_CASE("fp_exp is the limit approximation, not e^x") {
  // (1 + x/2^9)^(2^9) against a long-double oracle of the same formula.
  for (double x : {-5.0, -1.0, -0.3, 0.7, 2.0, 5.0}) {
    long double base = 1.0L + static_cast<long double>(x) / 512.0L;
    long double ref = powl(base, 512.0L);
    double got = decode(fp_exp(encode(x), 9));
    CHECK(std::fabs(got - static_cast<double>(ref)) <
          1e-4 * std::max(1.0, static_cast<double>(ref)));
  }
}

TEST_CASE("fp_exp inverse pair property") {
  // The limit approximation satisfies exp(x)exp(-x) = (1 - x^2/4^n)^(2^n),
  // so the 1e-3 bound holds for |x| <= sqrt(2^n * 1e-3) at a given n.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> small(-0.7, 0.7);
  for (int i = 0; i < 300; ++i) {
    double x = small(rng);
    double p = decode(fp_mul(fp_exp(encode(x), 9), fp_exp(encode(-x), 9)));
    CHECK(std::fabs(p - 1.0) < 1e-3);
  }
  std::uniform_real_distribution<double> wide(-6.0, 6.0);
  for (int i = 0; i < 300; ++i) {
    double x = wide(rng);
    double p = decode(fp_mul(fp_exp(encode(x), 16), fp_exp(encode(-x), 16)));
    CHECK(std::fabs(p - 1.0) < 1e-3);
  }
}

TEST_CASE("fp_exp monotone on sampled grid") {
  double prev = -1.0;
  for (double x = -24.0; x <= 10.0; x += 0.125) {
    double v = decode(fp_exp(encode(x), 9));
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("fp_inv_sqrt") {
  CHECK(std::fabs(decode(fp_inv_sqrt(encode(1))) - 1.0) < 1e-4);
  CHECK(std::fabs(decode(fp_inv_sqrt(encode(4))) - 0.5) < 1e-4);
  CHECK(std::fabs(decode(fp_inv_sqrt(encode(2))) - 0.7071067811) < 1e-4);
  CHECK_THROWS_AS(fp_inv_sqrt(encode(0)), std::domain_error);
  CHECK_THROWS_AS(fp_inv_sqrt(encode(-3)), std::domain_error);
}

TEST_CASE("fp_inv_sqrt domain sweep") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lg(-6.0, 16.0);
  for (int i = 0; i < 500; ++i) {
    double x = std::exp2(lg(rng));
    double got = decode(fp_inv_sqrt(encode(x)));
    double want = 1.0 / std::sqrt(x);
    CHECK(std::fabs(got - want) <= 1e-4 * want);
  }
}

TEST_CASE("operations are deterministic") {
  for (int rep = 0; rep < 3; ++rep) {
    CHECK(fp_div(encode(1), encode(3)).raw ==
          fp_div(encode(1), encode(3)).raw);
    CHECK(fp_exp(encode(1.234)).raw == fp_exp(encode(1.234)).raw);
  }
}
