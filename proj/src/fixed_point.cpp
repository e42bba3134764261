#include "vpdmix/fixed_point.hpp"

#include <cmath>

#include "vpdmix/fp_circuit.hpp"

namespace vpdmix {

namespace {

constexpr long double kScaleLd = 4294967296.0L;

FpTensor one(std::int64_t raw) { return FpTensor({1}, {raw}); }

}  // namespace

FixedPoint encode(double x) {
  if (!std::isfinite(x) || std::fabs(x) >= 2147483648.0)
    throw std::range_error("encode: |x| >= 2^31");
  // x has at most 53 significant bits, so the long double product is exact.
  long double t = static_cast<long double>(x) * kScaleLd;
  return FixedPoint{static_cast<std::int64_t>(truncl(t))};
}

double decode(FixedPoint v) {
  return static_cast<double>(static_cast<long double>(v.raw) / kScaleLd);
}

long double decode_ld(FixedPoint v) {
  return static_cast<long double>(v.raw) / kScaleLd;
}

FixedPoint fp_mul(FixedPoint a, FixedPoint b) {
  __int128 p = static_cast<__int128>(a.raw) * static_cast<__int128>(b.raw);
  __int128 limit = static_cast<__int128>(1) << 95;  // 2^63 * 2^32
  if (p >= limit || p <= -limit)
    throw std::range_error("fp_mul: product out of range");
  PlainBackend be;
  return FixedPoint{fp_mul_t(be, one(a.raw), one(b.raw)).raw[0]};
}

FixedPoint fp_div(FixedPoint a, FixedPoint b, const DivConfig& cfg) {
  PlainBackend be;
  return FixedPoint{fp_div_t(be, one(a.raw), one(b.raw), cfg).raw[0]};
}

FixedPoint fp_exp(FixedPoint x, int n_squarings) {
  // e^x fits the grid only for x < ln(2^31).
  if (x.raw > encode(21.487).raw)
    throw std::range_error("fp_exp: overflow for large positive x");
  PlainBackend be;
  return FixedPoint{fp_exp_t(be, one(x.raw), n_squarings).raw[0]};
}

FixedPoint fp_inv_sqrt(FixedPoint x, int iterations) {
  if (x.raw <= 0) throw std::domain_error("fp_inv_sqrt: x <= 0");
  PlainBackend be;
  return FixedPoint{fp_inv_sqrt_t(be, one(x.raw), iterations).raw[0]};
}

}  // namespace vpdmix
