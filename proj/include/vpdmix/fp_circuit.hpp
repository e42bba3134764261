#pragma once

// Fixed-point circuits over an abstract ring backend.
//
// Every nonlinear fixed-point operation (multiply, divide, exp, inverse
// square root, comparison) is written once here against a small backend
// concept and executed both on plaintext tensors (PlainBackend below) and on
// additive secret shares (mpc::MpcBackend).  Both backends implement the same
// ring semantics, so a shared evaluation reveals to exactly the plaintext
// result, bit for bit.
//
// Backend concept, T = tensor of 64-bit ring elements:
//   T add(T,T); T sub(T,T);
//   T add_const(T, int64 raw);     element + public constant
//   T mul(T,T);                    wrapping ring product
//   T mul_const(T, int64 k);       element * public integer
//   T constant(const T& like, int64 raw);
//   T msb(T);                      top bit as 0/1 ring elements
//   T shr32(T);                    floor(x / 2^32), x read as unsigned
//   T nonzero(T);                  0/1 ring elements, 1 iff x != 0
//   T sum(T);                      shape {1}, ring sum of all elements

#include <cmath>

#include "vpdmix/fixed_point.hpp"

namespace vpdmix {

namespace detail {
inline std::int64_t enc_raw(double x) { return encode(x).raw; }
}  // namespace detail

// Splits x into (sign in {+1,-1}, |x|) as ring values.  sign(0) = +1.
template <class B>
struct SignSplit {
  typename B::T sgn;
  typename B::T abs;
};

template <class B>
SignSplit<B> fp_sign_split(B& be, const typename B::T& x) {
  auto neg_bit = be.msb(x);
  // 1 - 2*bit, i.e. +1 or -1 in the ring.
  auto sgn = be.add_const(be.mul_const(neg_bit, -2), 1);
  return {sgn, be.mul(sgn, x)};
}

// Truncated fixed-point product via the integer/fraction split.  The split
// keeps every partial product inside 64 bits for in-range operands, which is
// the whole reason the algorithm exists at scale 2^32.
template <class B>
typename B::T fp_mul_t(B& be, const typename B::T& a, const typename B::T& b) {
  auto sa = fp_sign_split(be, a);
  auto sb = fp_sign_split(be, b);

  auto hi_a = be.shr32(sa.abs);  // integer part, unscaled
  auto hi_b = be.shr32(sb.abs);
  auto lo_a = be.sub(sa.abs, be.mul_const(hi_a, kScale));  // fraction * 2^32
  auto lo_b = be.sub(sb.abs, be.mul_const(hi_b, kScale));

  auto t1 = be.mul_const(be.mul(hi_a, hi_b), kScale);
  auto t2 = be.mul(hi_a, lo_b);
  auto t3 = be.mul(lo_a, hi_b);
  auto t4 = be.shr32(be.mul(lo_a, lo_b));

  auto res = be.add(be.add(t1, t2), be.add(t3, t4));
  return be.mul(be.mul(sa.sgn, sb.sgn), res);
}

// Limit-approximation exponential: (1 + x/2^n)^(2^n) by n squarings.
// The base is clamped at 0 (a data-oblivious select), so x <= -2^n yields
// exactly 0 instead of a diverging alternating power.
template <class B>
typename B::T fp_exp_t(B& be, const typename B::T& x, int n_squarings) {
  // encode(2^-n) is a power of two, so this multiply is an exact shift.
  auto step = be.constant(x, std::int64_t(1) << (kFracBits - n_squarings));
  auto y = be.add_const(fp_mul_t(be, x, step), kScale);
  auto nonneg = be.add_const(be.mul_const(be.msb(y), -1), 1);
  y = be.mul(nonneg, y);
  for (int i = 0; i < n_squarings; ++i) y = fp_mul_t(be, y, y);
  return y;
}

// Newton-Raphson reciprocal seed.  The paper-formula mode is the scaled
// reading of the printed seed: 3*exp(1 - 2|b|) + 0.003.
template <class B>
typename B::T fp_recip_seed(B& be, const typename B::T& babs,
                            const DivConfig& cfg) {
  if (cfg.initial_guess_mode == DivConfig::InitialGuess::kAffineFallback) {
    // 1/b ~ 2.9142 - 2b on b in [0.5, 1].
    return be.add_const(be.mul_const(babs, -2), detail::enc_raw(2.9142));
  }
  auto arg = be.add_const(be.mul_const(babs, -2), kScale);  // 1 - 2|b|
  auto e = fp_exp_t(be, arg, cfg.seed_exp_squarings);
  return be.add_const(be.mul_const(e, 3), detail::enc_raw(0.003));
}

// div(a, b) = sign(b) * recip(|b|) * a, with a zero-divisor test folded in so
// that div(a, 0) = 0 exactly (the behaviour the renormalizer discussion
// depends on).  Verified convergence domain of the paper-formula seed:
// |b| in [2^-28, 512] with iterations >= log2(1/|b|) + 6.
template <class B>
typename B::T fp_div_t(B& be, const typename B::T& a, const typename B::T& b,
                       const DivConfig& cfg) {
  auto sb = fp_sign_split(be, b);
  auto q = fp_recip_seed(be, sb.abs, cfg);
  for (int i = 0; i < cfg.iterations; ++i) {
    // q <- q + q*(1 - b*q), the Newton update toward 1/|b|.
    auto err = be.add_const(be.mul_const(fp_mul_t(be, sb.abs, q), -1), kScale);
    q = be.add(q, fp_mul_t(be, q, err));
  }
  auto out = fp_mul_t(be, q, a);
  out = be.mul(sb.sgn, out);
  return be.mul(be.nonzero(b), out);
}

// Reciprocal alone (used by the trainer: one reciprocal per example, then
// products).  Identical arithmetic to the tail of fp_div_t.
template <class B>
typename B::T fp_recip_t(B& be, const typename B::T& b, const DivConfig& cfg) {
  auto sb = fp_sign_split(be, b);
  auto q = fp_recip_seed(be, sb.abs, cfg);
  for (int i = 0; i < cfg.iterations; ++i) {
    auto err = be.add_const(be.mul_const(fp_mul_t(be, sb.abs, q), -1), kScale);
    q = be.add(q, fp_mul_t(be, q, err));
  }
  q = be.mul(sb.sgn, q);
  return be.mul(be.nonzero(b), q);
}

// Newton inverse square root, y <- y(3 - x y^2)/2, seeded with a decaying
// exponential so the seed stays below sqrt(3/x) on the whole domain.
template <class B>
typename B::T fp_inv_sqrt_t(B& be, const typename B::T& x, int iterations,
                            int seed_exp_squarings = 9) {
  auto half = be.constant(x, detail::enc_raw(0.5));
  auto arg = be.add_const(be.mul_const(fp_mul_t(be, x, half), -1),
                          detail::enc_raw(-0.2));
  auto y = be.add_const(
      fp_mul_t(be, fp_exp_t(be, arg, seed_exp_squarings),
               be.constant(x, detail::enc_raw(2.2))),
      detail::enc_raw(0.0003));
  auto three_half = be.constant(x, detail::enc_raw(1.5));
  for (int i = 0; i < iterations; ++i) {
    auto y2 = fp_mul_t(be, y, y);
    auto xy2 = fp_mul_t(be, x, y2);
    auto corr = fp_mul_t(be, fp_mul_t(be, y, xy2), half);
    y = be.sub(fp_mul_t(be, y, three_half), corr);
  }
  return y;
}

// 0/1 ring elements: 1 iff a < b as signed values (valid for |a-b| < 2^63).
template <class B>
typename B::T fp_lt(B& be, const typename B::T& a, const typename B::T& b) {
  return be.msb(be.sub(a, b));
}

// ---------------------------------------------------------------------------

// Plaintext backend: direct two's-complement bit operations on FpTensor.
class PlainBackend {
 public:
  using T = FpTensor;

  static T map2(const T& a, const T& b, ring_t (*f)(ring_t, ring_t)) {
    if (a.raw.size() != b.raw.size())
      throw std::invalid_argument("PlainBackend: shape mismatch");
    T out(a.shape);
    for (std::size_t i = 0; i < a.raw.size(); ++i)
      out.raw[i] = static_cast<std::int64_t>(
          f(static_cast<ring_t>(a.raw[i]), static_cast<ring_t>(b.raw[i])));
    return out;
  }

  T add(const T& a, const T& b) {
    return map2(a, b, [](ring_t x, ring_t y) { return x + y; });
  }
  T sub(const T& a, const T& b) {
    return map2(a, b, [](ring_t x, ring_t y) { return x - y; });
  }
  T mul(const T& a, const T& b) {
    return map2(a, b, [](ring_t x, ring_t y) { return x * y; });
  }
  T add_const(const T& a, std::int64_t raw) {
    T out(a.shape);
    for (std::size_t i = 0; i < a.raw.size(); ++i)
      out.raw[i] = static_cast<std::int64_t>(static_cast<ring_t>(a.raw[i]) +
                                             static_cast<ring_t>(raw));
    return out;
  }
  T mul_const(const T& a, std::int64_t k) {
    T out(a.shape);
    for (std::size_t i = 0; i < a.raw.size(); ++i)
      out.raw[i] = static_cast<std::int64_t>(static_cast<ring_t>(a.raw[i]) *
                                             static_cast<ring_t>(k));
    return out;
  }
  T constant(const T& like, std::int64_t raw) {
    T out(like.shape);
    for (auto& v : out.raw) v = raw;
    return out;
  }
  T msb(const T& a) {
    T out(a.shape);
    for (std::size_t i = 0; i < a.raw.size(); ++i)
      out.raw[i] = static_cast<std::int64_t>(static_cast<ring_t>(a.raw[i]) >> 63);
    return out;
  }
  T shr32(const T& a) {
    T out(a.shape);
    for (std::size_t i = 0; i < a.raw.size(); ++i)
      out.raw[i] = static_cast<std::int64_t>(static_cast<ring_t>(a.raw[i]) >> 32);
    return out;
  }
  T nonzero(const T& a) {
    T out(a.shape);
    for (std::size_t i = 0; i < a.raw.size(); ++i)
      out.raw[i] = a.raw[i] != 0 ? 1 : 0;
    return out;
  }
  T sum(const T& a) {
    T out({1});
    ring_t acc = 0;
    for (auto v : a.raw) acc += static_cast<ring_t>(v);
    out.raw[0] = static_cast<std::int64_t>(acc);
    return out;
  }
};

}  // namespace vpdmix
