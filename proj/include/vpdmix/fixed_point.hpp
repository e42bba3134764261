#pragma once

// Fixed-point arithmetic over the 64-bit two's-complement ring at scale 2^32.
//
// All values live on the grid k * 2^-32 with k a signed 64-bit integer, so the
// representable range of the real value is (-2^31, 2^31) with granularity
// 2^-32.  Multiplication follows the integer/fraction split of the ring
// multiplication algorithm (96-bit headroom, truncation toward zero), division
// is Newton-Raphson against a reciprocal seed, the exponential is the limit
// approximation (1 + x/2^n)^(2^n), and the inverse square root is a Newton
// iteration.  The same circuits run unchanged on secret shares (see
// mpc/backend.hpp); this header is the plaintext surface.

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpdmix {

inline constexpr int kFracBits = 32;
inline constexpr std::int64_t kScale = std::int64_t(1) << kFracBits;

// Raw ring element. Arithmetic wraps mod 2^64; the signed view is the value.
using ring_t = std::uint64_t;

struct FixedPoint {
  std::int64_t raw = 0;

  static FixedPoint from_raw(std::int64_t r) { return FixedPoint{r}; }
  friend bool operator==(FixedPoint a, FixedPoint b) { return a.raw == b.raw; }
  friend bool operator!=(FixedPoint a, FixedPoint b) { return a.raw != b.raw; }
};

// encode: raw = trunc(x * 2^32), truncation toward zero.
// Throws std::range_error for |x| >= 2^31.
FixedPoint encode(double x);

double decode(FixedPoint v);
long double decode_ld(FixedPoint v);

// Division configuration (Newton-Raphson reciprocal).
struct DivConfig {
  // Newton iterations.  10 matches the small documented domain; the trainer
  // raises this (see TrainConfig) because den_n can be far below 1.
  int iterations = 10;
  enum class InitialGuess { kPaperFormula, kAffineFallback };
  InitialGuess initial_guess_mode = InitialGuess::kPaperFormula;
  // Squarings used by the exponential inside the paper-formula seed.
  int seed_exp_squarings = 9;
};

struct ExpConfig {
  int n_squarings = 9;
};

struct InvSqrtConfig {
  int iterations = 30;
};

// Dense row-major tensor of raw ring values.
struct FpTensor {
  std::vector<std::size_t> shape;
  std::vector<std::int64_t> raw;

  FpTensor() = default;
  explicit FpTensor(std::vector<std::size_t> s)
      : shape(std::move(s)), raw(count_of(shape), 0) {}
  FpTensor(std::vector<std::size_t> s, std::vector<std::int64_t> r)
      : shape(std::move(s)), raw(std::move(r)) {
    if (raw.size() != count_of(shape))
      throw std::invalid_argument("FpTensor: shape/data mismatch");
  }

  static std::size_t count_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }
  std::size_t size() const { return raw.size(); }
};

// Plaintext operations.  These run the shared ring circuits on a plaintext
// backend and add range checking on top (the circuits themselves wrap).

// Exact truncated product.  Throws std::range_error if the mathematical
// product leaves (-2^31, 2^31).
FixedPoint fp_mul(FixedPoint a, FixedPoint b);

// Newton-Raphson division.  div(a, 0) returns 0 (no exception); see the
// zero-divisor note in fp_circuit.hpp.  Verified convergence domain for the
// paper-formula seed: b in roughly [2^-28, 2^16] (positive or negative via
// sign extraction), given enough iterations to cover log2(1/b) doublings.
FixedPoint fp_div(FixedPoint a, FixedPoint b, const DivConfig& cfg = {});

// Limit-approximation exponential (1 + x/2^n)^(2^n).  True values below the
// grid (x <= ln(2^-32) ~ -22.18) truncate to exactly 0.
FixedPoint fp_exp(FixedPoint x, int n_squarings = 9);

// Newton inverse square root; domain error for x <= 0.  Verified domain
// [2^-6, 2^16] at the default iteration count, relative error <= 1e-4.
FixedPoint fp_inv_sqrt(FixedPoint x, int iterations = 30);

}  // namespace vpdmix
