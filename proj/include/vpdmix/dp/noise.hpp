#pragma once

// Exact discrete Gaussian sampling (rejection from the discrete Laplace with
// rational Bernoulli(exp(.)) chains) and the distributed variant where each
// party contributes an independent share with 1/P of the target variance.
//
// Noise lives on an integer grid mapped onto the fixed-point scale at
// C_unit = C * 2^-16 per step: fine enough relative to the clipping ball that
// quantization is negligible, coarse enough that the integer variances stay
// well inside 64 bits.

#include <cstdint>
#include <random>
#include <vector>

#include "vpdmix/fixed_point.hpp"
#include "vpdmix/mpc/engine.hpp"

namespace vpdmix::dp {

enum class NoiseTopology { kTrustedThirdParty, kDistributed };

struct NoiseSpec {
  double sigma = 1.0;  // noise multiplier, in clipped-gradient units
  double clip = 1.0;   // clipping threshold C
  int parties = 1;
  NoiseTopology topology = NoiseTopology::kTrustedThirdParty;

  void validate() const;
};

// Bernoulli(exp(-num/den)) drawn exactly; num/den may exceed 1.
bool bernoulli_exp(std::uint64_t num, std::uint64_t den, std::mt19937_64& rng);

// Two-sided discrete Laplace with mass proportional to exp(-|k|/t), t >= 1.
std::int64_t sample_discrete_laplace(std::uint64_t t, std::mt19937_64& rng);

// N_Z(0, sigma2): mass proportional to exp(-k^2 / (2 sigma2)).  Exact up to
// the 2^-64 granularity of the long-double acceptance draw.
std::int64_t sample_discrete_gaussian(long double sigma2, std::mt19937_64& rng);

std::vector<std::int64_t> sample_discrete_gaussian_vec(long double sigma2,
                                                       std::size_t d,
                                                       std::mt19937_64& rng);

// Grid geometry for a clipping threshold C.
std::int64_t noise_unit_raw(double clip);            // C * 2^16
double party_integer_variance(const NoiseSpec& ns);  // sigma^2 * 2^32 / P

// One party's additive noise contribution as raw fixed-point values:
// per coordinate, noise_unit_raw(C) * N_Z(0, sigma^2 * 2^32 / P).
std::vector<std::int64_t> party_noise_raw(const NoiseSpec& ns, std::size_t d,
                                          std::mt19937_64& rng);

// Same contribution folded into the engine as party `party`'s local share.
mpc::SecretShared sample_party_noise_share(const NoiseSpec& ns, int party,
                                           std::size_t d, std::mt19937_64& rng,
                                           mpc::MpcEngine& engine);

}  // namespace vpdmix::dp
