#include "vpdmix/dp/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace vpdmix::dp {

void NoiseSpec::validate() const {
  if (!(sigma > 0)) throw std::invalid_argument("NoiseSpec: sigma must be > 0");
  if (!(clip > 0)) throw std::invalid_argument("NoiseSpec: clip must be > 0");
  if (parties < 1) throw std::invalid_argument("NoiseSpec: parties must be >= 1");
  if (parties == 1 && topology == NoiseTopology::kDistributed)
    throw std::invalid_argument("NoiseSpec: P=1 is the trusted topology");
}

namespace {

// Bernoulli(exp(-num/den)) for num <= den, by the alternating-series trick:
// draw B_k ~ Bernoulli(num / (den * k)) until the first failure at k = K;
// the result is 1 iff K is odd.  Every inner draw is an exact integer
// comparison, so no acceptance bias enters here.
bool bernoulli_exp_le1(std::uint64_t num, std::uint64_t den,
                       std::mt19937_64& rng) {
  std::uint64_t k = 1;
  for (;;) {
    std::uniform_int_distribution<std::uint64_t> d(0, den * k - 1);
    if (d(rng) >= num) return k % 2 == 1;
    ++k;
  }
}

}  // namespace

bool bernoulli_exp(std::uint64_t num, std::uint64_t den, std::mt19937_64& rng) {
  if (den == 0) throw std::invalid_argument("bernoulli_exp: den = 0");
  while (num > den) {
    if (!bernoulli_exp_le1(1, 1, rng)) return false;
    num -= den;
  }
  return bernoulli_exp_le1(num, den, rng);
}

std::int64_t sample_discrete_laplace(std::uint64_t t, std::mt19937_64& rng) {
  if (t == 0) throw std::invalid_argument("sample_discrete_laplace: t = 0");
  std::uniform_int_distribution<std::uint64_t> du(0, t - 1);
  std::uniform_int_distribution<int> db(0, 1);
  for (;;) {
    std::uint64_t u = du(rng);
    if (!bernoulli_exp_le1(u, t, rng)) continue;
    std::uint64_t v = 0;
    while (bernoulli_exp_le1(1, 1, rng)) ++v;
    std::uint64_t x = u + t * v;
    bool negative = db(rng) == 1;
    if (negative && x == 0) continue;
    auto m = static_cast<std::int64_t>(x);
    return negative ? -m : m;
  }
}

std::int64_t sample_discrete_gaussian(long double sigma2,
                                      std::mt19937_64& rng) {
  if (!(sigma2 > 0))
    throw std::invalid_argument("sample_discrete_gaussian: sigma2 <= 0");
  auto t = static_cast<std::uint64_t>(std::floor(std::sqrt((double)sigma2))) + 1;
  const long double two_sigma2 = 2.0L * sigma2;
  const long double shift = sigma2 / static_cast<long double>(t);
  for (;;) {
    std::int64_t y = sample_discrete_laplace(t, rng);
    long double dev = static_cast<long double>(y < 0 ? -y : y) - shift;
    long double accept = expl(-dev * dev / two_sigma2);
    // 2^-64 acceptance granularity; exact for accept = 1.
    long double u = static_cast<long double>(rng()) / 18446744073709551616.0L;
    if (u < accept) return y;
  }
}

std::vector<std::int64_t> sample_discrete_gaussian_vec(long double sigma2,
                                                       std::size_t d,
                                                       std::mt19937_64& rng) {
  std::vector<std::int64_t> out(d);
  for (auto& v : out) v = sample_discrete_gaussian(sigma2, rng);
  return out;
}

std::int64_t noise_unit_raw(double clip) {
  return encode(clip).raw >> 16;
}

double party_integer_variance(const NoiseSpec& ns) {
  return ns.sigma * ns.sigma * 4294967296.0 / ns.parties;
}

std::vector<std::int64_t> party_noise_raw(const NoiseSpec& ns, std::size_t d,
                                          std::mt19937_64& rng) {
  ns.validate();
  const long double sigma2 = party_integer_variance(ns);
  const std::int64_t unit = noise_unit_raw(ns.clip);
  std::vector<std::int64_t> out(d);
  for (auto& v : out) v = unit * sample_discrete_gaussian(sigma2, rng);
  return out;
}

mpc::SecretShared sample_party_noise_share(const NoiseSpec& ns, int party,
                                           std::size_t d, std::mt19937_64& rng,
                                           mpc::MpcEngine& engine) {
  if (ns.topology != NoiseTopology::kDistributed)
    throw std::invalid_argument("sample_party_noise_share: not distributed");
  return engine.inject_local(party_noise_raw(ns, d, rng), {d}, party);
}

}  // namespace vpdmix::dp
