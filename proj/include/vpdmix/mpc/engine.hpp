#pragma once

// Simulated arithmetic MPC over the 64-bit ring: P-out-of-P additive secret
// sharing, Beaver-triple multiplication from a trusted dealer, and a
// dealer-assisted bit-decomposition subprotocol that powers sign extraction,
// truncation and zero tests.  Parties live in one process; every message that
// a real deployment would put on the wire is recorded in the Transcript, and
// message sizes depend only on shapes, never on values.
//
// Model: honest-but-curious parties, trusted dealer that is never a data
// party.  Reveal ("reveal-output") is the only event that reconstructs a
// value for the parties; Beaver and bit-decomposition openings
// ("open-masked") only ever open uniformly masked values.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "vpdmix/fixed_point.hpp"

namespace vpdmix::mpc {

struct PartyId {
  int index = 0;
};

struct TranscriptEntry {
  int sender = 0;    // -1 = dealer
  int receiver = 0;  // -1 = all parties
  std::size_t bytes = 0;
  std::size_t count = 1;  // messages folded into this entry
  std::string tag;
};

class Transcript {
 public:
  // Consecutive messages with the same (tag, sender, receiver) are folded
  // into one entry; reveals and phase marks always stay distinct records.
  void append(TranscriptEntry e);
  const std::vector<TranscriptEntry>& entries() const { return entries_; }
  std::size_t count_tag(const std::string& tag) const;
  void write_jsonl(std::ostream& os) const;

 private:
  std::vector<TranscriptEntry> entries_;
};

// Additive shares of a tensor of ring elements.  The simulator keeps all P
// shares in one struct; shares_[p] is what party p holds.
struct SecretShared {
  std::vector<std::size_t> shape;
  std::vector<std::vector<ring_t>> shares;

  std::size_t size() const { return shares.empty() ? 0 : shares[0].size(); }
  int parties() const { return static_cast<int>(shares.size()); }
};

struct BeaverTriple {
  SecretShared a, b, c;  // reveal(c) = reveal(a) * reveal(b) in the ring
};

class TrustedDealer {
 public:
  explicit TrustedDealer(std::uint64_t seed, int parties)
      : rng_(seed), parties_(parties) {}

  BeaverTriple triple(const std::vector<std::size_t>& shape);
  // Shares of uniform random bits (ring elements in {0,1}); n per element.
  std::vector<SecretShared> random_bits(const std::vector<std::size_t>& shape,
                                        int n);
  long issued_triples() const { return issued_triples_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  SecretShared share_fresh(const std::vector<std::size_t>& shape,
                           const std::vector<ring_t>& plain);
  std::mt19937_64 rng_;
  int parties_;
  long issued_triples_ = 0;
};

class MpcEngine {
 public:
  MpcEngine(int parties, std::uint64_t seed)
      : parties_(parties),
        dealer_(seed ^ 0x9e3779b97f4a7c15ULL, parties),
        rng_(seed) {
    if (parties < 2) throw std::invalid_argument("MpcEngine: need P >= 2");
  }

  int parties() const { return parties_; }
  TrustedDealer& dealer() { return dealer_; }
  Transcript& transcript() { return transcript_; }

  // --- sharing / reconstruction -------------------------------------------
  SecretShared share(const FpTensor& x, int owner = 0);
  SecretShared share(const FpTensor& x, std::mt19937_64& rng, int owner = 0);
  FpTensor reveal(const SecretShared& v);

  // --- linear (local, no communication) -----------------------------------
  SecretShared add(const SecretShared& u, const SecretShared& v);
  SecretShared sub(const SecretShared& u, const SecretShared& v);
  SecretShared add_const(const SecretShared& u, std::int64_t raw);
  SecretShared mul_const(const SecretShared& u, std::int64_t k);
  SecretShared constant(const std::vector<std::size_t>& shape,
                        std::int64_t raw);
  // Each party sums its own share vector; shape collapses to {1}.
  SecretShared sum(const SecretShared& u);
  // Concatenation of share vectors (local bookkeeping).
  SecretShared concat(const std::vector<SecretShared>& parts);

  // --- interactive --------------------------------------------------------
  SecretShared mul(const SecretShared& u, const SecretShared& v);
  SecretShared msb(const SecretShared& u);
  SecretShared shr32(const SecretShared& u);
  SecretShared nonzero(const SecretShared& u);

  // Party `p` folds a locally sampled raw vector into a sharing of it
  // (its own share is the value, everyone else holds zero); used for the
  // distributed noise contributions.  No communication.
  SecretShared inject_local(const std::vector<std::int64_t>& raw,
                            const std::vector<std::size_t>& shape, int party);

  // Transcript marker for protocol phases (zero-byte bookkeeping entry).
  void mark(const std::string& tag);

 private:
  // Opens a (masked) value to all parties and records the messages.
  std::vector<ring_t> open(const SecretShared& v, const std::string& tag);
  // Shares of the bits of u, least significant first.
  std::vector<SecretShared> bit_decompose(const SecretShared& u);

  int parties_;
  TrustedDealer dealer_;
  std::mt19937_64 rng_;
  Transcript transcript_;
};

// Adapter giving the fixed-point circuits their backend over shares.
class MpcBackend {
 public:
  using T = SecretShared;
  explicit MpcBackend(MpcEngine& e) : eng_(&e) {}

  T add(const T& a, const T& b) { return eng_->add(a, b); }
  T sub(const T& a, const T& b) { return eng_->sub(a, b); }
  T mul(const T& a, const T& b) { return eng_->mul(a, b); }
  T add_const(const T& a, std::int64_t raw) { return eng_->add_const(a, raw); }
  T mul_const(const T& a, std::int64_t k) { return eng_->mul_const(a, k); }
  T constant(const T& like, std::int64_t raw) {
    return eng_->constant(like.shape, raw);
  }
  T msb(const T& a) { return eng_->msb(a); }
  T shr32(const T& a) { return eng_->shr32(a); }
  T nonzero(const T& a) { return eng_->nonzero(a); }
  T sum(const T& a) { return eng_->sum(a); }

 private:
  MpcEngine* eng_;
};

}  // namespace vpdmix::mpc
