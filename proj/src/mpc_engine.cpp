#include "vpdmix/mpc/engine.hpp"

#include <ostream>
#include <stdexcept>

namespace vpdmix::mpc {

namespace {

std::size_t shape_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_compatible(const SecretShared& u, const SecretShared& v) {
  if (u.size() != v.size() || u.parties() != v.parties())
    throw std::invalid_argument("mpc: operand mismatch");
}

}  // namespace

// --- Transcript -------------------------------------------------------------

void Transcript::append(TranscriptEntry e) {
  bool keep_distinct = e.tag == "reveal-output" || e.tag.rfind("mark:", 0) == 0;
  if (!keep_distinct && !entries_.empty()) {
    auto& last = entries_.back();
    if (last.tag == e.tag && last.sender == e.sender &&
        last.receiver == e.receiver) {
      last.bytes += e.bytes;
      last.count += e.count;
      return;
    }
  }
  entries_.push_back(std::move(e));
}

std::size_t Transcript::count_tag(const std::string& tag) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.tag == tag) n += e.count;
  return n;
}

void Transcript::write_jsonl(std::ostream& os) const {
  for (const auto& e : entries_) {
    os << "{\"tag\":\"" << e.tag << "\",\"sender\":" << e.sender
       << ",\"receiver\":" << e.receiver << ",\"bytes\":" << e.bytes
       << ",\"count\":" << e.count << "}\n";
  }
}

// --- TrustedDealer ----------------------------------------------------------

SecretShared TrustedDealer::share_fresh(const std::vector<std::size_t>& shape,
                                        const std::vector<ring_t>& plain) {
  SecretShared out;
  out.shape = shape;
  out.shares.assign(parties_, std::vector<ring_t>(plain.size(), 0));
  for (std::size_t i = 0; i < plain.size(); ++i) {
    ring_t acc = 0;
    for (int p = 0; p + 1 < parties_; ++p) {
      ring_t r = rng_();
      out.shares[p][i] = r;
      acc += r;
    }
    out.shares[parties_ - 1][i] = plain[i] - acc;
  }
  return out;
}

BeaverTriple TrustedDealer::triple(const std::vector<std::size_t>& shape) {
  std::size_t n = shape_count(shape);
  std::vector<ring_t> a(n), b(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng_();
    b[i] = rng_();
    c[i] = a[i] * b[i];
  }
  issued_triples_ += static_cast<long>(n);
  return {share_fresh(shape, a), share_fresh(shape, b), share_fresh(shape, c)};
}

std::vector<SecretShared> TrustedDealer::random_bits(
    const std::vector<std::size_t>& shape, int n) {
  std::size_t m = shape_count(shape);
  std::vector<SecretShared> out;
  out.reserve(n);
  for (int j = 0; j < n; ++j) {
    std::vector<ring_t> bits(m);
    for (std::size_t i = 0; i < m; ++i) bits[i] = rng_() & 1;
    out.push_back(share_fresh(shape, bits));
  }
  return out;
}

// --- MpcEngine: sharing and reconstruction ----------------------------------

SecretShared MpcEngine::share(const FpTensor& x, int owner) {
  return share(x, rng_, owner);
}

SecretShared MpcEngine::share(const FpTensor& x, std::mt19937_64& rng,
                              int owner) {
  SecretShared out;
  out.shape = x.shape;
  out.shares.assign(parties_, std::vector<ring_t>(x.raw.size(), 0));
  for (std::size_t i = 0; i < x.raw.size(); ++i) {
    ring_t acc = 0;
    for (int p = 0; p < parties_; ++p) {
      if (p == owner) continue;
      ring_t r = rng();
      out.shares[p][i] = r;
      acc += r;
    }
    out.shares[owner][i] = static_cast<ring_t>(x.raw[i]) - acc;
  }
  for (int p = 0; p < parties_; ++p) {
    if (p == owner) continue;
    transcript_.append({owner, p, x.raw.size() * 8, 1, "share-input"});
  }
  return out;
}

std::vector<ring_t> MpcEngine::open(const SecretShared& v,
                                    const std::string& tag) {
  std::vector<ring_t> plain(v.size(), 0);
  for (int p = 0; p < parties_; ++p) {
    transcript_.append({p, -1, v.size() * 8, 1, tag});
    for (std::size_t i = 0; i < plain.size(); ++i) plain[i] += v.shares[p][i];
  }
  return plain;
}

FpTensor MpcEngine::reveal(const SecretShared& v) {
  auto plain = open(v, "reveal-output");
  FpTensor out(v.shape);
  for (std::size_t i = 0; i < plain.size(); ++i)
    out.raw[i] = static_cast<std::int64_t>(plain[i]);
  return out;
}

void MpcEngine::mark(const std::string& tag) {
  transcript_.append({-1, -1, 0, 1, "mark:" + tag});
}

// --- linear ops -------------------------------------------------------------

SecretShared MpcEngine::add(const SecretShared& u, const SecretShared& v) {
  check_compatible(u, v);
  SecretShared out = u;
  for (int p = 0; p < parties_; ++p)
    for (std::size_t i = 0; i < out.size(); ++i)
      out.shares[p][i] += v.shares[p][i];
  return out;
}

SecretShared MpcEngine::sub(const SecretShared& u, const SecretShared& v) {
  check_compatible(u, v);
  SecretShared out = u;
  for (int p = 0; p < parties_; ++p)
    for (std::size_t i = 0; i < out.size(); ++i)
      out.shares[p][i] -= v.shares[p][i];
  return out;
}

SecretShared MpcEngine::add_const(const SecretShared& u, std::int64_t raw) {
  // Public constants go into party 0's share only.
  SecretShared out = u;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.shares[0][i] += static_cast<ring_t>(raw);
  return out;
}

SecretShared MpcEngine::mul_const(const SecretShared& u, std::int64_t k) {
  SecretShared out = u;
  for (int p = 0; p < parties_; ++p)
    for (std::size_t i = 0; i < out.size(); ++i)
      out.shares[p][i] *= static_cast<ring_t>(k);
  return out;
}

SecretShared MpcEngine::constant(const std::vector<std::size_t>& shape,
                                 std::int64_t raw) {
  SecretShared out;
  out.shape = shape;
  out.shares.assign(parties_, std::vector<ring_t>(shape_count(shape), 0));
  for (auto& v : out.shares[0]) v = static_cast<ring_t>(raw);
  return out;
}

SecretShared MpcEngine::sum(const SecretShared& u) {
  SecretShared out;
  out.shape = {1};
  out.shares.assign(parties_, std::vector<ring_t>(1, 0));
  for (int p = 0; p < parties_; ++p)
    for (auto v : u.shares[p]) out.shares[p][0] += v;
  return out;
}

SecretShared MpcEngine::concat(const std::vector<SecretShared>& parts) {
  SecretShared out;
  std::size_t total = 0;
  for (const auto& part : parts) total += part.size();
  out.shape = {total};
  out.shares.assign(parties_, {});
  for (int p = 0; p < parties_; ++p) {
    out.shares[p].reserve(total);
    for (const auto& part : parts)
      out.shares[p].insert(out.shares[p].end(), part.shares[p].begin(),
                           part.shares[p].end());
  }
  return out;
}

SecretShared MpcEngine::inject_local(const std::vector<std::int64_t>& raw,
                                     const std::vector<std::size_t>& shape,
                                     int party) {
  if (shape_count(shape) != raw.size())
    throw std::invalid_argument("inject_local: shape mismatch");
  SecretShared out;
  out.shape = shape;
  out.shares.assign(parties_, std::vector<ring_t>(raw.size(), 0));
  for (std::size_t i = 0; i < raw.size(); ++i)
    out.shares[party][i] = static_cast<ring_t>(raw[i]);
  return out;
}

// --- Beaver multiplication --------------------------------------------------

SecretShared MpcEngine::mul(const SecretShared& u, const SecretShared& v) {
  check_compatible(u, v);
  auto t = dealer_.triple(u.shape);
  for (int p = 0; p < parties_; ++p)
    transcript_.append({-1, p, u.size() * 24, 1, "dealer-triple"});

  auto d = open(sub(u, t.a), "open-masked");
  auto e = open(sub(v, t.b), "open-masked");

  SecretShared out = t.c;
  for (int p = 0; p < parties_; ++p)
    for (std::size_t i = 0; i < out.size(); ++i)
      out.shares[p][i] +=
          d[i] * t.b.shares[p][i] + e[i] * t.a.shares[p][i];
  for (std::size_t i = 0; i < out.size(); ++i)
    out.shares[0][i] += d[i] * e[i];
  return out;
}

// --- bit decomposition and derived ops --------------------------------------

// Opens c = x + r for a dealer-supplied random r with known bit shares, then
// adds the public bits of c to the shared bits of -r (two's complement) with
// a carry chain, one Beaver multiplication per bit.  Branching below is on
// bits of c, which is uniformly masked, and both branches cost one identical
// multiplication, so the transcript is value-independent.
std::vector<SecretShared> MpcEngine::bit_decompose(const SecretShared& u) {
  const int kBits = 64;
  auto b = dealer_.random_bits(u.shape, kBits);
  for (int p = 0; p < parties_; ++p)
    transcript_.append({-1, p, u.size() * 8 * kBits, 1, "dealer-bits"});

  // r reconstructs from its bit shares locally.
  SecretShared r;
  r.shape = u.shape;
  r.shares.assign(parties_, std::vector<ring_t>(u.size(), 0));
  for (int j = 0; j < kBits; ++j)
    for (int p = 0; p < parties_; ++p)
      for (std::size_t i = 0; i < u.size(); ++i)
        r.shares[p][i] += b[j].shares[p][i] << j;

  auto c = open(add(u, r), "open-masked");

  // x = c + ~r + 1: start the chain with carry 1 and complemented bits.
  std::vector<SecretShared> result(kBits);
  SecretShared carry = constant(u.shape, 1);
  for (int j = 0; j < kBits; ++j) {
    auto y = add_const(mul_const(b[j], -1), 1);  // ~r bit
    auto t = mul(y, carry);                      // y AND carry
    // xor = y + carry - 2t; with c_j folded in it flips where c_j = 1.
    auto x = sub(add(y, carry), mul_const(t, 2));
    SecretShared sum = x;
    for (std::size_t i = 0; i < u.size(); ++i) {
      bool cbit = (c[i] >> j) & 1;
      if (cbit) {
        // sum = 1 - xor; carry' = y OR carry = y + carry - t.
        for (int p = 0; p < parties_; ++p)
          sum.shares[p][i] = static_cast<ring_t>(0) - x.shares[p][i];
        sum.shares[0][i] += 1;
      }
    }
    auto next_carry = sub(add(y, carry), t);  // OR, used where c_j = 1
    auto and_carry = t;                  // AND, used where c_j = 0
    for (std::size_t i = 0; i < u.size(); ++i) {
      bool cbit = (c[i] >> j) & 1;
      if (!cbit)
        for (int p = 0; p < parties_; ++p)
          next_carry.shares[p][i] = and_carry.shares[p][i];
    }
    result[j] = std::move(sum);
    carry = std::move(next_carry);
  }
  return result;
}

SecretShared MpcEngine::msb(const SecretShared& u) {
  return bit_decompose(u)[63];
}

SecretShared MpcEngine::shr32(const SecretShared& u) {
  auto bits = bit_decompose(u);
  SecretShared out = constant(u.shape, 0);
  for (int j = 32; j < 64; ++j)
    out = add(out, mul_const(bits[j], std::int64_t(1) << (j - 32)));
  return out;
}

SecretShared MpcEngine::nonzero(const SecretShared& u) {
  auto bits = bit_decompose(u);
  // 1 - AND of complements, reduced as a binary tree to cut rounds.
  std::vector<SecretShared> acc;
  acc.reserve(bits.size());
  for (auto& s : bits) acc.push_back(add_const(mul_const(s, -1), 1));
  while (acc.size() > 1) {
    std::vector<SecretShared> next;
    for (std::size_t i = 0; i + 1 < acc.size(); i += 2)
      next.push_back(mul(acc[i], acc[i + 1]));
    if (acc.size() & 1) next.push_back(std::move(acc.back()));
    acc = std::move(next);
  }
  return add_const(mul_const(acc[0], -1), 1);
}

}  // namespace vpdmix::mpc
