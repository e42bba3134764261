#include "vpdmix/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "vpdmix/fp_circuit.hpp"

namespace vpdmix::train {

namespace {

using model::ConstrainedTheta;
using model::MixtureSpec;

// Party-local plaintext preparation: mat^(p) on the fixed-point grid after
// the renormalizer, and the dmat coordinates premultiplied by mat^(p) so the
// circuit only assembles cross-party products (Eq. 21 with the local factor
// folded in).  Coordinates are emitted in the canonical layout order.
struct PartyPrep {
  std::vector<FpTensor> mat;                       // K tensors, each {b}
  std::vector<std::pair<int, FpTensor>> dcoords;   // (component, values)
};

PartyPrep prep_party(const MixtureSpec& spec, const Eigen::MatrixXd& Xb,
                     const ConstrainedTheta& theta, int party,
                     const TrainConfig& cfg) {
  const auto b = static_cast<std::size_t>(Xb.rows());
  Eigen::MatrixXd LF = model::local_log_density(spec, Xb, theta, party);
  Eigen::VectorXd c = cfg.normalizer
                          ? model::compute_normalizer(LF, cfg.t, cfg.c_step)
                          : Eigen::VectorXd::Zero(Xb.rows());

  PartyPrep out;
  out.mat.assign(static_cast<std::size_t>(spec.K), FpTensor({b}));
  for (int k = 0; k < spec.K; ++k)
    for (std::size_t n = 0; n < b; ++n) {
      double lf = LF(static_cast<Eigen::Index>(n), k) +
                  c[static_cast<Eigen::Index>(n)];
      if (lf > 21.0)
        throw std::runtime_error("trainer: local density overflows the grid");
      out.mat[static_cast<std::size_t>(k)].raw[n] =
          fp_exp(encode(lf), cfg.exp_squarings).raw;
    }

  auto dmat = model::local_dlogf(spec, Xb, theta, party);
  Eigen::Index mcol = 0;
  for (auto f : spec.party_grouped_order()) {
    if (spec.features[f].party != party) continue;
    const int dc = spec.feature_con_dim(f);
    for (int k = 0; k < spec.K; ++k)
      for (int j = 0; j < dc; ++j) {
        FpTensor v({b});
        for (std::size_t n = 0; n < b; ++n) {
          double dv = dmat[n](k, mcol + j);
          std::int64_t mraw = out.mat[static_cast<std::size_t>(k)].raw[n];
          if (std::abs(dv) < 1e5) {
            v.raw[n] = fp_mul(encode(dv), FixedPoint::from_raw(mraw)).raw;
          } else {
            // log-domain route for huge log-derivatives (1/omega with a tiny
            // omega); keeps every encode in range
            double lg = std::log(std::abs(dv)) +
                        LF(static_cast<Eigen::Index>(n), k) +
                        c[static_cast<Eigen::Index>(n)];
            if (lg > 21.0)
              throw std::runtime_error(
                  "trainer: premultiplied dmat overflows the grid");
            std::int64_t raw = fp_exp(encode(lg), cfg.exp_squarings).raw;
            v.raw[n] = dv < 0 ? -raw : raw;
          }
        }
        out.dcoords.emplace_back(k, std::move(v));
      }
    mcol += dc;
  }
  return out;
}

template <class B>
struct CircuitIn {
  std::vector<std::int64_t> pi_raw;
  std::vector<std::vector<typename B::T>> mat;  // [party][component]
  std::vector<std::vector<std::pair<int, typename B::T>>> dcoords;
};

// The shared gradient circuit: joint and leave-one-out density products,
// the mixture denominator and its reciprocal, GP and GR coordinates,
// per-example clipping, batch summation, and the aggregate zero-den flag.
// Runs identically on plaintext tensors and on secret shares.
template <class B>
std::pair<std::vector<typename B::T>, typename B::T> gradient_circuit(
    B& be, const CircuitIn<B>& in, const TrainConfig& cfg) {
  using T = typename B::T;
  const int P = static_cast<int>(in.mat.size());
  const int K = static_cast<int>(in.pi_raw.size());
  DivConfig div;
  div.iterations = cfg.div_iterations;

  std::vector<T> joint;
  std::vector<std::vector<T>> cross(static_cast<std::size_t>(P));
  for (int k = 0; k < K; ++k) {
    std::vector<std::optional<T>> prefix(static_cast<std::size_t>(P) + 1);
    std::vector<std::optional<T>> suffix(static_cast<std::size_t>(P) + 1);
    for (int p = 0; p < P; ++p) {
      const auto& m = in.mat[static_cast<std::size_t>(p)][k];
      prefix[p + 1] = prefix[p] ? fp_mul_t(be, *prefix[p], m) : m;
    }
    for (int p = P - 1; p >= 0; --p) {
      const auto& m = in.mat[static_cast<std::size_t>(p)][k];
      suffix[p] = suffix[p + 1] ? fp_mul_t(be, m, *suffix[p + 1]) : m;
    }
    joint.push_back(*prefix[static_cast<std::size_t>(P)]);
    for (int p = 0; p < P; ++p) {
      const auto& lo = prefix[p];
      const auto& hi = suffix[p + 1];
      if (lo && hi)
        cross[static_cast<std::size_t>(p)].push_back(fp_mul_t(be, *lo, *hi));
      else if (lo)
        cross[static_cast<std::size_t>(p)].push_back(*lo);
      else if (hi)
        cross[static_cast<std::size_t>(p)].push_back(*hi);
      else
        cross[static_cast<std::size_t>(p)].push_back(
            be.constant(joint.back(), kScale));
    }
  }

  T den = fp_mul_t(be, joint[0], be.constant(joint[0], in.pi_raw[0]));
  for (int k = 1; k < K; ++k)
    den = be.add(den, fp_mul_t(be, joint[static_cast<std::size_t>(k)],
                               be.constant(den, in.pi_raw[k])));
  T recip = fp_recip_t(be, den, div);
  T flag = be.sum(be.add_const(be.mul_const(be.nonzero(den), -1), 1));

  std::vector<T> coords;
  for (int k = 0; k < K; ++k)
    coords.push_back(fp_mul_t(be, joint[static_cast<std::size_t>(k)], recip));
  std::vector<T> piq;  // pi_k / den, shared across GR coordinates
  for (int k = 0; k < K; ++k)
    piq.push_back(fp_mul_t(be, recip, be.constant(recip, in.pi_raw[k])));
  for (int p = 0; p < P; ++p)
    for (const auto& [k, v] : in.dcoords[static_cast<std::size_t>(p)])
      coords.push_back(fp_mul_t(
          be,
          fp_mul_t(be, v,
                   cross[static_cast<std::size_t>(p)]
                        [static_cast<std::size_t>(k)]),
          piq[static_cast<std::size_t>(k)]));

  if (std::isfinite(cfg.C)) {
    T norm2 = fp_mul_t(be, coords[0], coords[0]);
    for (std::size_t i = 1; i < coords.size(); ++i)
      norm2 = be.add(norm2, fp_mul_t(be, coords[i], coords[i]));
    auto c2 = be.constant(norm2, encode(cfg.C * cfg.C).raw);
    T keep = fp_lt(be, norm2, c2);  // 1 iff the norm is already inside C
    T inv = fp_inv_sqrt_t(be, norm2, cfg.inv_sqrt_iterations);
    T cfac = fp_mul_t(be, inv, be.constant(inv, encode(cfg.C).raw));
    // keep is a ring bit; lift it to fixed-point 1.0 before blending
    T factor = be.add(be.mul_const(keep, kScale),
                      be.mul(be.add_const(be.mul_const(keep, -1), 1), cfac));
    for (auto& coord : coords) coord = fp_mul_t(be, coord, factor);
  }

  std::vector<T> sums;
  sums.reserve(coords.size());
  for (const auto& coord : coords) sums.push_back(be.sum(coord));
  return {std::move(sums), std::move(flag)};
}

// Noise contributions as raw grid values, one vector per contributing
// stream: P party streams (distributed) or one dealer stream (trusted).
std::vector<std::vector<std::int64_t>> noise_contributions(
    const TrainConfig& cfg, int parties, std::size_t d,
    std::vector<std::mt19937_64>& rngs) {
  dp::NoiseSpec ns = cfg.noise;
  ns.clip = cfg.C;
  std::vector<std::vector<std::int64_t>> out;
  if (ns.topology == dp::NoiseTopology::kDistributed) {
    ns.parties = parties;
    if (rngs.size() != static_cast<std::size_t>(parties))
      throw std::invalid_argument("trainer: need one noise stream per party");
    for (int p = 0; p < parties; ++p)
      out.push_back(dp::party_noise_raw(ns, d, rngs[static_cast<std::size_t>(p)]));
  } else {
    ns.parties = 1;  // single full-variance draw by the trusted party
    if (rngs.empty())
      throw std::invalid_argument("trainer: need a noise stream");
    out.push_back(dp::party_noise_raw(ns, d, rngs[0]));
  }
  return out;
}

std::vector<std::mt19937_64> make_noise_rngs(const TrainConfig& cfg,
                                             int parties) {
  std::vector<std::mt19937_64> rngs;
  int n = cfg.noise.topology == dp::NoiseTopology::kDistributed ? parties : 1;
  for (int p = 0; p < n; ++p)
    rngs.emplace_back(cfg.seed ^ (0xC0FFEEull + 0x9e3779b97f4a7c15ULL *
                                                    static_cast<unsigned>(p + 1)));
  return rngs;
}

}  // namespace

void TrainConfig::validate(std::size_t N) const {
  if (N == 0) throw std::invalid_argument("TrainConfig: empty dataset");
  if (T < 0) throw std::invalid_argument("TrainConfig: T >= 0");
  if (batch < 1 || static_cast<std::size_t>(batch) > N)
    throw std::invalid_argument("TrainConfig: need 0 < q <= 1");
  if (!(C > 0)) throw std::invalid_argument("TrainConfig: C > 0");
  if (!std::isfinite(C) && !allow_unclipped)
    throw std::invalid_argument(
        "TrainConfig: C = infinity is a test-only sentinel");
  if (!std::isfinite(C) && noise.sigma > 0)
    throw std::invalid_argument("TrainConfig: noise needs a finite C");
  if (noise.sigma < 0) throw std::invalid_argument("TrainConfig: sigma >= 0");
  if (!(t < 0)) throw std::invalid_argument("TrainConfig: t < 0");
  if (!(c_step > 0)) throw std::invalid_argument("TrainConfig: c_step > 0");
  if (div_iterations < 1 || inv_sqrt_iterations < 1)
    throw std::invalid_argument("TrainConfig: iteration counts >= 1");
  if (exp_squarings < 1 || exp_squarings > 30)
    throw std::invalid_argument("TrainConfig: exp_squarings in [1, 30]");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every >= 1");
  if (!(optimizer.lr >= 0))
    throw std::invalid_argument("TrainConfig: lr >= 0");
}

std::vector<Eigen::Index> subsample(std::size_t N, double q, Subsampling mode,
                                    std::mt19937_64& rng) {
  if (!(q > 0 && q <= 1))
    throw std::invalid_argument("subsample: need 0 < q <= 1");
  std::vector<Eigen::Index> idx;
  if (mode == Subsampling::kPoisson) {
    std::bernoulli_distribution pick(q);
    for (std::size_t n = 0; n < N; ++n)
      if (pick(rng)) idx.push_back(static_cast<Eigen::Index>(n));
  } else {
    auto m = static_cast<std::size_t>(std::ceil(q * static_cast<double>(N)));
    std::vector<Eigen::Index> all(N);
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> u(i, N - 1);
      std::swap(all[i], all[u(rng)]);
    }
    idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
  }
  return idx;
}

StepResult mpc_gradient_step(const MixtureSpec& spec,
                             const Eigen::MatrixXd& Xbatch,
                             const ConstrainedTheta& theta,
                             const TrainConfig& cfg, mpc::MpcEngine* engine,
                             std::vector<std::mt19937_64>* noise_rngs) {
  const int P = spec.parties();
  const auto d = spec.con_dim();
  if (Xbatch.rows() == 0)
    throw std::invalid_argument("mpc_gradient_step: empty batch");
  if (engine && engine->parties() != P)
    throw std::invalid_argument("mpc_gradient_step: engine party mismatch");

  std::vector<PartyPrep> preps;
  for (int p = 0; p < P; ++p)
    preps.push_back(prep_party(spec, Xbatch, theta, p, cfg));
  std::vector<std::int64_t> pi_raw;
  for (int k = 0; k < spec.K; ++k) pi_raw.push_back(encode(theta.pi[k]).raw);

  const bool noisy = cfg.noise.sigma > 0;
  if (noisy && !noise_rngs)
    throw std::invalid_argument("mpc_gradient_step: noise streams required");

  FpTensor revealed;
  if (engine) {
    mpc::MpcBackend be(*engine);
    CircuitIn<mpc::MpcBackend> in;
    in.pi_raw = pi_raw;
    in.mat.resize(static_cast<std::size_t>(P));
    in.dcoords.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      for (const auto& m : preps[static_cast<std::size_t>(p)].mat)
        in.mat[static_cast<std::size_t>(p)].push_back(engine->share(m, p));
      for (const auto& [k, v] : preps[static_cast<std::size_t>(p)].dcoords)
        in.dcoords[static_cast<std::size_t>(p)].emplace_back(
            k, engine->share(v, p));
    }
    auto [sums, flag] = gradient_circuit(be, in, cfg);
    sums.push_back(flag);
    auto packed = engine->concat(sums);
    if (noisy) {
      auto contribs = noise_contributions(cfg, P, d, *noise_rngs);
      for (std::size_t s = 0; s < contribs.size(); ++s) {
        contribs[s].push_back(0);  // the flag coordinate stays exact
        packed = engine->add(
            packed, engine->inject_local(contribs[s], {d + 1},
                                         contribs.size() == 1
                                             ? 0
                                             : static_cast<int>(s)));
      }
    }
    revealed = engine->reveal(packed);
  } else {
    PlainBackend be;
    CircuitIn<PlainBackend> in;
    in.pi_raw = pi_raw;
    for (auto& prep : preps) {
      in.mat.push_back(prep.mat);
      in.dcoords.emplace_back();
      for (auto& [k, v] : prep.dcoords) in.dcoords.back().emplace_back(k, v);
    }
    auto [sums, flag] = gradient_circuit(be, in, cfg);
    revealed = FpTensor({d + 1});
    for (std::size_t i = 0; i < d; ++i) revealed.raw[i] = sums[i].raw[0];
    revealed.raw[d] = flag.raw[0];
    if (noisy) {
      auto contribs = noise_contributions(cfg, P, d, *noise_rngs);
      for (const auto& c : contribs)
        for (std::size_t i = 0; i < d; ++i)
          revealed.raw[i] = static_cast<std::int64_t>(
              static_cast<ring_t>(revealed.raw[i]) +
              static_cast<ring_t>(c[i]));
    }
  }

  StepResult res;
  res.grad.resize(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    res.grad[static_cast<Eigen::Index>(i)] =
        decode(FixedPoint::from_raw(revealed.raw[i]));
  res.zero_den_count = revealed.raw[d];
  return res;
}

namespace {

void opt_apply(const OptimizerConfig& opt, long step, Eigen::VectorXd& x,
               const Eigen::VectorXd& g, Eigen::VectorXd& m,
               Eigen::VectorXd& v) {
  if (opt.kind == OptimizerConfig::Kind::kSgd) {
    x += opt.lr * g;
    return;
  }
  m = opt.beta1 * m + (1 - opt.beta1) * g;
  v = opt.beta2 * v + (1 - opt.beta2) * g.cwiseProduct(g);
  double bc1 = 1 - std::pow(opt.beta1, static_cast<double>(step));
  double bc2 = 1 - std::pow(opt.beta2, static_cast<double>(step));
  x.array() +=
      opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
}

}  // namespace

void postprocess_and_update(const MixtureSpec& spec,
                            const model::ThetaSample& sample,
                            const Eigen::VectorXd& lik_con_grad,
                            const OptimizerConfig& opt,
                            model::VariationalParams& xi, OptState& st) {
  Eigen::VectorXd g_con =
      lik_con_grad + model::prior_grad_constrained(spec, sample.con);
  auto g = model::chain_to_xi(spec, sample, g_con);
  g.L.array() += 1.0 / xi.L.array();  // entropy term diag(1/l_ii)
  if (st.m_mu.size() == 0) {
    st.m_mu = Eigen::VectorXd::Zero(xi.mu.size());
    st.v_mu = Eigen::VectorXd::Zero(xi.mu.size());
    st.m_L = Eigen::VectorXd::Zero(xi.L.size());
    st.v_L = Eigen::VectorXd::Zero(xi.L.size());
  }
  ++st.step;
  opt_apply(opt, st.step, xi.mu, g.mu, st.m_mu, st.v_mu);
  opt_apply(opt, st.step, xi.L, g.L, st.m_L, st.v_L);
  xi.L = xi.L.cwiseMax(1e-6);
}

double mean_nll(const MixtureSpec& spec, const Eigen::MatrixXd& X,
                const ConstrainedTheta& theta) {
  if (X.rows() == 0) throw std::invalid_argument("mean_nll: empty data");
  return -model::log_likelihood(spec, X, theta) /
         static_cast<double>(X.rows());
}

void write_trace_jsonl(const std::vector<MetricsRecord>& trace,
                       std::ostream& os) {
  for (const auto& r : trace) {
    nlohmann::json j{{"iteration", r.iteration},
                     {"test_nll", r.test_nll},
                     {"wall_ms", r.wall_ms}};
    os << j.dump() << "\n";
  }
}

namespace {

// Shared driver for the partitioned and baseline loops; `grad_fn` returns the
// clipped+noised constrained-space batch sum for the given minibatch, or
// nullopt when the batch is empty.
template <class GradFn>
TrainResult train_loop(const TrainConfig& cfg, const MixtureSpec& spec,
                       const Eigen::MatrixXd& Xtrain,
                       const Eigen::MatrixXd& Xtest,
                       const model::VariationalParams& init, GradFn&& grad_fn) {
  spec.validate();
  init.validate(spec);
  const auto N = static_cast<std::size_t>(Xtrain.rows());
  cfg.validate(N);

  model::VariationalParams xi = init;
  OptState st;
  std::mt19937_64 rng_theta(cfg.seed);
  std::mt19937_64 rng_sub(cfg.seed ^ 0x5851f42d4c957f2dULL);
  const double q = cfg.q(N);

  TrainResult res;
  auto t0 = std::chrono::steady_clock::now();
  auto record = [&](long it) {
    if (Xtest.rows() == 0) return;
    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
    res.trace.push_back(
        {it, mean_nll(spec, Xtest, model::constrain(spec, xi.mu).con), ms});
  };
  record(0);

  for (int it = 0; it < cfg.T; ++it) {
    auto sample = model::sample_theta(spec, xi, rng_theta);
    auto idx = subsample(N, q, cfg.subsampling, rng_sub);
    Eigen::VectorXd lik =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.con_dim()));
    if (!idx.empty()) {
      Eigen::MatrixXd Xb(static_cast<Eigen::Index>(idx.size()),
                         Xtrain.cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        Xb.row(static_cast<Eigen::Index>(i)) = Xtrain.row(idx[i]);
      auto g = grad_fn(Xb, sample.con, res);
      lik = g * (static_cast<double>(N) / static_cast<double>(idx.size()));
    }
    postprocess_and_update(spec, sample, lik, cfg.optimizer, xi, st);
    if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.T) record(it + 1);
  }

  res.checkpoint.spec = spec;
  res.checkpoint.xi = xi;
  res.checkpoint.seed = cfg.seed;
  return res;
}

}  // namespace

TrainResult train_vpd(const TrainConfig& cfg, const MixtureSpec& spec,
                      const Eigen::MatrixXd& Xtrain,
                      const Eigen::MatrixXd& Xtest,
                      const model::VariationalParams& init,
                      mpc::MpcEngine* engine) {
  if (cfg.engine == Engine::kMpc && engine == nullptr)
    throw std::invalid_argument("train_vpd: MPC engine required");
  mpc::MpcEngine* eng = cfg.engine == Engine::kMpc ? engine : nullptr;
  auto noise_rngs = make_noise_rngs(cfg, spec.parties());
  auto grad_fn = [&](const Eigen::MatrixXd& Xb, const ConstrainedTheta& theta,
                     TrainResult& res) {
    if (eng) eng->mark("iteration");
    auto step = mpc_gradient_step(spec, Xb, theta, cfg, eng, &noise_rngs);
    if (step.zero_den_count > 0) {
      ++res.zero_den_iterations;
      if (cfg.normalizer)
        throw std::runtime_error(
            "train_vpd: zero denominator with the normalizer active; "
            "lower t or raise exp_squarings");
    }
    return step.grad;
  };
  return train_loop(cfg, spec, Xtrain, Xtest, init, grad_fn);
}

TrainResult train_plain(const TrainConfig& cfg, const MixtureSpec& spec,
                        const Eigen::MatrixXd& Xtrain,
                        const Eigen::MatrixXd& Xtest,
                        const model::VariationalParams& init) {
  std::mt19937_64 rng_noise(cfg.seed ^ 0x2545f4914f6cdd1dULL);
  auto grad_fn = [&](const Eigen::MatrixXd& Xb, const ConstrainedTheta& theta,
                     TrainResult&) {
    Eigen::MatrixXd G = model::likelihood_grad_per_example(spec, Xb, theta);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(G.cols());
    for (Eigen::Index n = 0; n < G.rows(); ++n) {
      double nr = G.row(n).norm();
      double scale = std::isfinite(cfg.C) && nr > cfg.C ? cfg.C / nr : 1.0;
      s += scale * G.row(n).transpose();
    }
    if (cfg.noise.sigma > 0) {
      std::normal_distribution<double> zeta(0.0, cfg.noise.sigma * cfg.C);
      for (Eigen::Index i = 0; i < s.size(); ++i) s[i] += zeta(rng_noise);
    }
    return s;
  };
  return train_loop(cfg, spec, Xtrain, Xtest, init, grad_fn);
}

}  // namespace vpdmix::train
