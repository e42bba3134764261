#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "vpdmix/train/trainer.hpp"

using namespace vpdmix;
using namespace vpdmix::train;

namespace {

model::MixtureSpec two_party_spec(int K) {
  model::MixtureSpec spec;
  spec.K = K;
  spec.features = {
      {"x0", model::FeatureKind::kContinuousBeta, 0, 0},
      {"c0", model::FeatureKind::kCategorical, 3, 0},
      {"x1", model::FeatureKind::kContinuousBeta, 0, 1},
      {"c1", model::FeatureKind::kCategorical, 4, 1},
  };
  return spec;
}

model::MixtureSpec categorical_spec(int K, int per_party, int cats) {
  model::MixtureSpec spec;
  spec.K = K;
  for (int p = 0; p < 2; ++p)
    for (int f = 0; f < per_party; ++f)
      spec.features.push_back({"c" + std::to_string(p) + std::to_string(f),
                               model::FeatureKind::kCategorical, cats, p});
  return spec;
}

// Draws a benign dataset from a mildly random theta so densities stay far
// from the truncation threshold.
Eigen::MatrixXd benign_data(const model::MixtureSpec& spec, int n,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 0.3);
  Eigen::VectorXd u(spec.uncon_dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = d(rng);
  auto theta = model::constrain(spec, u);
  return model::sample_synthetic(spec, theta.con, n, rng);
}

model::ThetaSample mild_theta(const model::MixtureSpec& spec,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 0.2);
  Eigen::VectorXd u(spec.uncon_dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = d(rng);
  return model::constrain(spec, u);
}

TrainConfig quiet_cfg() {
  TrainConfig cfg;
  cfg.noise.sigma = 0;
  cfg.t = -8;
  cfg.exp_squarings = 16;
  cfg.div_iterations = 40;
  return cfg;
}

}  // namespace

TEST_CASE("subsample modes") {
  std::mt19937_64 rng(7);
  auto all = subsample(20, 1.0, Subsampling::kPoisson, rng);
  CHECK(all.size() == 20);
  CHECK_THROWS_AS(subsample(20, 0.0, Subsampling::kPoisson, rng),
                  std::invalid_argument);

  // Poisson mean size over many draws; 4-sigma band on the mean
  const std::size_t N = 500;
  const double q = 0.1;
  double total = 0;
  for (int r = 0; r < 10000; ++r)
    total += static_cast<double>(subsample(N, q, Subsampling::kPoisson, rng).size());
  double mean = total / 10000;
  CHECK(std::abs(mean - q * N) < 4 * std::sqrt(q * N * (1 - q) / 10000));

  auto fixed = subsample(N, q, Subsampling::kFixedSize, rng);
  CHECK(fixed.size() == 50);
  std::sort(fixed.begin(), fixed.end());
  CHECK(std::adjacent_find(fixed.begin(), fixed.end()) == fixed.end());
}

TEST_CASE("K=1 gives GP = 1/pi exactly up to fixed point") {
  auto spec = two_party_spec(1);
  auto X = benign_data(spec, 16, 3);
  auto theta = mild_theta(spec, 4);
  auto cfg = quiet_cfg();
  cfg.C = std::numeric_limits<double>::infinity();
  cfg.allow_unclipped = true;
  auto res = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  CHECK(res.zero_den_count == 0);
  CHECK(res.grad[0] / 16.0 == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("sigma=0 unclipped step matches floating-point reference") {
  auto spec = two_party_spec(3);
  auto X = benign_data(spec, 32, 11);
  auto theta = mild_theta(spec, 12);
  auto cfg = quiet_cfg();
  cfg.C = std::numeric_limits<double>::infinity();
  cfg.allow_unclipped = true;
  auto res = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  Eigen::VectorXd ref =
      model::likelihood_grad_per_example(spec, X, theta.con).colwise().sum();
  CHECK((res.grad - ref).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("clipping halves a 2C-norm example and keeps small ones") {
  auto spec = two_party_spec(2);
  auto X = benign_data(spec, 1, 21);
  auto theta = mild_theta(spec, 22);
  auto cfg = quiet_cfg();
  cfg.C = std::numeric_limits<double>::infinity();
  cfg.allow_unclipped = true;
  auto raw = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  double nrm = raw.grad.norm();
  REQUIRE(nrm > 0.1);

  auto cfg2 = quiet_cfg();
  cfg2.C = nrm / 2;
  auto halved = mpc_gradient_step(spec, X, theta.con, cfg2, nullptr, nullptr);
  CHECK((halved.grad - 0.5 * raw.grad).cwiseAbs().maxCoeff() < 1e-4);

  auto cfg3 = quiet_cfg();
  cfg3.C = 2 * nrm;
  auto kept = mpc_gradient_step(spec, X, theta.con, cfg3, nullptr, nullptr);
  CHECK((kept.grad - raw.grad).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("MPC step equals the plaintext fixed-point replay bit for bit") {
  auto spec = two_party_spec(2);
  auto X = benign_data(spec, 4, 31);
  auto theta = mild_theta(spec, 32);
  auto cfg = quiet_cfg();
  cfg.C = 1.0;
  mpc::MpcEngine eng(2, 99);
  auto shared = mpc_gradient_step(spec, X, theta.con, cfg, &eng, nullptr);
  auto plain = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  CHECK(shared.grad == plain.grad);
  CHECK(shared.zero_den_count == plain.zero_den_count);
  CHECK(eng.transcript().count_tag("reveal-output") == 2);  // one per party
}

TEST_CASE("distributed noise is identical across engines at fixed streams") {
  auto spec = two_party_spec(2);
  auto X = benign_data(spec, 4, 41);
  auto theta = mild_theta(spec, 42);
  auto cfg = quiet_cfg();
  cfg.C = 1.0;
  cfg.noise.sigma = 1.5;
  cfg.noise.topology = dp::NoiseTopology::kDistributed;
  auto streams = [] {
    return std::vector<std::mt19937_64>{std::mt19937_64(1), std::mt19937_64(2)};
  };
  mpc::MpcEngine eng(2, 99);
  auto s1 = streams();
  auto shared = mpc_gradient_step(spec, X, theta.con, cfg, &eng, &s1);
  auto s2 = streams();
  auto plain = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, &s2);
  CHECK(shared.grad == plain.grad);
  auto s3 = streams();
  auto quiet_cfg2 = cfg;
  quiet_cfg2.noise.sigma = 0;
  auto noiseless = mpc_gradient_step(spec, X, theta.con, quiet_cfg2, nullptr, &s3);
  CHECK((shared.grad - noiseless.grad).cwiseAbs().maxCoeff() > 0);  // lands
}

TEST_CASE("normalizer leaves the gradient invariant when dens are healthy") {
  auto spec = two_party_spec(2);
  auto X = benign_data(spec, 8, 51);
  auto theta = mild_theta(spec, 52);
  auto cfg = quiet_cfg();
  cfg.C = 1.0;
  cfg.t = -1;  // forces nonzero c on most examples
  cfg.exp_squarings = 18;
  auto with = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  auto cfg2 = cfg;
  cfg2.normalizer = false;
  auto without = mpc_gradient_step(spec, X, theta.con, cfg2, nullptr, nullptr);
  REQUIRE(without.zero_den_count == 0);
  CHECK((with.grad - without.grad).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("zero denominators are an aggregate count, fatal with normalizer") {
  // per-party densities around e^-22 truncate jointly even after a t=-20
  // lift per party fails to keep the product on the grid
  auto spec = categorical_spec(2, 4, 64);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(4, 8);
  std::mt19937_64 rng(61);
  std::normal_distribution<double> d(0, 0.1);
  Eigen::VectorXd u(spec.uncon_dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = d(rng);
  auto theta = model::constrain(spec, u);
  // uniform-ish omegas: per-feature log density ~ -log 64, 4 features per
  // party ~ -16.6 per party, joint ~ -33 -> truncates without normalizer
  auto cfg = quiet_cfg();
  cfg.C = 1.0;
  cfg.normalizer = false;
  auto res = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  CHECK(res.zero_den_count == 4);
  CHECK(res.grad.cwiseAbs().maxCoeff() == 0.0);

  // with the normalizer at t=-8 the same batch is healthy
  cfg.normalizer = true;
  auto ok = mpc_gradient_step(spec, X, theta.con, cfg, nullptr, nullptr);
  CHECK(ok.zero_den_count == 0);
  CHECK(ok.grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("postprocess: zero gradient, flat priors, L=I moves only L") {
  auto spec = categorical_spec(2, 1, 3);
  model::VariationalParams xi;
  xi.mu = Eigen::VectorXd::Zero(spec.uncon_dim());
  xi.L = Eigen::VectorXd::Ones(spec.uncon_dim());
  std::mt19937_64 rng(5);
  auto sample = model::sample_theta(spec, xi, rng);
  OptState st;
  OptimizerConfig opt;
  opt.kind = OptimizerConfig::Kind::kSgd;
  opt.lr = 0.25;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.con_dim());
  postprocess_and_update(spec, sample, zero, opt, xi, st);
  CHECK(xi.mu.cwiseAbs().maxCoeff() == 0.0);  // Dirichlet(1) prior is flat
  CHECK((xi.L.array() - 1.25).abs().maxCoeff() < 1e-12);  // Delta_L = 1

  // lr = 0 leaves xi untouched even with a nonzero gradient
  opt.lr = 0;
  Eigen::VectorXd g = Eigen::VectorXd::Ones(spec.con_dim());
  auto before = xi;
  postprocess_and_update(spec, sample, g, opt, xi, st);
  CHECK(xi.mu == before.mu);
  CHECK(xi.L == before.L);
}

TEST_CASE("one full vpd step matches the plain baseline at sigma=0") {
  auto spec = two_party_spec(2);
  auto X = benign_data(spec, 40, 71);
  auto cfg = quiet_cfg();
  cfg.T = 1;
  cfg.batch = 40;
  cfg.C = 1.0;
  cfg.seed = 9;
  cfg.engine = Engine::kPlainFixedPoint;
  model::VariationalParams init;
  init.mu = Eigen::VectorXd::Zero(spec.uncon_dim());
  init.L = Eigen::VectorXd::Constant(spec.uncon_dim(), 0.1);
  auto vpd = train_vpd(cfg, spec, X, Eigen::MatrixXd(), init, nullptr);
  auto plain = train_plain(cfg, spec, X, Eigen::MatrixXd(), init);
  CHECK((vpd.checkpoint.xi.mu - plain.checkpoint.xi.mu).cwiseAbs().maxCoeff() <
        1e-3);
  CHECK((vpd.checkpoint.xi.L - plain.checkpoint.xi.L).cwiseAbs().maxCoeff() <
        1e-3);
}

TEST_CASE("T=1 smoke run, checkpoint round trip, trace and determinism") {
  auto spec = two_party_spec(2);
  auto X = benign_data(spec, 30, 81);
  auto Xtest = benign_data(spec, 10, 82);
  auto cfg = quiet_cfg();
  cfg.T = 3;
  cfg.batch = 10;
  cfg.C = 1.0;
  cfg.seed = 17;
  cfg.eval_every = 1;
  cfg.engine = Engine::kPlainFixedPoint;
  model::VariationalParams init;
  init.mu = Eigen::VectorXd::Zero(spec.uncon_dim());
  init.L = Eigen::VectorXd::Constant(spec.uncon_dim(), 0.1);
  auto res = train_vpd(cfg, spec, X, Xtest, init, nullptr);
  CHECK(res.trace.size() == 4);  // initial record plus one per iteration
  CHECK(res.trace.front().iteration == 0);
  CHECK(res.trace.back().iteration == 3);

  std::ostringstream os;
  write_trace_jsonl(res.trace, os);
  CHECK(os.str().find("\"test_nll\"") != std::string::npos);

  model::save_checkpoint("trainer_ck_tmp.json", res.checkpoint);
  auto back = model::load_checkpoint("trainer_ck_tmp.json");
  std::remove("trainer_ck_tmp.json");
  CHECK(back.xi.mu == res.checkpoint.xi.mu);
  CHECK(back.seed == 17);

  auto res2 = train_vpd(cfg, spec, X, Xtest, init, nullptr);
  CHECK(res2.checkpoint.xi.mu == res.checkpoint.xi.mu);
  for (std::size_t i = 0; i < res.trace.size(); ++i)
    CHECK(res2.trace[i].test_nll == res.trace[i].test_nll);
}

TEST_CASE("config validation") {
  auto cfg = quiet_cfg();
  cfg.batch = 200;
  CHECK_THROWS_AS(cfg.validate(100), std::invalid_argument);
  cfg = quiet_cfg();
  cfg.C = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(cfg.validate(100), std::invalid_argument);
  cfg.allow_unclipped = true;
  CHECK_NOTHROW(cfg.validate(100));
  cfg.noise.sigma = 1.0;
  CHECK_THROWS_AS(cfg.validate(100), std::invalid_argument);
  cfg = quiet_cfg();
  cfg.t = 0.5;
  CHECK_THROWS_AS(cfg.validate(100), std::invalid_argument);
}
