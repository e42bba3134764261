#pragma once

// Training orchestration: subsampling, party-local block preparation, the
// shared fixed-point gradient circuit (run under MPC or as a bit-exact
// plaintext replay), clipping, distributed noise, the single per-iteration
// reveal, and the public post-processing / optimizer step.  Also the
// non-partitioned floating-point baseline.
//
// Per-iteration update, in the paper's form: the revealed constrained-space
// likelihood gradient plus the public prior gradient are chained through the
// transform Jacobian to (mu, L); L additionally receives the entropy term
// diag(1/l_ii).  The constrain transform's own log-det term is not part of
// the update (the objective carries log|det L| instead); see the design notes.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "vpdmix/dp/noise.hpp"
#include "vpdmix/model/checkpoint.hpp"
#include "vpdmix/model/mixture.hpp"
#include "vpdmix/mpc/engine.hpp"

namespace vpdmix::train {

enum class Subsampling { kPoisson, kFixedSize };

// kMpc runs the circuit on secret shares; kPlainFixedPoint replays the
// identical circuit on plaintext ring tensors (same values bit for bit).
enum class Engine { kMpc, kPlainFixedPoint };

struct OptimizerConfig {
  enum class Kind { kAdam, kSgd };
  Kind kind = Kind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int T = 1000;
  int batch = 100;  // expected minibatch size; q = batch / N
  double C = 1.0;   // clipping threshold
  dp::NoiseSpec noise;
  OptimizerConfig optimizer;
  Subsampling subsampling = Subsampling::kPoisson;
  std::uint64_t seed = 0;

  bool normalizer = true;
  double t = -20.0;
  double c_step = 0.01;

  int div_iterations = 40;
  int exp_squarings = 16;
  int inv_sqrt_iterations = 30;

  Engine engine = Engine::kMpc;
  int eval_every = 100;  // test NLL cadence (iterations)

  // Test-only sentinel: C = infinity disables clipping (and DP with it).
  // Production validation rejects it unless this flag is set.
  bool allow_unclipped = false;

  double q(std::size_t N) const { return double(batch) / double(N); }
  void validate(std::size_t N) const;
};

struct StepResult {
  Eigen::VectorXd grad;  // decoded clipped+noised batch sum, canonical layout
  std::int64_t zero_den_count = 0;  // aggregate flag, never per-example
};

// One Alg.-1 gradient assembly on an already-drawn minibatch.  `engine`
// null means the plaintext fixed-point replay.  `noise_rngs` holds one
// stream per party (distributed topology) or a single dealer stream;
// ignored when sigma == 0.
StepResult mpc_gradient_step(const model::MixtureSpec& spec,
                             const Eigen::MatrixXd& Xbatch,
                             const model::ConstrainedTheta& theta,
                             const TrainConfig& cfg, mpc::MpcEngine* engine,
                             std::vector<std::mt19937_64>* noise_rngs);

std::vector<Eigen::Index> subsample(std::size_t N, double q, Subsampling mode,
                                    std::mt19937_64& rng);

struct OptState {
  Eigen::VectorXd m_mu, v_mu, m_L, v_L;
  long step = 0;
};

// Public post-processing: decode-side chain of the revealed likelihood
// gradient (already scaled to full-data units) through the Jacobian, plus
// prior and entropy terms, then one optimizer ascent step on (mu, L).
void postprocess_and_update(const model::MixtureSpec& spec,
                            const model::ThetaSample& sample,
                            const Eigen::VectorXd& lik_con_grad,
                            const OptimizerConfig& opt,
                            model::VariationalParams& xi, OptState& st);

struct MetricsRecord {
  long iteration = 0;
  double test_nll = 0;  // mean per example, at the posterior mean
  double wall_ms = 0;
};

struct TrainResult {
  model::Checkpoint checkpoint;
  std::vector<MetricsRecord> trace;
  long zero_den_iterations = 0;  // iterations whose aggregate flag fired
};

void write_trace_jsonl(const std::vector<MetricsRecord>& trace,
                       std::ostream& os);

// Mean test NLL per example at theta.
double mean_nll(const model::MixtureSpec& spec, const Eigen::MatrixXd& X,
                const model::ConstrainedTheta& theta);

// Vertically partitioned training.  X columns are in declaration order;
// party blocks are addressed through the spec.  `engine` must outlive the
// call when cfg.engine == kMpc (pass null for the plaintext replay).
TrainResult train_vpd(const TrainConfig& cfg, const model::MixtureSpec& spec,
                      const Eigen::MatrixXd& Xtrain,
                      const Eigen::MatrixXd& Xtest,
                      const model::VariationalParams& init,
                      mpc::MpcEngine* engine);

// Non-partitioned floating-point DPVI baseline, identical RNG stream layout
// so matched seeds draw the same minibatches and theta samples.
TrainResult train_plain(const TrainConfig& cfg, const model::MixtureSpec& spec,
                        const Eigen::MatrixXd& Xtrain,
                        const Eigen::MatrixXd& Xtest,
                        const model::VariationalParams& init);

}  // namespace vpdmix::train
