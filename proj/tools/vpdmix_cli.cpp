// vpdmix: batch CLI over the library. Subcommands: partition, train,
// account, generate, eval.  Exit codes: 0 success, 1 validation error,
// 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "vpdmix/accountant.hpp"
#include "vpdmix/data/pipeline.hpp"
#include "vpdmix/model/checkpoint.hpp"
#include "vpdmix/train/trainer.hpp"

namespace {

using nlohmann::json;
using namespace vpdmix;

int verbosity() {
  const char* env = std::getenv("VPDMIX_LOG");
  return env ? std::atoi(env) : 0;
}

void logv(const std::string& msg) {
  if (verbosity() > 0) std::cerr << "[vpdmix] " << msg << "\n";
}

// ---- partition -------------------------------------------------------------

int cmd_partition(const std::string& input, const std::string& schema_path,
                  const std::string& out_dir) {
  auto schema = data::Schema::load(schema_path);
  auto ds = data::ingest(input, schema);
  auto pd = data::partition(ds, schema);
  std::filesystem::create_directories(out_dir);
  for (std::size_t p = 0; p < pd.blocks.size(); ++p) {
    std::string path = out_dir + "/party" + std::to_string(p) + ".csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("partition: cannot write " + path);
    const auto& cols = pd.block_columns[p];
    for (std::size_t c = 0; c < cols.size(); ++c)
      out << (c ? "," : "") << schema.columns[cols[c]].feature.name;
    out << "\n";
    out.precision(10);
    for (Eigen::Index n = 0; n < pd.blocks[p].rows(); ++n) {
      for (Eigen::Index c = 0; c < pd.blocks[p].cols(); ++c)
        out << (c ? "," : "") << pd.blocks[p](n, c);
      out << "\n";
    }
    std::cout << path << "\n";
  }
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainJob {
  std::string schema_path;
  std::string data_path;
  int K = 2;
  model::PriorSpec priors;
  double test_fraction = 0.0;
  train::TrainConfig cfg;
  bool plain = false;  // non-partitioned baseline
};

TrainJob load_train_job(const std::string& path, const std::string& data_dir) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("train: cannot open config " + path);
  json j = json::parse(in);
  TrainJob job;
  auto resolve = [&](std::string p) {
    return (!data_dir.empty() && !p.empty() && p.front() != '/')
               ? data_dir + "/" + p
               : p;
  };
  job.schema_path = resolve(j.at("schema").get<std::string>());
  job.data_path = resolve(j.at("data").get<std::string>());
  job.K = j.value("K", 2);
  if (j.contains("priors")) {
    const auto& pr = j["priors"];
    job.priors.alpha = pr.value("alpha", 1.0);
    job.priors.beta = pr.value("beta", 1.0);
    job.priors.gamma_shape = pr.value("gamma_shape", 1.0);
    job.priors.gamma_rate = pr.value("gamma_rate", 1.0);
  }
  job.test_fraction = j.value("test_fraction", 0.0);
  job.plain = j.value("plain", false);

  auto& c = job.cfg;
  c.T = j.value("T", c.T);
  c.batch = j.value("batch", c.batch);
  c.C = j.value("C", c.C);
  c.noise.sigma = j.value("sigma", 0.0);
  c.noise.topology = j.value("topology", std::string("distributed")) == "trusted"
                         ? dp::NoiseTopology::kTrustedThirdParty
                         : dp::NoiseTopology::kDistributed;
  c.seed = j.value("seed", std::uint64_t{0});
  c.normalizer = j.value("normalizer", true);
  c.t = j.value("t", c.t);
  c.c_step = j.value("c_step", c.c_step);
  c.div_iterations = j.value("div_iterations", c.div_iterations);
  c.exp_squarings = j.value("exp_squarings", c.exp_squarings);
  c.inv_sqrt_iterations = j.value("inv_sqrt_iterations", c.inv_sqrt_iterations);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.engine = j.value("engine", std::string("mpc")) == "plain-fixed-point"
                 ? train::Engine::kPlainFixedPoint
                 : train::Engine::kMpc;
  c.subsampling = j.value("subsampling", std::string("poisson")) == "fixed-size"
                      ? train::Subsampling::kFixedSize
                      : train::Subsampling::kPoisson;
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.kind = o.value("kind", std::string("adam")) == "sgd"
                           ? train::OptimizerConfig::Kind::kSgd
                           : train::OptimizerConfig::Kind::kAdam;
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
  }
  return job;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out, bool no_normalizer, bool plain_flag,
              std::optional<std::uint64_t> seed_override,
              const std::string& transcript_path) {
  auto job = load_train_job(config_path, data_dir);
  if (no_normalizer) job.cfg.normalizer = false;
  if (plain_flag) job.plain = true;
  if (seed_override) job.cfg.seed = *seed_override;

  auto schema = data::Schema::load(job.schema_path);
  auto ds = data::ingest(job.data_path, schema);
  auto [tr, te] = data::split(ds, job.test_fraction, job.cfg.seed);

  model::MixtureSpec spec;
  spec.K = job.K;
  spec.features = schema.feature_specs();
  spec.priors = job.priors;
  spec.validate();

  model::VariationalParams init;
  init.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.uncon_dim()));
  init.L = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(spec.uncon_dim()), 0.1);

  logv("training: N=" + std::to_string(tr.X.rows()) +
       " T=" + std::to_string(job.cfg.T));
  train::TrainResult res;
  std::unique_ptr<mpc::MpcEngine> engine;
  if (job.plain) {
    res = train::train_plain(job.cfg, spec, tr.X, te.X, init);
  } else {
    if (job.cfg.engine == train::Engine::kMpc)
      engine = std::make_unique<mpc::MpcEngine>(spec.parties(), job.cfg.seed);
    res = train::train_vpd(job.cfg, spec, tr.X, te.X, init, engine.get());
  }

  std::ifstream echo_in(config_path);
  std::stringstream echo;
  echo << echo_in.rdbuf();
  res.checkpoint.config_echo = echo.str();
  model::save_checkpoint(out, res.checkpoint);
  {
    std::ofstream tout(out + ".trace.jsonl");
    train::write_trace_jsonl(res.trace, tout);
  }
  if (!transcript_path.empty() && engine) {
    std::ofstream os(transcript_path);
    engine->transcript().write_jsonl(os);
  }
  if (!res.trace.empty())
    std::cout << "final test NLL: " << res.trace.back().test_nll << "\n";
  std::cout << "checkpoint: " << out << "\n";
  return 0;
}

// ---- account ---------------------------------------------------------------

int cmd_account(double sigma, double q, long iters, double delta, bool party,
                bool known_indices, int parties, int colluding,
                const std::string& topology) {
  acc::TrainPrivacy cfg;
  cfg.sigma = sigma;
  cfg.sampling_ratio = q;
  cfg.iterations = iters;
  cfg.delta = delta;
  cfg.parties = parties;
  cfg.topology = topology == "trusted" ? dp::NoiseTopology::kTrustedThirdParty
                                       : dp::NoiseTopology::kDistributed;
  acc::EpsilonReport rep = party ? acc::party_epsilon(cfg, known_indices, colluding)
                                 : acc::analyst_epsilon(cfg);
  std::cout << "view: " << (party ? "party" : "analyst")
            << (party && known_indices ? " (known indices)" : "") << "\n"
            << "epsilon: " << rep.epsilon << "\n"
            << "delta: " << delta << "\n"
            << "best RDP order: " << rep.best_order << "\n"
            << "method: " << rep.method << "\n";
  if (!rep.looseness_note.empty())
    std::cout << "note: " << rep.looseness_note << "\n";
  return 0;
}

// ---- generate / eval -------------------------------------------------------

int cmd_generate(const std::string& checkpoint_path,
                 const std::string& schema_path, long n,
                 const std::string& out, std::uint64_t seed) {
  auto ck = model::load_checkpoint(checkpoint_path);
  auto schema = data::Schema::load(schema_path);
  auto theta = model::constrain(ck.spec, ck.xi.mu);
  std::mt19937_64 rng(seed);
  auto samples =
      model::sample_synthetic(ck.spec, theta.con, static_cast<int>(n), rng);
  data::export_synthetic(samples, schema, out);
  std::cout << out << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& schema_path,
             const std::string& test_path) {
  auto ck = model::load_checkpoint(checkpoint_path);
  auto schema = data::Schema::load(schema_path);
  auto ds = data::ingest(test_path, schema);
  auto theta = model::constrain(ck.spec, ck.xi.mu);
  double nll = train::mean_nll(ck.spec, ds.X, theta.con);
  std::cout.precision(12);
  std::cout << "test NLL: " << nll << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DP mixture training over vertically partitioned data"};
  app.require_subcommand(1);

  // partition
  std::string in_path, schema_path, out_dir;
  auto* part = app.add_subcommand("partition", "split a CSV into party blocks");
  part->add_option("--input", in_path)->required();
  part->add_option("--schema", schema_path)->required();
  part->add_option("--out-dir", out_dir)->required();

  // train
  std::string config_path, data_dir, train_out = "checkpoint.json";
  std::string transcript_path;
  bool no_normalizer = false, plain = false;
  std::optional<std::uint64_t> seed_override;
  std::uint64_t seed_opt = 0;
  auto* train_cmd = app.add_subcommand("train", "run Alg. 1 training");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--data-dir", data_dir);
  train_cmd->add_option("--out", train_out);
  train_cmd->add_flag("--no-normalizer", no_normalizer);
  train_cmd->add_flag("--plain", plain);
  train_cmd->add_option("--transcript", transcript_path);
  auto* seed_flag = train_cmd->add_option("--seed", seed_opt);

  // account
  double sigma = 1.0, q = 1.0, delta = 1e-5;
  long iters = 1;
  bool party = false, known = false;
  int parties = 2, colluding = 1;
  // full-variance view by default; "distributed" scales variance by (P-c)/P
  std::string topology = "trusted";
  auto* acct = app.add_subcommand("account", "privacy accounting oracle");
  acct->add_option("--sigma", sigma)->required();
  acct->add_option("--q", q)->required();
  acct->add_option("--iters", iters)->required();
  acct->add_option("--delta", delta);
  acct->add_flag("--party", party);
  acct->add_flag("--known-indices", known);
  acct->add_option("--parties", parties);
  acct->add_option("--colluding", colluding);
  acct->add_option("--topology", topology);

  // generate
  std::string ck_path, gen_out = "synthetic.csv";
  long n_gen = 0;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "sample synthetic data");
  gen->add_option("--checkpoint", ck_path)->required();
  gen->add_option("--schema", schema_path);
  gen->add_option("--n", n_gen)->required();
  gen->add_option("--out", gen_out);
  gen->add_option("--seed", gen_seed);

  // eval
  std::string eval_ck, eval_test;
  auto* ev = app.add_subcommand("eval", "test NLL of a checkpoint");
  ev->add_option("--checkpoint", eval_ck)->required();
  ev->add_option("--schema", schema_path);
  ev->add_option("--test", eval_test)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*part) return cmd_partition(in_path, schema_path, out_dir);
    if (*train_cmd) {
      if (seed_flag->count()) seed_override = seed_opt;
      return cmd_train(config_path, data_dir, train_out, no_normalizer, plain,
                       seed_override, transcript_path);
    }
    if (*acct)
      return cmd_account(sigma, q, iters, delta, party, known, parties,
                         colluding, topology);
    if (*gen) return cmd_generate(ck_path, schema_path, n_gen, gen_out, gen_seed);
    if (*ev) return cmd_eval(eval_ck, schema_path, eval_test);
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
