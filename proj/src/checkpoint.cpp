#include "vpdmix/model/checkpoint.hpp"

#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace vpdmix::model {

namespace {
using nlohmann::json;
constexpr const char* kVersion = "vpdmix-checkpoint-v1";
}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ck.spec.validate();
  ck.xi.validate(ck.spec);
  json j;
  j["version"] = kVersion;
  j["transforms"] = ck.transforms;
  j["seed"] = ck.seed;
  j["config_echo"] = ck.config_echo;
  j["K"] = ck.spec.K;
  j["priors"] = {{"alpha", ck.spec.priors.alpha},
                 {"beta", ck.spec.priors.beta},
                 {"gamma_shape", ck.spec.priors.gamma_shape},
                 {"gamma_rate", ck.spec.priors.gamma_rate}};
  j["features"] = json::array();
  for (const auto& f : ck.spec.features)
    j["features"].push_back(
        {{"name", f.name},
         {"kind", f.kind == FeatureKind::kContinuousBeta ? "continuous-beta"
                                                         : "categorical"},
         {"n_categories", f.n_categories},
         {"party", f.party}});
  j["mu"] = std::vector<double>(ck.xi.mu.data(), ck.xi.mu.data() + ck.xi.mu.size());
  j["L"] = std::vector<double>(ck.xi.L.data(), ck.xi.L.data() + ck.xi.L.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  json j = json::parse(in);
  if (j.value("version", "") != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  Checkpoint ck;
  ck.transforms = j.value("transforms", "");
  ck.seed = j.value("seed", std::uint64_t{0});
  ck.config_echo = j.value("config_echo", "");
  ck.spec.K = j.at("K").get<int>();
  const auto& pr = j.at("priors");
  ck.spec.priors = {pr.at("alpha"), pr.at("beta"), pr.at("gamma_shape"),
                    pr.at("gamma_rate")};
  for (const auto& jf : j.at("features")) {
    FeatureSpec f;
    f.name = jf.at("name").get<std::string>();
    f.kind = jf.at("kind").get<std::string>() == "continuous-beta"
                 ? FeatureKind::kContinuousBeta
                 : FeatureKind::kCategorical;
    f.n_categories = jf.at("n_categories").get<int>();
    f.party = jf.at("party").get<int>();
    ck.spec.features.push_back(std::move(f));
  }
  auto mu = j.at("mu").get<std::vector<double>>();
  auto L = j.at("L").get<std::vector<double>>();
  ck.xi.mu = Eigen::Map<Eigen::VectorXd>(mu.data(),
                                         static_cast<Eigen::Index>(mu.size()));
  ck.xi.L = Eigen::Map<Eigen::VectorXd>(L.data(),
                                        static_cast<Eigen::Index>(L.size()));
  ck.spec.validate();
  ck.xi.validate(ck.spec);
  return ck;
}

}  // namespace vpdmix::model
