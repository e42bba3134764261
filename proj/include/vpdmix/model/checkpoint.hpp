#pragma once

// Versioned model checkpoint: mixture spec, variational parameters, transform
// identifiers, seed lineage, and an optional echo of the producing config.

#include <cstdint>
#include <string>

#include "vpdmix/model/mixture.hpp"

namespace vpdmix::model {

struct Checkpoint {
  MixtureSpec spec;
  VariationalParams xi;
  std::uint64_t seed = 0;
  std::string transforms = "stick-breaking/exp";
  std::string config_echo;  // provenance: the producing configuration
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vpdmix::model
