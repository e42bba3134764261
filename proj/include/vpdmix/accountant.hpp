#pragma once

// RDP accountant for the (optionally distributed) subsampled Gaussian
// mechanism.  Answers the analyst bound, the per-party bounds with hidden or
// known subsampling indices, the epoch-based alternative, and the
// collusion-adjusted variance view.
//
// Effective noise is sigma_eff = sigma * sqrt(variance_factor): factor 1 for
// the analyst, (P - c)/P for a party view when c parties collude in the
// distributed topology.  The discrete Gaussian is accounted through the
// continuous RDP curve, which is only defensible for sigma_eff >= 0.5; below
// that the accountant refuses.

#include <string>
#include <vector>

#include "vpdmix/dp/noise.hpp"

namespace vpdmix::acc {

enum class MechanismKind { kDiscreteGaussian, kDistributedDiscreteGaussian };
enum class Adjacency { kAddRemove, kSubstitute };

struct MechanismDescriptor {
  MechanismKind kind = MechanismKind::kDiscreteGaussian;
  double sigma = 1.0;
  int parties = 1;
  double variance_factor = 1.0;  // in (0, 1]

  double sigma_eff() const;
};

struct AccountantQuery {
  double delta = 1e-5;
  double Q = 1.0;  // effective sampling ratio: q (hidden indices) or 1 (known)
  long T = 1;      // compositions
  MechanismDescriptor mechanism;
  Adjacency adjacency = Adjacency::kAddRemove;
};

struct EpsilonReport {
  double epsilon = 0.0;
  double best_order = 0.0;
  std::string method = "rdp";
  std::string looseness_note;
};

// Training-side privacy parameters, decoupled from the trainer's full config.
struct TrainPrivacy {
  double sigma = 1.0;
  double sampling_ratio = 1.0;  // q = batch / N
  long iterations = 1;          // T
  double delta = 1e-5;
  int parties = 1;
  dp::NoiseTopology topology = dp::NoiseTopology::kTrustedThirdParty;
};

// RDP curve helpers (exposed so tests can build independent oracles).
double rdp_gaussian(double alpha, double sigma);
// Poisson-subsampled Gaussian RDP at integer order, log-domain binomial sum.
double rdp_subsampled_gaussian(long alpha, double q, double sigma);
// (epsilon, delta) conversion at a given order (the tightened form with the
// log((alpha-1)/alpha) and log(alpha) terms).
double rdp_to_epsilon(double rdp, double alpha, double delta);
// The order grid the oracle optimizes over: integers 2..512 when Q < 1,
// plus orders log-spaced in (alpha - 1) down to 1.0001 when Q = 1.
std::vector<double> rdp_order_grid(double Q);

EpsilonReport oracle(const AccountantQuery& query);

EpsilonReport analyst_epsilon(const TrainPrivacy& cfg);
EpsilonReport party_epsilon(const TrainPrivacy& cfg, bool known_indices,
                            int colluding = 1);
EpsilonReport epoch_bound(const TrainPrivacy& cfg, long epochs);

}  // namespace vpdmix::acc
