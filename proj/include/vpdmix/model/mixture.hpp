#pragma once

// K-component mixture with party-factorized Beta / Categorical features,
// ADVI transforms (stick-breaking for simplices, exp for positives), a
// diagonal Gaussian variational posterior with reparameterization, and the
// per-party local quantities the trainer assembles under MPC.
//
// Parameter layouts are canonical and party-grouped: the pi block first,
// then each party's features in declaration order.  The same traversal is
// used for the unconstrained vector, the constrained gradient vector, and
// the MPC gradient, so revealed values decode positionally.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace vpdmix::model {

enum class FeatureKind { kContinuousBeta, kCategorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kContinuousBeta;
  int n_categories = 0;  // categorical only
  int party = 0;
};

struct PriorSpec {
  double alpha = 1.0;        // Dirichlet concentration for pi
  double beta = 1.0;         // Dirichlet concentration for categorical omega
  double gamma_shape = 1.0;  // Gamma prior on Beta-feature parameters
  double gamma_rate = 1.0;
};

struct MixtureSpec {
  int K = 1;
  std::vector<FeatureSpec> features;
  PriorSpec priors;

  void validate() const;
  int parties() const;
  // Feature indices grouped by party (stable within a party); the canonical
  // traversal order for every layout below.
  std::vector<std::size_t> party_grouped_order() const;
  // Constrained parameters per component for feature f: 2 for Beta (a, b),
  // n_categories for categorical.
  int feature_con_dim(std::size_t f) const;
  // Unconstrained dims per component: 2 for Beta, n_categories - 1 for
  // categorical (stick-breaking).
  int feature_uncon_dim(std::size_t f) const;
  // Totals: pi block + all features, all components.
  std::size_t con_dim() const;    // K + sum_f K * feature_con_dim
  std::size_t uncon_dim() const;  // (K - 1) + sum_f K * feature_uncon_dim
  // Constrained dimension owned by one party (the GR(p) block length).
  std::size_t party_con_dim(int party) const;
};

struct ConstrainedTheta {
  Eigen::VectorXd pi;  // K, on the simplex
  // per feature (original declaration index): K x feature_con_dim matrix;
  // Beta rows are (a, b), categorical rows are omega on the simplex
  std::vector<Eigen::MatrixXd> feat;
};

struct VariationalParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd L;  // positive diagonal

  void validate(const MixtureSpec& spec) const;
};

struct ThetaSample {
  Eigen::VectorXd eta;
  Eigen::VectorXd theta_uncon;
  ConstrainedTheta con;
  double logdet = 0;  // log |det J| of the constrain transform
};

// --- transforms -------------------------------------------------------------

// Stick-breaking with the standard centering offsets, so u = 0 maps to the
// uniform simplex.  Returns the simplex point and adds log|det J| to logdet.
Eigen::VectorXd stick_breaking(const Eigen::VectorXd& u, double& logdet);
// Reverse pass: gradient wrt u of (xbar . x + logdet_coeff * log|det J|).
Eigen::VectorXd stick_breaking_vjp(const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& xbar,
                                   double logdet_coeff);

ThetaSample constrain(const MixtureSpec& spec,
                      const Eigen::VectorXd& theta_uncon);
// Gradient wrt theta_uncon of (con_grad . theta_con + logdet_coeff * logdet),
// con_grad in the canonical constrained layout.
Eigen::VectorXd constrain_vjp(const MixtureSpec& spec,
                              const Eigen::VectorXd& theta_uncon,
                              const Eigen::VectorXd& con_grad,
                              double logdet_coeff);

ThetaSample sample_theta(const MixtureSpec& spec, const VariationalParams& xi,
                         std::mt19937_64& rng);

// Canonical constrained layout <-> structured theta.
Eigen::VectorXd flatten_constrained(const MixtureSpec& spec,
                                    const ConstrainedTheta& theta);

// --- densities and local blocks --------------------------------------------

// LF[n, k]: sum of party p's feature log-densities. X is N x F in model
// units ([0,1] continuous, category index as double), columns in declaration
// order; party < 0 means all parties (the joint density).
Eigen::MatrixXd local_log_density(const MixtureSpec& spec,
                                  const Eigen::MatrixXd& X,
                                  const ConstrainedTheta& theta, int party);

// dmat[n]: K x party_con_dim(p) matrix of dLF/drho (log-derivatives) for
// party p's parameters, columns in the canonical within-party order.
std::vector<Eigen::MatrixXd> local_dlogf(const MixtureSpec& spec,
                                         const Eigen::MatrixXd& X,
                                         const ConstrainedTheta& theta,
                                         int party);

// Closed form of the renormalizer loop: smallest nonnegative multiple c of
// c_step with max_k LF[n, k] + c >= t, per example.
Eigen::VectorXd compute_normalizer(const Eigen::MatrixXd& LF, double t,
                                   double c_step);

// Per-example constrained-space likelihood gradient rows
// [GP(n, .) | GR(n, party 0) | GR(n, party 1) | ...], the floating-point
// reference for what the MPC pipeline assembles.
Eigen::MatrixXd likelihood_grad_per_example(const MixtureSpec& spec,
                                            const Eigen::MatrixXd& X,
                                            const ConstrainedTheta& theta);

double log_likelihood(const MixtureSpec& spec, const Eigen::MatrixXd& X,
                      const ConstrainedTheta& theta);

Eigen::MatrixXd sample_synthetic(const MixtureSpec& spec,
                                 const ConstrainedTheta& theta, int n,
                                 std::mt19937_64& rng);

// --- priors and the public ELBO terms ---------------------------------------

double log_prior(const MixtureSpec& spec, const ConstrainedTheta& theta);
// d log_prior / d theta_con in the canonical constrained layout.
Eigen::VectorXd prior_grad_constrained(const MixtureSpec& spec,
                                       const ConstrainedTheta& theta);

struct XiGrad {
  Eigen::VectorXd mu;
  Eigen::VectorXd L;
};

// Public ELBO gradient terms: (log prior + log|det J|) chained through the
// transform to (mu, L), plus the entropy term diag(1/l_ii) on L.
XiGrad prior_entropy_grad(const MixtureSpec& spec, const ThetaSample& sample,
                          const VariationalParams& xi);

// Chains a constrained-space likelihood gradient (e.g. the revealed MPC sum)
// to (mu, L) through the Jacobian at the sampled theta; pure post-processing.
XiGrad chain_to_xi(const MixtureSpec& spec, const ThetaSample& sample,
                   const Eigen::VectorXd& likelihood_con_grad);

double digamma(double x);

}  // namespace vpdmix::model
