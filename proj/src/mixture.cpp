#include "vpdmix/model/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vpdmix::model {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace

double digamma(double x) {
  if (!(x > 0)) throw std::domain_error("digamma: x must be > 0");
  double acc = 0;
  while (x < 10) {
    acc -= 1.0 / x;
    x += 1;
  }
  double inv = 1.0 / x, inv2 = inv * inv;
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12 -
                 inv2 * (1.0 / 120 -
                         inv2 * (1.0 / 252 -
                                 inv2 * (1.0 / 240 - inv2 / 132))));
}

// --- MixtureSpec --------------------------------------------------------------

void MixtureSpec::validate() const {
  if (K < 1) throw std::invalid_argument("MixtureSpec: K >= 1");
  if (features.empty()) throw std::invalid_argument("MixtureSpec: no features");
  int P = parties();
  std::vector<int> owned(P, 0);
  for (const auto& f : features) {
    if (f.party < 0) throw std::invalid_argument("MixtureSpec: negative party");
    if (f.kind == FeatureKind::kCategorical && f.n_categories < 2)
      throw std::invalid_argument("MixtureSpec: categorical needs >= 2 levels");
    ++owned[f.party];
  }
  for (int p = 0; p < P; ++p)
    if (owned[p] == 0)
      throw std::invalid_argument("MixtureSpec: party owns no feature");
  if (!(priors.alpha > 0 && priors.beta > 0 && priors.gamma_shape > 0 &&
        priors.gamma_rate > 0))
    throw std::invalid_argument("MixtureSpec: priors must be positive");
}

int MixtureSpec::parties() const {
  int p = 0;
  for (const auto& f : features) p = std::max(p, f.party + 1);
  return p;
}

std::vector<std::size_t> MixtureSpec::party_grouped_order() const {
  std::vector<std::size_t> idx(features.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return features[a].party < features[b].party;
  });
  return idx;
}

int MixtureSpec::feature_con_dim(std::size_t f) const {
  return features[f].kind == FeatureKind::kContinuousBeta
             ? 2
             : features[f].n_categories;
}

int MixtureSpec::feature_uncon_dim(std::size_t f) const {
  return features[f].kind == FeatureKind::kContinuousBeta
             ? 2
             : features[f].n_categories - 1;
}

std::size_t MixtureSpec::con_dim() const {
  std::size_t d = K;
  for (std::size_t f = 0; f < features.size(); ++f)
    d += static_cast<std::size_t>(K) * feature_con_dim(f);
  return d;
}

std::size_t MixtureSpec::uncon_dim() const {
  std::size_t d = K - 1;
  for (std::size_t f = 0; f < features.size(); ++f)
    d += static_cast<std::size_t>(K) * feature_uncon_dim(f);
  return d;
}

std::size_t MixtureSpec::party_con_dim(int party) const {
  std::size_t d = 0;
  for (std::size_t f = 0; f < features.size(); ++f)
    if (features[f].party == party)
      d += static_cast<std::size_t>(K) * feature_con_dim(f);
  return d;
}

void VariationalParams::validate(const MixtureSpec& spec) const {
  auto d = static_cast<Eigen::Index>(spec.uncon_dim());
  if (mu.size() != d || L.size() != d)
    throw std::invalid_argument("VariationalParams: dimension mismatch");
  if ((L.array() <= 0).any())
    throw std::invalid_argument("VariationalParams: L must be positive");
}

// --- transforms ---------------------------------------------------------------

Eigen::VectorXd stick_breaking(const Eigen::VectorXd& u, double& logdet) {
  const Eigen::Index m = u.size() + 1;
  Eigen::VectorXd x(m);
  double rem = 1.0;
  for (Eigen::Index k = 0; k < m - 1; ++k) {
    // centering offset log(m - 1 - k) makes u = 0 the uniform simplex
    double z = sigmoid(u[k] - std::log(static_cast<double>(m - 1 - k)));
    x[k] = z * rem;
    logdet += std::log(z) + std::log1p(-z) + std::log(rem);
    rem *= (1.0 - z);
  }
  x[m - 1] = rem;
  return x;
}

Eigen::VectorXd stick_breaking_vjp(const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& xbar,
                                   double logdet_coeff) {
  const Eigen::Index m = u.size() + 1;
  // replay forward to cache z_k and the stick remainders
  std::vector<double> z(m - 1), rem(m - 1);
  double r = 1.0;
  for (Eigen::Index k = 0; k < m - 1; ++k) {
    z[k] = sigmoid(u[k] - std::log(static_cast<double>(m - 1 - k)));
    rem[k] = r;
    r *= (1.0 - z[k]);
  }
  Eigen::VectorXd ubar(m - 1);
  double rbar = xbar[m - 1];
  for (Eigen::Index k = m - 2; k >= 0; --k) {
    double zbar = xbar[k] * rem[k] - rbar * rem[k] +
                  logdet_coeff * (1.0 / z[k] - 1.0 / (1.0 - z[k]));
    rbar = xbar[k] * z[k] + rbar * (1.0 - z[k]) + logdet_coeff / rem[k];
    ubar[k] = zbar * z[k] * (1.0 - z[k]);
  }
  return ubar;
}

ThetaSample constrain(const MixtureSpec& spec,
                      const Eigen::VectorXd& theta_uncon) {
  if (theta_uncon.size() != static_cast<Eigen::Index>(spec.uncon_dim()))
    throw std::invalid_argument("constrain: dimension mismatch");
  ThetaSample s;
  s.theta_uncon = theta_uncon;
  s.logdet = 0;
  s.con.feat.resize(spec.features.size());

  Eigen::Index off = 0;
  s.con.pi = stick_breaking(theta_uncon.segment(0, spec.K - 1), s.logdet);
  off += spec.K - 1;

  for (auto f : spec.party_grouped_order()) {
    const int du = spec.feature_uncon_dim(f);
    const int dc = spec.feature_con_dim(f);
    Eigen::MatrixXd block(spec.K, dc);
    for (int k = 0; k < spec.K; ++k) {
      auto seg = theta_uncon.segment(off, du);
      if (spec.features[f].kind == FeatureKind::kContinuousBeta) {
        block(k, 0) = std::exp(seg[0]);
        block(k, 1) = std::exp(seg[1]);
        s.logdet += seg[0] + seg[1];
      } else {
        block.row(k) = stick_breaking(seg, s.logdet).transpose();
      }
      off += du;
    }
    s.con.feat[f] = std::move(block);
  }
  return s;
}

Eigen::VectorXd constrain_vjp(const MixtureSpec& spec,
                              const Eigen::VectorXd& theta_uncon,
                              const Eigen::VectorXd& con_grad,
                              double logdet_coeff) {
  if (con_grad.size() != static_cast<Eigen::Index>(spec.con_dim()))
    throw std::invalid_argument("constrain_vjp: gradient dimension mismatch");
  Eigen::VectorXd ubar(spec.uncon_dim());
  Eigen::Index uoff = 0, coff = 0;

  ubar.segment(0, spec.K - 1) = stick_breaking_vjp(
      theta_uncon.segment(0, spec.K - 1), con_grad.segment(0, spec.K),
      logdet_coeff);
  uoff += spec.K - 1;
  coff += spec.K;

  for (auto f : spec.party_grouped_order()) {
    const int du = spec.feature_uncon_dim(f);
    const int dc = spec.feature_con_dim(f);
    for (int k = 0; k < spec.K; ++k) {
      auto useg = theta_uncon.segment(uoff, du);
      auto cbar = con_grad.segment(coff, dc);
      if (spec.features[f].kind == FeatureKind::kContinuousBeta) {
        // a = exp(v): vbar = abar * a + logdet_coeff (logdet contributes v)
        ubar[uoff] = cbar[0] * std::exp(useg[0]) + logdet_coeff;
        ubar[uoff + 1] = cbar[1] * std::exp(useg[1]) + logdet_coeff;
      } else {
        ubar.segment(uoff, du) = stick_breaking_vjp(useg, cbar, logdet_coeff);
      }
      uoff += du;
      coff += dc;
    }
  }
  return ubar;
}

ThetaSample sample_theta(const MixtureSpec& spec, const VariationalParams& xi,
                         std::mt19937_64& rng) {
  xi.validate(spec);
  std::normal_distribution<double> n01(0, 1);
  Eigen::VectorXd eta(xi.mu.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = n01(rng);
  auto s = constrain(spec, xi.mu + (xi.L.array() * eta.array()).matrix());
  s.eta = std::move(eta);
  return s;
}

Eigen::VectorXd flatten_constrained(const MixtureSpec& spec,
                                    const ConstrainedTheta& theta) {
  Eigen::VectorXd v(spec.con_dim());
  Eigen::Index off = 0;
  v.segment(0, spec.K) = theta.pi;
  off += spec.K;
  for (auto f : spec.party_grouped_order()) {
    const int dc = spec.feature_con_dim(f);
    for (int k = 0; k < spec.K; ++k) {
      v.segment(off, dc) = theta.feat[f].row(k).transpose();
      off += dc;
    }
  }
  return v;
}

// --- densities ----------------------------------------------------------------

namespace {

double feature_log_density(const FeatureSpec& fs, double x, double a, double b,
                           const Eigen::Ref<const Eigen::VectorXd>& omega) {
  if (fs.kind == FeatureKind::kContinuousBeta) {
    if (!(x > 0 && x < 1))
      throw std::domain_error("local_log_density: Beta data outside (0,1)");
    return (a - 1) * std::log(x) + (b - 1) * std::log1p(-x) - log_beta_fn(a, b);
  }
  int c = static_cast<int>(x);
  if (c < 0 || c >= fs.n_categories || x != static_cast<double>(c))
    throw std::domain_error("local_log_density: category index out of range");
  return std::log(omega[c]);
}

}  // namespace

Eigen::MatrixXd local_log_density(const MixtureSpec& spec,
                                  const Eigen::MatrixXd& X,
                                  const ConstrainedTheta& theta, int party) {
  const Eigen::Index N = X.rows();
  Eigen::MatrixXd LF = Eigen::MatrixXd::Zero(N, spec.K);
  if (party < 0) {
    // accumulate party blocks in party order so the factorization identity
    // sum_p LF_p = LF holds bit-exactly
    for (int p = 0; p < spec.parties(); ++p)
      LF += local_log_density(spec, X, theta, p);
    return LF;
  }
  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    const auto& fs = spec.features[f];
    if (fs.party != party) continue;
    const auto& blk = theta.feat[f];
    for (Eigen::Index n = 0; n < N; ++n)
      for (int k = 0; k < spec.K; ++k)
        LF(n, k) += feature_log_density(
            fs, X(n, static_cast<Eigen::Index>(f)), blk(k, 0),
            fs.kind == FeatureKind::kContinuousBeta ? blk(k, 1) : 0.0,
            blk.row(k).transpose());
  }
  return LF;
}

std::vector<Eigen::MatrixXd> local_dlogf(const MixtureSpec& spec,
                                         const Eigen::MatrixXd& X,
                                         const ConstrainedTheta& theta,
                                         int party) {
  const Eigen::Index N = X.rows();
  const auto dp = static_cast<Eigen::Index>(spec.party_con_dim(party));
  std::vector<Eigen::MatrixXd> out(
      N, Eigen::MatrixXd::Zero(spec.K, dp));

  Eigen::Index col = 0;
  for (auto f : spec.party_grouped_order()) {
    const auto& fs = spec.features[f];
    if (fs.party != party) continue;
    const auto& blk = theta.feat[f];
    const int dc = spec.feature_con_dim(f);
    for (Eigen::Index n = 0; n < N; ++n) {
      double x = X(n, static_cast<Eigen::Index>(f));
      for (int k = 0; k < spec.K; ++k) {
        if (fs.kind == FeatureKind::kContinuousBeta) {
          double a = blk(k, 0), b = blk(k, 1), dab = digamma(a + b);
          out[n](k, col) = std::log(x) - digamma(a) + dab;
          out[n](k, col + 1) = std::log1p(-x) - digamma(b) + dab;
        } else {
          int c = static_cast<int>(x);
          out[n](k, col + c) = 1.0 / blk(k, c);
        }
      }
    }
    col += dc;
  }
  return out;
}

Eigen::VectorXd compute_normalizer(const Eigen::MatrixXd& LF, double t,
                                   double c_step) {
  if (!(t < 0)) throw std::invalid_argument("compute_normalizer: t < 0");
  if (!(c_step > 0)) throw std::invalid_argument("compute_normalizer: step > 0");
  Eigen::VectorXd c(LF.rows());
  for (Eigen::Index n = 0; n < LF.rows(); ++n) {
    double gap = t - LF.row(n).maxCoeff();
    // smallest multiple of c_step closing the gap; tolerance keeps exact
    // multiples from rounding up one extra step
    double steps = std::ceil(gap / c_step - 1e-9);
    c[n] = steps > 0 ? steps * c_step : 0.0;
  }
  return c;
}

Eigen::MatrixXd likelihood_grad_per_example(const MixtureSpec& spec,
                                            const Eigen::MatrixXd& X,
                                            const ConstrainedTheta& theta) {
  const Eigen::Index N = X.rows();
  const int P = spec.parties();
  const auto d = static_cast<Eigen::Index>(spec.con_dim());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(N, d);

  Eigen::MatrixXd LF = local_log_density(spec, X, theta, -1);
  std::vector<std::vector<Eigen::MatrixXd>> dmat(P);
  for (int p = 0; p < P; ++p) dmat[p] = local_dlogf(spec, X, theta, p);

  for (Eigen::Index n = 0; n < N; ++n) {
    double m = LF.row(n).maxCoeff();
    Eigen::VectorXd relmat = (LF.row(n).array() - m).exp();  // mat / e^m
    double den = theta.pi.dot(relmat);                       // den / e^m
    // GP(n, k) = mat / den; the shared scale e^m cancels
    G.row(n).segment(0, spec.K) = (relmat / den).transpose();
    Eigen::Index off = spec.K;
    for (int p = 0; p < P; ++p) {
      const auto& dm = dmat[p][n];
      // GR(n, k, j) = pi_k * mat_{n,k} * dlogf_{k,j} / den, flattened
      // feature-major, then component, then parameter
      Eigen::Index gcol = 0, mcol = 0;
      for (auto f : spec.party_grouped_order()) {
        if (spec.features[f].party != p) continue;
        const int dc = spec.feature_con_dim(f);
        for (int k = 0; k < spec.K; ++k)
          for (int j = 0; j < dc; ++j)
            G(n, off + gcol + static_cast<Eigen::Index>(k) * dc + j) =
                theta.pi[k] * relmat[k] * dm(k, mcol + j) / den;
        gcol += static_cast<Eigen::Index>(dc) * spec.K;
        mcol += dc;
      }
      off += static_cast<Eigen::Index>(spec.party_con_dim(p));
    }
  }
  return G;
}

double log_likelihood(const MixtureSpec& spec, const Eigen::MatrixXd& X,
                      const ConstrainedTheta& theta) {
  Eigen::MatrixXd LF = local_log_density(spec, X, theta, -1);
  double total = 0;
  for (Eigen::Index n = 0; n < LF.rows(); ++n) {
    double m = LF.row(n).maxCoeff();
    total += m + std::log(theta.pi.dot((LF.row(n).array() - m).exp().matrix()));
  }
  return total;
}

Eigen::MatrixXd sample_synthetic(const MixtureSpec& spec,
                                 const ConstrainedTheta& theta, int n,
                                 std::mt19937_64& rng) {
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(spec.features.size()));
  std::discrete_distribution<int> comp(theta.pi.data(),
                                       theta.pi.data() + theta.pi.size());
  for (int i = 0; i < n; ++i) {
    int k = comp(rng);
    for (std::size_t f = 0; f < spec.features.size(); ++f) {
      const auto& fs = spec.features[f];
      const auto& blk = theta.feat[f];
      if (fs.kind == FeatureKind::kContinuousBeta) {
        std::gamma_distribution<double> ga(blk(k, 0), 1.0), gb(blk(k, 1), 1.0);
        double u = ga(rng), v = gb(rng);
        double x = u / (u + v);
        X(i, static_cast<Eigen::Index>(f)) =
            std::clamp(x, 1e-6, 1.0 - 1e-6);
      } else {
        Eigen::VectorXd w = blk.row(k).transpose();  // contiguous copy
        std::discrete_distribution<int> cat(w.data(), w.data() + w.size());
        X(i, static_cast<Eigen::Index>(f)) = static_cast<double>(cat(rng));
      }
    }
  }
  return X;
}

// --- priors and public terms ----------------------------------------------------

double log_prior(const MixtureSpec& spec, const ConstrainedTheta& theta) {
  const auto& pr = spec.priors;
  double lp = std::lgamma(pr.alpha * spec.K) - spec.K * std::lgamma(pr.alpha) +
              (pr.alpha - 1) * theta.pi.array().log().sum();
  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    const auto& blk = theta.feat[f];
    if (spec.features[f].kind == FeatureKind::kContinuousBeta) {
      lp += spec.K * 2 *
            (pr.gamma_shape * std::log(pr.gamma_rate) -
             std::lgamma(pr.gamma_shape));
      lp += ((pr.gamma_shape - 1) * blk.array().log() -
             pr.gamma_rate * blk.array())
                .sum();
    } else {
      int M = spec.features[f].n_categories;
      lp += spec.K *
            (std::lgamma(pr.beta * M) - M * std::lgamma(pr.beta));
      lp += (pr.beta - 1) * blk.array().log().sum();
    }
  }
  return lp;
}

Eigen::VectorXd prior_grad_constrained(const MixtureSpec& spec,
                                       const ConstrainedTheta& theta) {
  const auto& pr = spec.priors;
  Eigen::VectorXd g(spec.con_dim());
  Eigen::Index off = 0;
  g.segment(0, spec.K) = (pr.alpha - 1) / theta.pi.array();
  off += spec.K;
  for (auto f : spec.party_grouped_order()) {
    const int dc = spec.feature_con_dim(f);
    const auto& blk = theta.feat[f];
    for (int k = 0; k < spec.K; ++k) {
      if (spec.features[f].kind == FeatureKind::kContinuousBeta) {
        g[off] = (pr.gamma_shape - 1) / blk(k, 0) - pr.gamma_rate;
        g[off + 1] = (pr.gamma_shape - 1) / blk(k, 1) - pr.gamma_rate;
      } else {
        for (int j = 0; j < dc; ++j) g[off + j] = (pr.beta - 1) / blk(k, j);
      }
      off += dc;
    }
  }
  return g;
}

XiGrad prior_entropy_grad(const MixtureSpec& spec, const ThetaSample& sample,
                          const VariationalParams& xi) {
  Eigen::VectorXd gu = constrain_vjp(
      spec, sample.theta_uncon, prior_grad_constrained(spec, sample.con), 1.0);
  XiGrad out;
  out.mu = gu;
  out.L = (gu.array() * sample.eta.array() + 1.0 / xi.L.array()).matrix();
  return out;
}

XiGrad chain_to_xi(const MixtureSpec& spec, const ThetaSample& sample,
                   const Eigen::VectorXd& likelihood_con_grad) {
  Eigen::VectorXd gu =
      constrain_vjp(spec, sample.theta_uncon, likelihood_con_grad, 0.0);
  XiGrad out;
  out.mu = gu;
  out.L = (gu.array() * sample.eta.array()).matrix();
  return out;
}

}  // namespace vpdmix::model
