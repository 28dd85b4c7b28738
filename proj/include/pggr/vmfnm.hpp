#pragma once

#include "pggr/common.hpp"
#include "pggr/rng.hpp"
#include "pggr/special.hpp"

namespace pggr {

// One mixture component: von Mises-Fisher direction times Nakagami radius.
struct VmfnmComponent {
  double weight = 1.0;
  VectorXd mu;         // unit mean direction
  double kappa = 0.0;  // vMF concentration
  double m = 1.0;      // Nakagami shape
  double omega = 1.0;  // Nakagami spread, E[r^2]
};

struct MixtureParams {
  int dim = 0;
  std::vector<VmfnmComponent> comps;

  // The standard normal in d dimensions is exactly a single vMFNM component:
  // uniform direction (kappa=0) with chi-distributed radius (m=d/2, omega=d).
  static MixtureParams standard_normal(int d) {
    MixtureParams p;
    p.dim = d;
    VmfnmComponent c;
    c.weight = 1.0;
    c.mu = VectorXd::Zero(d);
    c.mu[0] = 1.0;
    c.kappa = 0.0;
    c.m = 0.5 * d;
    c.omega = double(d);
    p.comps.push_back(std::move(c));
    return p;
  }

  void validate() const {
    PGGR_REQUIRE(dim >= 2, "mixture dim must be >= 2");
    PGGR_REQUIRE(!comps.empty(), "mixture needs at least one component");
    double wsum = 0;
    for (const auto& c : comps) {
      PGGR_REQUIRE(c.weight >= 0 && std::isfinite(c.weight), "component weight invalid");
      PGGR_REQUIRE(c.mu.size() == dim, "component mu has wrong dimension");
      PGGR_REQUIRE(std::abs(c.mu.norm() - 1.0) < 1e-10, "component mu not unit");
      PGGR_REQUIRE(c.kappa >= 0 && std::isfinite(c.kappa), "kappa invalid");
      PGGR_REQUIRE(c.m >= 0.5 && c.m <= 1e3, "nakagami shape out of range");
      PGGR_REQUIRE(c.omega > 0 && std::isfinite(c.omega), "omega invalid");
      wsum += c.weight;
    }
    PGGR_REQUIRE(std::abs(wsum - 1.0) < 1e-10, "component weights must sum to 1");
  }
};

inline double nominal_logpdf(const VectorXd& u) {
  return -0.5 * double(u.size()) * std::log(2 * std::numbers::pi) - 0.5 * u.squaredNorm();
}

// log of the vMF normalizer C_d(kappa) = kappa^{d/2-1} / ((2pi)^{d/2} I_{d/2-1}(kappa)).
inline double vmf_log_normalizer(int d, double kappa) {
  if (kappa == 0) return -log_sphere_surface(d);
  double nu = 0.5 * d - 1.0;
  return nu * std::log(kappa) - 0.5 * d * std::log(2 * std::numbers::pi) -
         log_bessel_i(nu, kappa);
}

inline double nakagami_logpdf(double r, double m, double omega) {
  return std::numbers::ln2 + m * std::log(m / omega) - std::lgamma(m) +
         (2 * m - 1) * std::log(r) - m * r * r / omega;
}

// log density of one component at u decomposed as (r, dir).
inline double component_logpdf(const VmfnmComponent& c, double r, const VectorXd& dir) {
  return vmf_log_normalizer(int(dir.size()), c.kappa) + c.kappa * c.mu.dot(dir) +
         nakagami_logpdf(r, c.m, c.omega) - (double(dir.size()) - 1.0) * std::log(r);
}

inline double mixture_logpdf(const VectorXd& u, const MixtureParams& p) {
  PGGR_REQUIRE(u.size() == p.dim, "mixture_logpdf dimension mismatch");
  double r = u.norm();
  if (r == 0) throw std::domain_error("pggr: mixture_logpdf undefined at the origin");
  VectorXd dir = u / r;
  VectorXd lp(p.comps.size());
  for (size_t k = 0; k < p.comps.size(); ++k) {
    const auto& c = p.comps[k];
    lp[k] = c.weight > 0 ? std::log(c.weight) + component_logpdf(c, r, dir) : -kInf;
  }
  return log_sum_exp(lp);
}

// Batch version over the columns of X (d x n).
inline VectorXd mixture_logpdf_batch(const MatrixXd& X, const MixtureParams& p) {
  VectorXd out(X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) out[i] = mixture_logpdf(X.col(i), p);
  return out;
}

inline VectorXd sample_uniform_sphere(int d, Rng& rng) {
  for (int tries = 0; tries < 100; ++tries) {
    VectorXd v = rng.normal_vec(d);
    double n = v.norm();
    if (n > 1e-12) return v / n;
  }
  raise("uniform sphere sampling degenerate");
}

// Wood's rejection sampler for the vMF distribution on S^{d-1}.
inline VectorXd sample_vmf(const VectorXd& mu, double kappa, Rng& rng) {
  const int d = int(mu.size());
  PGGR_REQUIRE(d >= 2, "vMF needs dim >= 2");
  if (kappa == 0) return sample_uniform_sphere(d, rng);
  const double dim = d - 1;
  const double b = dim / (std::sqrt(4 * kappa * kappa + dim * dim) + 2 * kappa);
  const double x0 = (1 - b) / (1 + b);
  const double c = kappa * x0 + dim * std::log(1 - x0 * x0);
  double w = 0;
  bool accepted = false;
  for (long trial = 0; trial < 1000000; ++trial) {
    double z = rng.beta(0.5 * dim, 0.5 * dim);
    w = (1 - (1 + b) * z) / (1 - (1 - b) * z);
    double u = 1.0 - rng.uniform();  // in (0,1]
    if (kappa * w + dim * std::log(1 - x0 * w) - c >= std::log(u)) {
      accepted = true;
      break;
    }
  }
  PGGR_REQUIRE(accepted, "vMF rejection sampler failed to accept");
  // tangent direction orthogonal to mu
  VectorXd v;
  for (int tries = 0;; ++tries) {
    VectorXd z = rng.normal_vec(d);
    v = z - z.dot(mu) * mu;
    double n = v.norm();
    if (n > 1e-12) {
      v /= n;
      break;
    }
    PGGR_REQUIRE(tries < 100, "vMF tangent sampling degenerate");
  }
  return std::sqrt(std::max(0.0, 1 - w * w)) * v + w * mu;
}

inline double sample_nakagami_radius(double m, double omega, Rng& rng) {
  double s = rng.gamma(m, omega / m);
  return std::sqrt(s);
}

inline MatrixXd mixture_sample(const MixtureParams& p, int n, Rng& rng) {
  p.validate();
  std::vector<double> cum(p.comps.size());
  double acc = 0;
  for (size_t k = 0; k < p.comps.size(); ++k) {
    acc += p.comps[k].weight;
    cum[k] = acc;
  }
  MatrixXd X(p.dim, n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    size_t k = size_t(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (k >= p.comps.size()) k = p.comps.size() - 1;
    const auto& c = p.comps[k];
    double r = sample_nakagami_radius(c.m, c.omega, rng);
    X.col(i) = r * sample_vmf(c.mu, c.kappa, rng);
  }
  return X;
}

struct EmOptions {
  int k = 1;
  int restarts = 1;
  int max_iter = 200;
  double rel_tol = 1e-6;
  double reinit_mass = 1e-8;
  double kappa_max = 1e5;
  double m_min = 0.5, m_max = 1e3;
};

struct EmResult {
  MixtureParams params;
  double loglik = -kInf;            // final weighted log-likelihood
  std::vector<double> loglik_traj;  // per-iteration values (best restart)
  std::vector<int> reinit_iters;    // iterations where a component was reset
  int iters = 0;
  bool clamped = false;  // some component ended pinned at a concentration clamp
};

namespace detail {

inline double banerjee_kappa(double rbar, int d, double kappa_max) {
  if (rbar <= 0) return 0;
  double denom = 1 - rbar * rbar;
  if (denom < 1e-12) return kappa_max;
  return std::clamp(rbar * (double(d) - rbar * rbar) / denom, 0.0, kappa_max);
}

// weighted spherical k-means++ seeding on the unit directions
inline std::vector<int> kmeanspp_directions(const MatrixXd& dirs, const VectorXd& wb, int k,
                                            Rng& rng) {
  const int n = int(dirs.cols());
  std::vector<int> centers;
  auto pick = [&](const VectorXd& prob) {
    double total = prob.sum();
    PGGR_REQUIRE(total > 0, "EM seeding: zero total weight");
    double u = rng.uniform() * total, acc = 0;
    for (int i = 0; i < n; ++i) {
      acc += prob[i];
      if (u <= acc) return i;
    }
    return n - 1;
  };
  centers.push_back(pick(wb));
  VectorXd mind2 = VectorXd::Constant(n, kInf);
  while (int(centers.size()) < k) {
    const VectorXd& c = dirs.col(centers.back());
    for (int i = 0; i < n; ++i) {
      double d2 = (dirs.col(i) - c).squaredNorm();
      mind2[i] = std::min(mind2[i], d2);
    }
    VectorXd prob = wb.array() * mind2.array();
    if (prob.sum() <= 0) prob = wb;  // all points coincide with centers
    centers.push_back(pick(prob));
  }
  return centers;
}

}  // namespace detail

// Weighted maximum-likelihood fit of a K-component vMFNM mixture by EM.
// Weights need not be normalized; they must be nonnegative with positive sum.
inline EmResult weighted_em_fit(const MatrixXd& X, const VectorXd& w, const EmOptions& opt,
                                Rng& rng) {
  const int d = int(X.rows());
  const int n = int(X.cols());
  PGGR_REQUIRE(d >= 2, "EM: dim >= 2 required");
  PGGR_REQUIRE(w.size() == n, "EM: weight/sample mismatch");
  PGGR_REQUIRE((w.array() >= 0).all() && w.allFinite(), "EM: weights must be nonneg finite");
  PGGR_REQUIRE(w.sum() > 0, "EM: all weights zero");
  PGGR_REQUIRE(n >= 10 * opt.k, "EM: need n >= 10*K samples");

  VectorXd wb = w / w.sum();
  VectorXd r = X.colwise().norm();
  PGGR_REQUIRE((r.array() > 0).all(), "EM: sample at the origin");
  MatrixXd dirs = X.array().rowwise() / r.transpose().array();
  VectorXd r2 = r.array().square();
  VectorXd logr = r.array().log();

  // global radial moments for initialization
  double omega_g = wb.dot(r2);
  double var_g = wb.dot((r2.array() - omega_g).square().matrix());
  double m_g = var_g > 0 ? std::clamp(omega_g * omega_g / var_g, opt.m_min, opt.m_max)
                         : opt.m_max;

  Eigen::Index wmax_i;
  wb.maxCoeff(&wmax_i);

  EmResult best;
  for (int restart = 0; restart < std::max(1, opt.restarts); ++restart) {
    MixtureParams p;
    p.dim = d;
    auto seeds = detail::kmeanspp_directions(dirs, wb, opt.k, rng);
    for (int k = 0; k < opt.k; ++k) {
      VmfnmComponent c;
      c.weight = 1.0 / opt.k;
      c.mu = dirs.col(seeds[k]);
      c.kappa = double(d);
      c.m = m_g;
      c.omega = omega_g;
      p.comps.push_back(std::move(c));
    }

    EmResult cur;
    MatrixXd logp(opt.k, n);
    double prev_ll = -kInf;
    bool reinit_this_iter = false;
    int it = 0;
    for (it = 0; it < opt.max_iter; ++it) {
      // E-step: log responsibilities and weighted log-likelihood
      for (int k = 0; k < opt.k; ++k) {
        const auto& c = p.comps[k];
        if (c.weight <= 0) {
          logp.row(k).setConstant(-kInf);
          continue;
        }
        double lc = std::log(c.weight) + vmf_log_normalizer(d, c.kappa) +
                    std::numbers::ln2 + c.m * std::log(c.m / c.omega) - std::lgamma(c.m);
        logp.row(k) = (lc + (c.kappa * c.mu.transpose() * dirs).array() +
                       ((2 * c.m - 1) - (d - 1)) * logr.transpose().array() -
                       (c.m / c.omega) * r2.transpose().array())
                          .matrix();
      }
      VectorXd lse(n);
      for (int i = 0; i < n; ++i) lse[i] = log_sum_exp(logp.col(i));
      double ll = wb.dot(lse);
      PGGR_REQUIRE(std::isfinite(ll), "EM: log-likelihood not finite");
      cur.loglik_traj.push_back(ll);

      bool converged = std::isfinite(prev_ll) && !reinit_this_iter &&
                       std::abs(ll - prev_ll) <= opt.rel_tol * std::abs(prev_ll);
      prev_ll = ll;
      cur.loglik = ll;
      if (converged) break;

      // responsibilities gamma_{ki} scaled by wb_i
      MatrixXd resp(opt.k, n);
      for (int i = 0; i < n; ++i)
        resp.col(i) = (logp.col(i).array() - lse[i]).exp() * wb[i];

      // M-step
      reinit_this_iter = false;
      for (int k = 0; k < opt.k; ++k) {
        double mass = resp.row(k).sum();
        auto& c = p.comps[k];
        if (mass < opt.reinit_mass) {
          c.mu = dirs.col(wmax_i);
          c.kappa = double(d);
          c.m = m_g;
          c.omega = omega_g;
          c.weight = 1e-3;
          cur.reinit_iters.push_back(it);
          reinit_this_iter = true;
          log_info(strfmt("EM: reinitialized component %d at iter %d", k, it));
          continue;
        }
        c.weight = mass;
        VectorXd rho = dirs * resp.row(k).transpose();
        double rho_norm = rho.norm();
        double rbar = rho_norm / mass;
        if (rho_norm > 1e-300) c.mu = rho / rho_norm;
        c.kappa = detail::banerjee_kappa(std::min(rbar, 1.0), d, opt.kappa_max);
        double om = resp.row(k).dot(r2) / mass;
        c.omega = std::max(om, 1e-12);
        double vr = resp.row(k).dot((r2.array() - om).square().matrix()) / mass;
        c.m = vr > 0 ? std::clamp(c.omega * c.omega / vr, opt.m_min, opt.m_max) : opt.m_max;
      }
      double wsum = 0;
      for (const auto& c : p.comps) wsum += c.weight;
      for (auto& c : p.comps) c.weight /= wsum;
    }
    cur.iters = it;
    cur.params = p;
    // A component pinned at a concentration clamp is a delta-spike artifact
    // of the likelihood race, not a usable proposal mode; prefer clean fits.
    for (const auto& c : p.comps)
      if (c.kappa >= 0.999 * opt.kappa_max || c.m >= 0.999 * opt.m_max) cur.clamped = true;
    bool better = cur.loglik > best.loglik;
    if (best.params.comps.empty() || (best.clamped && !cur.clamped) ||
        (best.clamped == cur.clamped && better))
      best = std::move(cur);
  }
  best.params.validate();
  return best;
}

}  // namespace pggr
