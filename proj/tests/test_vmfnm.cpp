#include <catch2/catch_amalgamated.hpp>

#include "pggr/vmfnm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace pggr;
using Catch::Approx;

namespace {

MixtureParams single(int d, VectorXd mu, double kappa, double m, double omega) {
  MixtureParams p;
  p.dim = d;
  VmfnmComponent c;
  c.weight = 1.0;
  c.mu = mu.normalized();
  c.kappa = kappa;
  c.m = m;
  c.omega = omega;
  p.comps.push_back(std::move(c));
  return p;
}

// the isotropic member of the family: kappa = 0, m = d/2, omega = d
MixtureParams std_normal_member(int d) {
  VectorXd e1 = VectorXd::Zero(d);
  e1[0] = 1.0;
  return single(d, e1, 0.0, d / 2.0, double(d));
}

}  // namespace

TEST_CASE("directional normalizer matches frozen values and small-kappa limit") {
  // frozen reference values (independent high-precision evaluation)
  CHECK(vmf_log_normalizer(3, 2.0) == Approx(-3.12624443902351).epsilon(1e-12));
  CHECK(vmf_log_normalizer(10, 50.0) == Approx(-40.5073235553774).epsilon(1e-12));
  CHECK(vmf_log_normalizer(2, 1.0) == Approx(-2.07379142491652).epsilon(1e-12));
  CHECK(vmf_log_normalizer(100, 5.0) == Approx(86.5112551707762).epsilon(1e-12));

  // kappa -> 0 recovers the uniform density 1/|S^{d-1}|
  CHECK(vmf_log_normalizer(2, 0.0) == Approx(-1.83787706640935).epsilon(1e-12));
  CHECK(vmf_log_normalizer(3, 0.0) == Approx(-2.53102424696929).epsilon(1e-12));
  CHECK(vmf_log_normalizer(10, 0.0) == Approx(-3.238742779459).epsilon(1e-11));

  // continuity at the limit
  CHECK(vmf_log_normalizer(3, 1e-8) == Approx(vmf_log_normalizer(3, 0.0)).margin(1e-6));
}

TEST_CASE("isotropic member reproduces the standard normal density") {
  for (int d : {2, 3, 10, 100}) {
    MixtureParams p = std_normal_member(d);
    Rng rng(91 + d);
    for (int i = 0; i < 50; ++i) {
      VectorXd u = rng.normal_vec(d);
      CHECK(mixture_logpdf(u, p) == Approx(nominal_logpdf(u)).margin(1e-10));
    }
  }
}

TEST_CASE("nominal logpdf frozen value") {
  VectorXd u(3);
  u << 0.3, -1.2, 2.0;
  CHECK(nominal_logpdf(u) == Approx(-5.52181559961402).epsilon(1e-12));
}

TEST_CASE("density integrates to one over the plane (2-D quadrature)") {
  MixtureParams p;
  p.dim = 2;
  VmfnmComponent a, b;
  a.weight = 0.65;
  a.mu = VectorXd(2);
  a.mu << std::cos(0.4), std::sin(0.4);
  a.kappa = 3.0;
  a.m = 1.6;
  a.omega = 5.0;
  b.weight = 0.35;
  b.mu = VectorXd(2);
  b.mu << std::cos(2.6), std::sin(2.6);
  b.kappa = 9.0;
  b.m = 0.9;
  b.omega = 2.0;
  p.comps = {a, b};

  const int n = 801;
  const double lo = -9.0, hi = 9.0, w = (hi - lo) / (n - 1);
  double total = 0;
  VectorXd u(2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      u << lo + i * w, lo + j * w;
      if (u.norm() < 1e-12) continue;
      double wij = ((i == 0 || i == n - 1) ? 0.5 : 1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0);
      total += wij * std::exp(mixture_logpdf(u, p));
    }
  CHECK(total * w * w == Approx(1.0).margin(2e-4));
}

TEST_CASE("uniform direction factor in 3-D equals 1/(4 pi)") {
  MixtureParams p = single(3, VectorXd::Ones(3), 0.0, 2.0, 3.0);
  VectorXd u1(3), u2(3);
  u1 << 1.2, -0.4, 0.8;
  // rotate to a different direction at the same radius
  u2 << -u1[1], u1[0], u1[2];
  CHECK(mixture_logpdf(u1, p) == Approx(mixture_logpdf(u2, p)).margin(1e-12));

  // direction factor = exp(logpdf) / radial factor = 1/(4 pi)
  double r = u1.norm();
  double lograd = std::numbers::ln2 + 2.0 * std::log(2.0 / 3.0) - std::lgamma(2.0) +
                  3.0 * std::log(r) - (2.0 / 3.0) * r * r - 2.0 * std::log(r);
  CHECK(mixture_logpdf(u1, p) - lograd == Approx(std::log(1.0 / (4.0 * std::numbers::pi))).margin(1e-12));
}

TEST_CASE("mixture of identical components collapses") {
  MixtureParams one = single(4, VectorXd::Ones(4), 7.0, 1.2, 3.0);
  MixtureParams two = one;
  two.comps.push_back(two.comps[0]);
  two.comps[0].weight = 0.3;
  two.comps[1].weight = 0.7;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    VectorXd u = rng.normal_vec(4);
    CHECK(mixture_logpdf(u, two) == Approx(mixture_logpdf(u, one)).margin(1e-12));
  }
}

TEST_CASE("logpdf raises a domain error at the origin") {
  MixtureParams p = std_normal_member(3);
  CHECK_THROWS_AS(mixture_logpdf(VectorXd::Zero(3), p), std::domain_error);
}

TEST_CASE("directional sampler concentration matches the exact mean resultant") {
  // E[cos angle] for kappa=50, d=10 is the Bessel ratio I_5(50)/I_4(50)
  const double exact = 0.913209599873741;
  VectorXd mu = VectorXd::Zero(10);
  mu[3] = 1.0;
  Rng rng(31);
  const int n = 10000;
  double acc = 0, acc2 = 0;
  for (int i = 0; i < n; ++i) {
    double c = sample_vmf(mu, 50.0, rng).dot(mu);
    acc += c;
    acc2 += c * c;
  }
  double mean = acc / n;
  double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(mean - exact) <= 4 * se);
  CHECK(se < 0.002);
}

TEST_CASE("radial sampler second moment equals the spread parameter") {
  Rng rng(17);
  const int n = 20000;
  const double m = 2.5, omega = 6.0;
  double acc = 0, acc2 = 0;
  for (int i = 0; i < n; ++i) {
    double r = sample_nakagami_radius(m, omega, rng);
    REQUIRE(r > 0);
    double r2 = r * r;
    acc += r2;
    acc2 += r2 * r2;
  }
  double mean = acc / n;
  double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(mean - omega) <= 3 * se);  // E[r^2] = omega
}

TEST_CASE("frozen radial density value") {
  // independently computed: log f_Nak(1.3; m=2, omega=4)
  double lp = std::numbers::ln2 + 2.0 * std::log(2.0 / 4.0) - std::lgamma(2.0) +
              3.0 * std::log(1.3) - (2.0 / 4.0) * 1.3 * 1.3;
  CHECK(lp == Approx(-0.751054387157472).epsilon(1e-12));

  MixtureParams p = single(2, VectorXd::Ones(2), 0.0, 2.0, 4.0);
  VectorXd u(2);
  u << 1.3 / std::numbers::sqrt2, 1.3 / std::numbers::sqrt2;
  double logdir = vmf_log_normalizer(2, 0.0);  // uniform on the circle
  CHECK(mixture_logpdf(u, p) == Approx(lp + logdir - std::log(1.3)).margin(1e-12));
}

TEST_CASE("single-weight mixtures draw every sample from the live component") {
  MixtureParams p;
  p.dim = 3;
  VmfnmComponent live, dead;
  live.weight = 1.0;
  live.mu = VectorXd::Zero(3);
  live.mu[0] = 1.0;
  live.kappa = 200.0;
  live.m = 50.0;
  live.omega = 9.0;
  dead.weight = 0.0;
  dead.mu = -live.mu;
  dead.kappa = 200.0;
  dead.m = 50.0;
  dead.omega = 0.01;
  p.comps = {dead, live};
  Rng rng(8);
  MatrixXd X = mixture_sample(p, 500, rng);
  for (int i = 0; i < X.cols(); ++i) {
    CHECK(X.col(i).normalized().dot(live.mu) > 0.5);
    CHECK(X.col(i).norm() > 1.0);
  }
}

TEST_CASE("sampling and density agree (2-D histogram GOF, d=3)") {
  MixtureParams p = single(3, VectorXd::Ones(3), 4.0, 1.5, 3.0);
  Rng rng(23);
  const int n = 100000;
  MatrixXd X = mixture_sample(p, n, rng);

  // bin (cos angle to mu, radius) and compare to quadrature cell masses
  const int nc = 8, nr = 8;
  const double rmax = 5.0;
  MatrixXd counts = MatrixXd::Zero(nc, nr);
  int outside = 0;
  for (int i = 0; i < n; ++i) {
    double r = X.col(i).norm();
    double c = X.col(i).dot(p.comps[0].mu) / r;
    if (r >= rmax) {
      ++outside;
      continue;
    }
    int ic = std::min(int((c + 1) / 2 * nc), nc - 1);
    int ir = std::min(int(r / rmax * nr), nr - 1);
    counts(ic, ir) += 1;
  }

  // analytic cell masses: product of directional and radial factors
  // directional: f(c) ~ exp(kappa c) * C, with int_{-1}^{1} f(c) (2 pi) sqrt-free
  // measure on S^2: mass(c in [a,b]) = int exp(kappa c) dc * 2 pi * C3(kappa)
  double kappa = p.comps[0].kappa;
  double c3 = std::exp(vmf_log_normalizer(3, kappa));
  auto dir_mass = [&](double a, double b) {
    return 2 * std::numbers::pi * c3 * (std::exp(kappa * b) - std::exp(kappa * a)) / kappa;
  };
  double m = p.comps[0].m, omega = p.comps[0].omega;
  auto rad_pdf = [&](double r) {
    return std::exp(std::numbers::ln2 + m * std::log(m / omega) - std::lgamma(m) +
                    (2 * m - 1) * std::log(r) - m * r * r / omega);
  };
  auto rad_mass = [&](double a, double b) {
    const int q = 200;
    double h = (b - a) / q, s = 0.5 * (rad_pdf(a) + rad_pdf(b));
    for (int i = 1; i < q; ++i) s += rad_pdf(a + i * h);
    return s * h;
  };

  double chi2 = 0;
  int dof = 0;
  for (int ic = 0; ic < nc; ++ic)
    for (int ir = 0; ir < nr; ++ir) {
      double pm = dir_mass(-1 + 2.0 * ic / nc, -1 + 2.0 * (ic + 1) / nc) *
                  rad_mass(rmax * ir / nr, rmax * (ir + 1) / nr);
      double expect = pm * n;
      if (expect < 8) continue;  // merge-tail guard; tiny cells skipped
      chi2 += (counts(ic, ir) - expect) * (counts(ic, ir) - expect) / expect;
      ++dof;
    }
  REQUIRE(dof > 10);
  double pval = chisq_upper_tail(chi2, double(dof - 1));
  CHECK(pval > 0.001);
  CHECK(outside < n / 100);
}

TEST_CASE("importance weights against the nominal density average to one") {
  Rng seed_rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    int d = 2 + 4 * trial;  // 2, 6, 10
    MixtureParams p;
    p.dim = d;
    int K = 1 + trial;
    for (int k = 0; k < K; ++k) {
      VmfnmComponent c;
      c.weight = 1.0 / K;
      c.mu = seed_rng.normal_vec(d).normalized();
      c.kappa = 0.2 + 2.0 * seed_rng.uniform();  // broad enough to cover p
      c.m = 0.5 + seed_rng.uniform();
      c.omega = double(d) * (0.8 + 0.7 * seed_rng.uniform());
      p.comps.push_back(std::move(c));
    }
    Rng rng(101 + trial);
    const int n = 100000;
    MatrixXd X = mixture_sample(p, n, rng);
    VectorXd logq = mixture_logpdf_batch(X, p);
    double acc = 0, acc2 = 0;
    for (int i = 0; i < n; ++i) {
      double w = std::exp(nominal_logpdf(X.col(i)) - logq[i]);
      acc += w;
      acc2 += w * w;
    }
    double mean = acc / n;
    double se = std::sqrt(std::max(acc2 / n - mean * mean, 0.0) / n);
    INFO("d=" << d << " K=" << K << " mean=" << mean << " se=" << se);
    CHECK(std::abs(mean - 1.0) <= 3.5 * se + 1e-12);
  }
}

TEST_CASE("weighted fit recovers the radial scale of normal data in d=100") {
  Rng rng(3);
  const int d = 100, n = 10000;
  MatrixXd X = rng.normal_mat(d, n);
  VectorXd w = VectorXd::Ones(n);
  EmOptions opt;
  opt.k = 1;
  EmResult res = weighted_em_fit(X, w, opt, rng);
  REQUIRE(res.params.comps.size() == 1);
  CHECK(res.params.comps[0].omega >= 95.0);
  CHECK(res.params.comps[0].omega <= 105.0);
  CHECK(res.params.comps[0].kappa < 2.0);  // no spurious direction
  CHECK_FALSE(res.clamped);
}

TEST_CASE("weighted fit recovers known single-component parameters") {
  MixtureParams truth = single(5, VectorXd::Ones(5), 20.0, 2.0, 4.0);
  Rng rng(13);
  MatrixXd X = mixture_sample(truth, 10000, rng);
  EmOptions opt;
  opt.k = 1;
  EmResult res = weighted_em_fit(X, VectorXd::Ones(10000), opt, rng);
  const auto& c = res.params.comps[0];
  CHECK(c.kappa == Approx(20.0).epsilon(0.10));
  CHECK(c.m == Approx(2.0).epsilon(0.10));
  CHECK(c.omega == Approx(4.0).epsilon(0.10));
  CHECK(c.mu.dot(truth.comps[0].mu) > 0.99);
}

TEST_CASE("fit log-likelihood is monotone outside reinitialization steps") {
  MixtureParams truth;
  truth.dim = 3;
  for (int k = 0; k < 2; ++k) {
    VmfnmComponent c;
    c.weight = k == 0 ? 0.7 : 0.3;
    c.mu = VectorXd::Zero(3);
    c.mu[k] = 1.0;
    c.kappa = 15.0;
    c.m = 2.0;
    c.omega = 4.0 + 2.0 * k;
    truth.comps.push_back(std::move(c));
  }
  Rng rng(29);
  MatrixXd X = mixture_sample(truth, 4000, rng);
  VectorXd w = (0.3 * X.colwise().norm().transpose().array()).exp();  // uneven weights
  EmOptions opt;
  opt.k = 2;
  opt.restarts = 3;
  EmResult res = weighted_em_fit(X, w, opt, rng);
  REQUIRE(res.loglik_traj.size() >= 2);
  for (size_t i = 1; i < res.loglik_traj.size(); ++i) {
    bool after_reinit = std::count(res.reinit_iters.begin(), res.reinit_iters.end(), int(i) - 1) > 0;
    if (!after_reinit)
      CHECK(res.loglik_traj[i] >= res.loglik_traj[i - 1] - 1e-9 * std::abs(res.loglik_traj[i - 1]));
  }
  CHECK(res.loglik == Approx(res.loglik_traj.back()));
}

TEST_CASE("two separated clusters are recovered with matching masses") {
  MixtureParams truth;
  truth.dim = 2;
  VmfnmComponent a, b;
  a.weight = 0.5;
  a.mu = VectorXd(2);
  a.mu << 1, 0;
  a.kappa = 40.0;
  a.m = 8.0;
  a.omega = 9.0;
  b = a;
  b.mu = -a.mu;
  truth.comps = {a, b};
  Rng rng(41);
  MatrixXd X = mixture_sample(truth, 6000, rng);
  EmOptions opt;
  opt.k = 2;
  opt.restarts = 5;
  EmResult res = weighted_em_fit(X, VectorXd::Ones(6000), opt, rng);
  REQUIRE(res.params.comps.size() == 2);
  double w0 = res.params.comps[0].weight;
  CHECK(w0 == Approx(0.5).margin(0.05));
  CHECK(std::abs(res.params.comps[0].mu.dot(res.params.comps[1].mu) + 1.0) < 0.01);
  CHECK_FALSE(res.clamped);
}

TEST_CASE("fit input validation") {
  Rng rng(1);
  MatrixXd X = rng.normal_mat(3, 50);
  EmOptions opt;
  opt.k = 1;
  CHECK_THROWS(weighted_em_fit(X, VectorXd::Zero(50), opt, rng));           // all-zero weights
  CHECK_THROWS(weighted_em_fit(X, -VectorXd::Ones(50), opt, rng));          // negative weights
  CHECK_THROWS(weighted_em_fit(X, VectorXd::Ones(49), opt, rng));           // length mismatch
  EmOptions big;
  big.k = 6;
  CHECK_THROWS(weighted_em_fit(X, VectorXd::Ones(50), big, rng));           // n < 10K
}

TEST_CASE("restart selection prefers fits without clamp-pinned components") {
  // two tight antipodal shells fitted with surplus components: collapsed
  // components sit on near-duplicate directions or radii and pin kappa or m at
  // its clamp; the multi-restart selection must never return such a fit when
  // any restart found a clean one. Truth parameters stay far below the clamps
  // so a clean fit always exists. Run several data draws.
  Rng data_rng(59);
  for (int rep = 0; rep < 5; ++rep) {
    MixtureParams truth;
    truth.dim = 2;
    VmfnmComponent a;
    a.weight = 0.5;
    a.mu = VectorXd(2);
    a.mu << 1, 0;
    a.kappa = 80.0;
    a.m = 25.0;
    a.omega = 9.0;
    VmfnmComponent b = a;
    b.mu = -a.mu;
    truth.comps = {a, b};
    MatrixXd X = mixture_sample(truth, 400, data_rng);
    VectorXd w = VectorXd::Ones(400);
    EmOptions opt;
    opt.k = 4;  // overfit: surplus components invite spikes
    opt.restarts = 12;
    Rng em_rng(100 + rep);
    EmResult res = weighted_em_fit(X, w, opt, em_rng);
    INFO("rep " << rep << " loglik " << res.loglik);
    CHECK_FALSE(res.clamped);
    // the shells themselves must be recovered cleanly: total mass near each
    // pole is half, and no surviving component drifts to an extreme shape
    double mass_pos = 0;
    for (const auto& c : res.params.comps)
      if (c.weight > 1e-6 && c.mu[0] > 0) mass_pos += c.weight;
    CHECK(mass_pos == Approx(0.5).margin(0.08));
  }
}
