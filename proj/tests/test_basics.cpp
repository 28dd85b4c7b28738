#include <catch2/catch_amalgamated.hpp>

#include "pggr/common.hpp"
#include "pggr/rng.hpp"
#include "pggr/special.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace pggr;
using Catch::Approx;

TEST_CASE("strfmt and sci3 format as printf would") {
  CHECK(strfmt("a=%d b=%s", 3, "x") == "a=3 b=x");
  CHECK(sci3(0.000123456) == "1.23e-04");
  CHECK(sci3(12345.6) == "1.23e+04");
}

TEST_CASE("fnv1a64 matches the reference constants") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("abc") != fnv1a64("abd"));
  CHECK(fnv1a64("abc") == fnv1a64("abc"));
}

TEST_CASE("rng streams are reproducible and independent of parent state") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());

  // children depend only on (seed, stream, index), not on what the parent drew
  Rng p1(7), p2(7);
  p2.normal_vec(50);
  Rng c1 = p1.child(3), c2 = p2.child(3);
  for (int i = 0; i < 20; ++i) REQUIRE(c1.normal() == c2.normal());

  // distinct streams and indices give distinct sequences
  Rng d1 = p1.child(3, 0), d2 = p1.child(3, 1), e1 = p1.child(4, 0);
  CHECK(d1.normal() != d2.normal());
  CHECK(p1.child(3, 0).normal() != e1.normal());
}

TEST_CASE("uniform_int and sample_without_replacement cover their range") {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) REQUIRE(r.uniform_int(7) < 7);
  auto idx = r.sample_without_replacement(10, 10);
  std::set<int> s(idx.begin(), idx.end());
  REQUIRE(s.size() == 10);
  CHECK(*s.begin() == 0);
  CHECK(*s.rbegin() == 9);
  auto few = r.sample_without_replacement(100, 5);
  CHECK(std::set<int>(few.begin(), few.end()).size() == 5);
  for (int i : few) CHECK((i >= 0 && i < 100));
  CHECK_THROWS(r.sample_without_replacement(3, 4));
}

TEST_CASE("gamma and beta draws have the right first moments") {
  Rng r(11);
  const int n = 20000;
  double sg = 0, sb = 0;
  for (int i = 0; i < n; ++i) {
    sg += r.gamma(3.0, 2.0);  // mean 6, var 12
    sb += r.beta(2.0, 2.0);   // mean 0.5, var 0.05
  }
  CHECK(sg / n == Approx(6.0).margin(3 * std::sqrt(12.0 / n)));
  CHECK(sb / n == Approx(0.5).margin(3 * std::sqrt(0.05 / n)));
}

TEST_CASE("moments returns sample mean, sd (n-1), and their ratio") {
  VectorXd v(2);
  v << 1, 3;
  auto m = moments(v);
  CHECK(m.mean == Approx(2.0));
  CHECK(m.sd == Approx(std::sqrt(2.0)));
  CHECK(m.cov == Approx(std::sqrt(2.0) / 2.0));

  VectorXd one(1);
  one << 5;
  auto m1 = moments(one);
  CHECK(m1.mean == Approx(5.0));
  CHECK(m1.sd == 0.0);
}

TEST_CASE("quantile is the ceil(p*n)-th smallest, clamped") {
  CHECK(quantile({4, 1, 3, 2}, 0.5) == 2.0);
  CHECK(quantile({4, 1, 3, 2}, 0.99) == 4.0);
  CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(quantile({7}, 0.99) == 7.0);
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[size_t(i)] = i + 1;
  CHECK(quantile(v, 0.99) == 99.0);
}

TEST_CASE("spearman_rho handles monotone data, reversals, and ties") {
  CHECK(spearman_rho({1, 2, 3, 4}, {10, 20, 30, 40}) == Approx(1.0));
  CHECK(spearman_rho({1, 2, 3, 4}, {40, 30, 20, 10}) == Approx(-1.0));
  CHECK(spearman_rho({1, 2, 2, 3}, {1, 5, 5, 9}) == Approx(1.0));
  CHECK(spearman_rho({1, 2, 3, 4}, {2, 1, 4, 3}) == Approx(0.6));
}

TEST_CASE("log_bessel_i agrees with reference values across both branches") {
  struct Case {
    double nu, x, want;
  };
  const Case cases[] = {
      {0.0, 0.5, 0.0615497191854814},   {4.0, 10.0, 7.11191214883755},
      {4.0, 2.0, -2.98126601665991},    {49.0, 300.0, 292.230141447322},
      {0.5, 1e-3, -3.67966882546913},   {249.0, 1e4, 9991.37585895223},
      {1.5, 3.0, 1.13123547074461},     {0.0, 344.006, 340.167095812755},
      {1.0, 500.0, 495.973006666268},   {12.0, 2000.0, 1995.24466385594},
  };
  for (const auto& c : cases)
    CHECK(log_bessel_i(c.nu, c.x) == Approx(c.want).epsilon(1e-12));
  CHECK(log_bessel_i(0.0, 0.0) == 0.0);
  CHECK(log_bessel_i(2.0, 0.0) == -kInf);
  CHECK_THROWS(log_bessel_i(-1.0, 1.0));
}

TEST_CASE("norm_cdf matches reference values") {
  CHECK(norm_cdf(0.0) == Approx(0.5).epsilon(1e-14));
  CHECK(norm_cdf(1.0) == Approx(0.841344746068543).epsilon(1e-12));
  CHECK(norm_cdf(-1.96) == Approx(0.0249978951482204).epsilon(1e-12));
  CHECK(norm_cdf(-6.0) == Approx(9.86587645037695e-10).epsilon(1e-9));
}

TEST_CASE("log_sum_exp is stable and handles -inf entries") {
  VectorXd v(3);
  v << 1, 2, 3;
  CHECK(log_sum_exp(v) == Approx(3.40760596444438).epsilon(1e-13));
  VectorXd big(2);
  big << 1000, 1001;
  CHECK(log_sum_exp(big) == Approx(1001 + std::log1p(std::exp(-1.0))).epsilon(1e-13));
  VectorXd inf2(2);
  inf2 << -kInf, 0.0;
  CHECK(log_sum_exp(inf2) == 0.0);
  VectorXd allinf(2);
  allinf << -kInf, -kInf;
  CHECK(log_sum_exp(allinf) == -kInf);
}

TEST_CASE("chisq_upper_tail matches reference values") {
  CHECK(chisq_upper_tail(5.0, 3.0) == Approx(0.171797144296734).epsilon(1e-10));
  CHECK(chisq_upper_tail(1.0, 1.0) == Approx(0.317310507862911).epsilon(1e-10));
  CHECK(chisq_upper_tail(30.0, 20.0) == Approx(0.0698536606994099).epsilon(1e-10));
}

TEST_CASE("log_sphere_surface matches closed forms") {
  CHECK(log_sphere_surface(2) == Approx(std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(log_sphere_surface(3) == Approx(std::log(4 * std::numbers::pi)).epsilon(1e-14));
  CHECK(log_sphere_surface(10) == Approx(3.238742779459).epsilon(1e-12));
}
