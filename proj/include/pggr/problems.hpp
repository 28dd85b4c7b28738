#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>

#include "pggr/common.hpp"
#include "pggr/fem.hpp"
#include "pggr/random_field.hpp"

namespace pggr {

// series system with four separated failure branches in the standard plane
inline double four_mode_g(const VectorXd& u) {
  PGGR_REQUIRE(u.size() == 2 && u.allFinite(), "four_mode expects a finite 2-vector");
  const double s2 = std::numbers::sqrt2;
  const double quad = 0.1 * (u[0] - u[1]) * (u[0] - u[1]);
  const double b1 = quad - (u[0] + u[1]) / s2 + 5.0;
  const double b2 = quad + (u[0] + u[1]) / s2 + 5.0;
  const double b3 = (u[0] - u[1]) + 7.0 / s2 + 2.0;
  const double b4 = (u[1] - u[0]) + 7.0 / s2 + 2.0;
  return std::min(std::min(b1, b2), std::min(b3, b4));
}

// A named limit-state function with an atomic call tally. Failure is g <= 0.
class Problem {
 public:
  Problem(std::string name, int dim, std::function<double(const VectorXd&)> g)
      : name_(std::move(name)), dim_(dim), g_(std::move(g)) {}

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }

  double eval(const VectorXd& u) const {
    PGGR_REQUIRE(u.size() == dim_ && u.allFinite(),
                 strfmt("%s expects a finite %d-vector", name_.c_str(), dim_));
    count_.fetch_add(1, std::memory_order_relaxed);
    return g_(u);
  }

  // columns of U are inputs; each column counts one evaluation
  VectorXd eval_batch(const MatrixXd& U) const {
    VectorXd g(U.cols());
    for (Eigen::Index i = 0; i < U.cols(); ++i) g[i] = eval(U.col(i));
    return g;
  }

  std::uint64_t eval_count() const { return count_.load(std::memory_order_relaxed); }

  // underlying map, for building per-run counting clones that share the solver
  const std::function<double(const VectorXd&)>& raw() const { return g_; }
  void charge(std::uint64_t n) const { count_.fetch_add(n, std::memory_order_relaxed); }

 private:
  std::string name_;
  int dim_;
  std::function<double(const VectorXd&)> g_;
  mutable std::atomic<std::uint64_t> count_{0};
};

using ProblemPtr = std::shared_ptr<const Problem>;
using ParamMap = std::map<std::string, double>;

namespace detail {

inline double take_param(ParamMap& m, const std::string& key, double defv) {
  auto it = m.find(key);
  if (it == m.end()) return defv;
  double v = it->second;
  m.erase(it);
  return v;
}

inline int take_int_param(ParamMap& m, const std::string& key, int defv) {
  double v = take_param(m, key, defv);
  PGGR_REQUIRE(std::abs(v - std::round(v)) < 1e-9,
               strfmt("parameter '%s' must be an integer", key.c_str()));
  return int(std::llround(v));
}

}  // namespace detail

// Factory for the benchmark problems. `params` holds numeric overrides for
// field/mesh settings; unknown keys are rejected.
inline ProblemPtr make_problem(const std::string& name, ParamMap params = {}) {
  using detail::take_param;
  using detail::take_int_param;
  ProblemPtr out;
  if (name == "four_mode") {
    out = std::make_shared<Problem>(name, 2, four_mode_g);
  } else if (name == "diffusion1d") {
    int dim = take_int_param(params, "dim", 100);
    double lambda_c = take_param(params, "lambda_c", 0.01);
    double mean_a = take_param(params, "mean_a", 1.0);
    double std_a = take_param(params, "std_a", 0.1);
    int kl_grid = take_int_param(params, "kl_grid", 512);
    int mesh = take_int_param(params, "mesh", 512);
    double thr = take_param(params, "threshold", 0.535);
    Kl1dField field = build_kl_1d(dim, lambda_c, mean_a, std_a, kl_grid);
    auto solver = std::make_shared<Diffusion1dSolver>(mesh, field);
    out = std::make_shared<Problem>(
        name, dim, [solver, thr](const VectorXd& u) { return thr - solver->solve_y1(u); });
  } else if (name == "semilinear_heat") {
    int dim = take_int_param(params, "dim", 100);
    double lambda_c = take_param(params, "lambda_c", 0.1);
    int nx = take_int_param(params, "nx", 256);
    int nt = take_int_param(params, "nt", 200);
    double horizon = take_param(params, "horizon", 1.0);
    double nu = take_param(params, "nu", 0.02);
    double gamma = take_param(params, "gamma", 1.0);
    double sigma_f = take_param(params, "sigma_f", 0.6);
    // field grid defaults to the coarsest (reference) solver grid so mesh
    // refinement studies keep the field identity fixed
    int kl_grid = take_int_param(params, "kl_grid", 257);
    double thr = take_param(params, "threshold", 2.4);
    Kl1dField field = build_kl_1d_unit(dim, lambda_c, kl_grid);
    auto solver = std::make_shared<SemilinearHeatSolver>(nx, nt, horizon, nu, gamma,
                                                         sigma_f, field);
    out = std::make_shared<Problem>(name, dim, [solver, thr](const VectorXd& u) {
      return thr - solver->solve_q_for_u(u);
    });
  } else if (name == "heat2d") {
    int modes = take_int_param(params, "modes", 100);
    int nsub = take_int_param(params, "nsub", 110);
    double corr_l = take_param(params, "corr_l", 0.2);
    int eole_grid = take_int_param(params, "eole_grid", 11);
    double mu_kappa = take_param(params, "mu_kappa", 1.0);
    double sigma_kappa = take_param(params, "sigma_kappa", 0.3);
    double q_source = take_param(params, "q_source", 2000.0);
    double thr = take_param(params, "threshold", 8.5);
    double b_kappa = std::sqrt(std::log(1 + (sigma_kappa * sigma_kappa) / (mu_kappa * mu_kappa)));
    double a_kappa = std::log(mu_kappa) - 0.5 * b_kappa * b_kappa;
    EoleField field = build_eole(-0.5, 0.5, eole_grid, modes, corr_l);
    auto solver = std::make_shared<Heat2dSolver>(nsub, field, a_kappa, b_kappa, q_source);
    out = std::make_shared<Problem>(name, modes, [solver, thr](const VectorXd& u) {
      return thr - solver->solve_mean_temp(u);
    });
  } else {
    PGGR_REQUIRE(false, strfmt("unknown problem '%s'", name.c_str()));
  }
  PGGR_REQUIRE(params.empty(),
               strfmt("unknown parameter '%s' for problem '%s'",
                      params.begin()->first.c_str(), name.c_str()));
  return out;
}

}  // namespace pggr
