#pragma once

#include <atomic>
#include <optional>
#include <thread>

#include "pggr/ice.hpp"

namespace pggr {

enum class Method { pggr, ice_true, random, cmc };

inline Method method_from_string(const std::string& s) {
  if (s == "pggr") return Method::pggr;
  if (s == "ice_true") return Method::ice_true;
  if (s == "random") return Method::random;
  if (s == "cmc") return Method::cmc;
  PGGR_REQUIRE(false, strfmt("unknown method '%s'", s.c_str()));
  return Method::pggr;
}

inline const char* method_name(Method m) {
  switch (m) {
    case Method::pggr: return "pggr";
    case Method::ice_true: return "ice_true";
    case Method::random: return "random";
    case Method::cmc: return "cmc";
  }
  return "?";
}

struct ExperimentSummary {
  std::string method, problem;
  int n_rep = 0;  // successful runs
  std::uint64_t base_seed = 0;
  std::vector<RunResult> runs;            // per-run records, run-index order
  std::vector<double> estimates;          // convenience copy
  double mean_estimate = 0;
  double cov = 0;                         // sample CoV across runs
  bool has_reference = false;
  double reference = 0;
  double rel_error = 0;                   // |mean - ref| / ref when reference set
  double n_g = 0;                         // amortized true-model cost per run
  double mean_k_ad = 0;
  int failures = 0;                       // aborted runs, excluded from stats
  std::vector<std::string> failure_messages;
  double wall_total = 0, wall_mean = 0;
};

namespace detail {

// mean/CoV/N_g recomputed from the per-run records; used both to build a
// summary and to verify one against its stored runs
inline void summarize_runs(ExperimentSummary& s, Method m, const IceConfig& cfg) {
  const int n = int(s.runs.size());
  PGGR_REQUIRE(n >= 1, "no successful runs to summarize");
  s.n_rep = n;
  s.estimates.resize(n);
  double k_sum = 0, wall = 0;
  for (int i = 0; i < n; ++i) {
    s.estimates[size_t(i)] = s.runs[size_t(i)].estimate;
    k_sum += s.runs[size_t(i)].k_ad;
    wall += s.runs[size_t(i)].wall_seconds;
  }
  Eigen::Map<const VectorXd> est(s.estimates.data(), n);
  MomentSummary ms = moments(est);
  s.mean_estimate = ms.mean;
  s.cov = (n >= 2) ? ms.cov : 0.0;
  s.mean_k_ad = k_sum / n;
  s.wall_total = wall;
  s.wall_mean = wall / n;
  if (m == Method::pggr || m == Method::random) {
    s.n_g = double(cfg.m0) / n + double(cfg.m_add) * s.mean_k_ad;
  } else {
    double c = 0;
    for (const auto& r : s.runs) c += double(r.g_evals);
    s.n_g = c / n;
  }
  if (s.has_reference) {
    PGGR_REQUIRE(s.reference > 0, "reference probability must be positive");
    s.rel_error = std::abs(s.mean_estimate - s.reference) / s.reference;
  }
}

}  // namespace detail

// Repeated seeded trials of one method. Runs use seeds base_seed + r; the
// initial predictor is trained once from base_seed and shared, its cost
// amortized in N_g. Individual run failures are recorded and excluded; more
// than 20% failures aborts the summary.
inline ExperimentSummary repeat_runs(Method method, const Problem& prob,
                                     const IceConfig& cfg, int n_rep,
                                     std::uint64_t base_seed,
                                     std::optional<double> reference = std::nullopt,
                                     int jobs = 1) {
  PGGR_REQUIRE(n_rep >= 2, "repeat_runs needs at least two repetitions");
  PGGR_REQUIRE(method != Method::cmc, "crude Monte Carlo uses run_cmc_summary");
  PGGR_REQUIRE(jobs >= 1, "jobs must be at least 1");
  cfg.validate();

  ExperimentSummary s;
  s.method = method_name(method);
  s.problem = prob.name();
  s.base_seed = base_seed;
  if (reference) {
    s.has_reference = true;
    s.reference = *reference;
  }

  std::optional<PretrainedSurrogate> pre;
  if (method == Method::pggr || method == Method::random)
    pre = pggr_pretrain(prob, cfg, base_seed);

  std::vector<std::optional<RunResult>> results{size_t(n_rep)};
  std::vector<std::string> errors{size_t(n_rep)};
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int r = next.fetch_add(1);
      if (r >= n_rep) return;
      // per-run counting clone so the cost identity is exact under threads
      Problem local(prob.name(), prob.dim(), prob.raw());
      try {
        std::uint64_t seed = base_seed + std::uint64_t(r);
        switch (method) {
          case Method::pggr:
            results[size_t(r)] = run_pggr(local, cfg, seed, &*pre);
            break;
          case Method::random:
            results[size_t(r)] = run_random_refine(local, cfg, seed, &*pre);
            break;
          case Method::ice_true:
            results[size_t(r)] = run_ice_true(local, cfg, seed);
            break;
          case Method::cmc:
            break;
        }
      } catch (const std::exception& e) {
        errors[size_t(r)] = strfmt("run %d (seed %llu): %s", r,
                                   (unsigned long long)(base_seed + std::uint64_t(r)),
                                   e.what());
      }
      prob.charge(local.eval_count());
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> ts;
    for (int i = 0; i < std::min(jobs, n_rep); ++i) ts.emplace_back(worker);
    for (auto& t : ts) t.join();
  }

  for (int r = 0; r < n_rep; ++r) {
    if (results[size_t(r)]) {
      s.runs.push_back(std::move(*results[size_t(r)]));
    } else {
      ++s.failures;
      s.failure_messages.push_back(errors[size_t(r)]);
      log_warn(errors[size_t(r)]);
    }
  }
  PGGR_REQUIRE(s.failures * 5 <= n_rep,
               strfmt("%d of %d runs aborted (over 20%%): %s", s.failures, n_rep,
                      s.failure_messages.front().c_str()));
  detail::summarize_runs(s, method, cfg);
  return s;
}

// one crude Monte Carlo reference run wrapped in the same summary shape
inline ExperimentSummary run_cmc_summary(const Problem& prob, std::uint64_t n,
                                         std::uint64_t seed,
                                         std::optional<double> reference = std::nullopt) {
  ExperimentSummary s;
  s.method = "cmc";
  s.problem = prob.name();
  s.base_seed = seed;
  auto t0 = std::chrono::steady_clock::now();
  CmcResult c = run_cmc(prob, n, seed);
  RunResult r;
  r.method = "cmc";
  r.seed = seed;
  r.estimate = c.estimate;
  r.g_evals = n;
  r.unamortized_cost = n;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  s.runs.push_back(std::move(r));
  s.estimates = {c.estimate};
  s.n_rep = 1;
  s.mean_estimate = c.estimate;
  s.cov = c.cov_defined ? c.cov : kInf;  // analytic CoV of the single estimate
  s.n_g = double(n);
  s.wall_total = s.wall_mean = s.runs[0].wall_seconds;
  if (reference) {
    s.has_reference = true;
    s.reference = *reference;
    PGGR_REQUIRE(s.reference > 0, "reference probability must be positive");
    s.rel_error = std::abs(s.mean_estimate - s.reference) / s.reference;
  }
  return s;
}

enum class SweepParam { beta, m_add };

inline SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "beta") return SweepParam::beta;
  if (s == "m_add") return SweepParam::m_add;
  PGGR_REQUIRE(false, strfmt("unknown sweep parameter '%s'", s.c_str()));
  return SweepParam::beta;
}

// settings for one sweep point: the swept parameter takes the value, the
// other of the (beta, m_add) pair is pinned to its reference default
inline IceConfig sweep_point_config(SweepParam param, IceConfig cfg, double value) {
  if (param == SweepParam::beta) {
    cfg.m_add = 70;
    cfg.beta = value;
  } else {
    PGGR_REQUIRE(std::abs(value - std::round(value)) < 1e-9, "m_add values must be integers");
    cfg.beta = 0.5;
    cfg.m_add = int(std::llround(value));
  }
  return cfg;
}

// One summary per swept value, everything else held fixed. All points share
// base_seed so CoV comparisons are paired.
inline std::vector<ExperimentSummary> sweep(SweepParam param,
                                            const std::vector<double>& values,
                                            const Problem& prob, const IceConfig& cfg,
                                            int n_rep, std::uint64_t base_seed,
                                            std::optional<double> reference = std::nullopt,
                                            int jobs = 1) {
  PGGR_REQUIRE(!values.empty(), "sweep needs at least one value");
  std::vector<ExperimentSummary> out;
  for (double v : values)
    out.push_back(repeat_runs(Method::pggr, prob, sweep_point_config(param, cfg, v), n_rep,
                              base_seed, reference, jobs));
  return out;
}

}  // namespace pggr
