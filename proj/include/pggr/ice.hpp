#pragma once

#include <chrono>
#include <numbers>
#include <memory>
#include <string>
#include <vector>

#include "pggr/common.hpp"
#include "pggr/problems.hpp"
#include "pggr/rng.hpp"
#include "pggr/selection.hpp"
#include "pggr/special.hpp"
#include "pggr/surrogate.hpp"
#include "pggr/vmfnm.hpp"

namespace pggr {

struct IceConfig {
  double delta_target = 2.0;  // CoV target steering the smoothing schedule
  double delta_stop = 2.0;    // stopping threshold on the diagnostic CoV
  int t_max = 20;             // adaptive-stage budget
  double eps_h = 1e-10;       // lower guard for the soft indicator
  int n_c = 10000;            // candidate pool size per stage
  int m0 = 512;               // pretraining dataset size
  int n_pre = 40000;          // pretraining optimizer steps
  int n_ft = 500;             // fine-tuning steps per stage
  int m_add = 70;             // labels added per stage
  double beta = 0.5;          // diversity weight in the greedy score
  int k_mix = 1;              // mixture components
  int n_final = 10000;        // final estimator sample count
  int em_restarts = 1;
  std::vector<int> encoder, head;  // empty -> {d,40,10} / {10,20,20,1}
  Activation activation = Activation::tanh;
  bool store_traces = false;       // keep per-stage pools/labels in the result

  void validate() const {
    PGGR_REQUIRE(delta_target > 0, "delta_target must be positive");
    PGGR_REQUIRE(delta_stop > 0, "delta_stop must be positive");
    PGGR_REQUIRE(t_max >= 1, "t_max must be at least 1");
    PGGR_REQUIRE(eps_h > 0, "eps_h must be positive");
    PGGR_REQUIRE(n_c >= 2, "n_c must be at least 2");
    PGGR_REQUIRE(m0 >= 1, "m0 must be at least 1");
    PGGR_REQUIRE(n_pre >= 0 && n_ft >= 0, "training step counts must be nonnegative");
    PGGR_REQUIRE(m_add >= 1 && m_add <= n_c, "m_add must lie in [1, n_c]");
    PGGR_REQUIRE(beta >= 0, "beta must be nonnegative");
    PGGR_REQUIRE(k_mix >= 1, "k_mix must be at least 1");
    PGGR_REQUIRE(n_final >= 1, "n_final must be at least 1");
    PGGR_REQUIRE(em_restarts >= 1, "em_restarts must be at least 1");
    PGGR_REQUIRE(encoder.empty() == head.empty(),
                 "encoder and head widths must be given together");
  }

  MlpShape shape_for(int d) const {
    if (encoder.empty()) return {{d, 40, 10}, {10, 20, 20, 1}, activation};
    PGGR_REQUIRE(encoder.front() == d, "encoder input width must match problem dim");
    return {encoder, head, activation};
  }

  EmOptions em_options() const {
    EmOptions em;
    em.k = k_mix;
    em.restarts = em_restarts;
    return em;
  }
};

// ---------------------------------------------------------------------------
// core quantities

// smoothed failure indicator Phi(-g/sigma), elementwise
inline VectorXd soft_indicator(const VectorXd& ghat, double sigma) {
  PGGR_REQUIRE(sigma > 0, "sigma must be positive");
  return ghat.unaryExpr([sigma](double g) { return norm_cdf(-g / sigma); });
}

// sample CoV (n-1 denominator) of nonnegative weights; errors on zero mean
inline double cov_of_weights(const VectorXd& w) {
  PGGR_REQUIRE(w.size() >= 2, "cov_of_weights needs at least two values");
  PGGR_REQUIRE(w.allFinite() && (w.array() >= 0).all(),
               "weights must be nonnegative and finite");
  MomentSummary ms = moments(w);
  PGGR_REQUIRE(ms.mean > 0, "cov_of_weights: zero weight mass");
  return ms.cov;
}

struct SigmaSelection {
  double sigma = 0;    // chosen smoothing level
  double delta_w = 0;  // achieved CoV of the smoothed weights at sigma
};

// Smoothing-level search: minimize (CoV(W(sigma)) - delta_target)^2 over
// (0, sigma_prev] with W_i = Phi(-g_i/sigma) * lr_i. 60 log-spaced probes
// bracket the minimum, then golden-section refinement to relative width 1e-3.
inline SigmaSelection select_sigma_detail(const VectorXd& ghat, const VectorXd& lr,
                                          double sigma_prev, double delta_target) {
  PGGR_REQUIRE(sigma_prev > 0, "sigma_prev must be positive");
  PGGR_REQUIRE(ghat.size() == lr.size() && ghat.size() >= 2, "aligned inputs required");
  PGGR_REQUIRE(delta_target > 0, "delta_target must be positive");

  auto delta_at = [&](double sigma) -> double {
    VectorXd W = soft_indicator(ghat, sigma).cwiseProduct(lr);
    double mean = W.mean();
    if (!(mean > 0)) return kInf;
    double var = (W.array() - mean).square().sum() / double(W.size() - 1);
    return std::sqrt(var) / mean;
  };
  auto objective = [&](double sigma) -> double {
    double d = delta_at(sigma);
    if (!std::isfinite(d)) return kInf;
    return (d - delta_target) * (d - delta_target);
  };

  const int n_probe = 60;
  const double lo = std::log(1e-4 * sigma_prev), hi = std::log(sigma_prev);
  int best = -1;
  double best_obj = kInf;
  std::vector<double> logs(n_probe);
  for (int i = 0; i < n_probe; ++i) {
    logs[i] = lo + (hi - lo) * double(i) / double(n_probe - 1);
    double obj = objective(std::exp(logs[i]));
    if (obj < best_obj) {
      best_obj = obj;
      best = i;
    }
  }
  PGGR_REQUIRE(best >= 0,
               "smoothing search failed: no probe carries weight mass "
               "(proposal or prediction collapse)");

  // golden-section on log(sigma) inside the bracketing probes
  double a = logs[std::max(best - 1, 0)];
  double b = logs[std::min(best + 1, n_probe - 1)];
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = objective(std::exp(x1)), f2 = objective(std::exp(x2));
  while (b - a > 1e-3) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = objective(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = objective(std::exp(x2));
    }
  }
  double cand_log = (f1 <= f2) ? x1 : x2;
  double sigma = std::exp(cand_log);
  if (best_obj < objective(sigma)) sigma = std::exp(logs[best]);
  sigma = std::min(sigma, sigma_prev);
  double dw = delta_at(sigma);
  PGGR_REQUIRE(std::isfinite(dw), "smoothing search returned a collapsed level");
  return {sigma, dw};
}

inline double select_sigma(const VectorXd& ghat, const VectorXd& lr, double sigma_prev,
                           double delta_target) {
  return select_sigma_detail(ghat, lr, sigma_prev, delta_target).sigma;
}

// CoV of the diagnostic weights 1{g<=0}/max(h, eps_h); +inf when no point
// is predicted failing (not converged).
inline double stopping_diagnostic(const VectorXd& ghat, const VectorXd& h, double eps_h) {
  PGGR_REQUIRE(ghat.size() == h.size() && ghat.size() >= 2, "aligned inputs required");
  PGGR_REQUIRE(eps_h > 0, "eps_h must be positive");
  VectorXd wstar(ghat.size());
  int n_fail = 0;
  for (Eigen::Index i = 0; i < ghat.size(); ++i) {
    if (ghat[i] <= 0) {
      wstar[i] = 1.0 / std::max(h[i], eps_h);
      ++n_fail;
    } else {
      wstar[i] = 0.0;
    }
  }
  if (n_fail == 0) return kInf;
  return cov_of_weights(wstar);
}

inline VectorXd nominal_logpdf_batch(const MatrixXd& X) {
  const double c = -0.5 * double(X.rows()) * std::log(2.0 * std::numbers::pi);
  VectorXd sq = X.colwise().squaredNorm().transpose();
  return (-0.5 * sq.array() + c).matrix();
}

// cross-entropy proposal update: fit the mixture to the pool under weights
// Phi(-g/sigma_next) * p/q_t
inline MixtureParams ce_update(const MatrixXd& pool, const VectorXd& ghat,
                               const MixtureParams& q_t, double sigma_next,
                               const EmOptions& em, Rng& rng) {
  PGGR_REQUIRE(pool.cols() == ghat.size(), "pool/prediction mismatch");
  VectorXd loglr = nominal_logpdf_batch(pool) - mixture_logpdf_batch(pool, q_t);
  VectorXd W = soft_indicator(ghat, sigma_next).cwiseProduct(loglr.array().exp().matrix());
  double mass = W.sum();
  PGGR_REQUIRE(mass > 0 && W.allFinite(), "proposal update weights vanished or diverged");
  VectorXd wb = W / mass;
  double ess = 1.0 / wb.squaredNorm();
  if (ess < 5.0 * em.k)
    log_warn(strfmt("proposal update: effective sample size %.1f below %d", ess, 5 * em.k));
  return weighted_em_fit(pool, wb, em, rng).params;
}

// ---------------------------------------------------------------------------
// run records

struct StageTrace {
  MatrixXd pool;              // candidate pool of the stage
  VectorXd ghat;              // values driving sigma selection on that pool
  std::vector<int> selected;  // pool indices labeled this stage (surrogate runs)
  VectorXd labels;            // true-model values obtained this stage
};

struct RunResult {
  std::string method;
  std::uint64_t seed = 0;
  double estimate = 0;
  int k_ad = 0;                       // adaptive stages executed
  std::uint64_t g_evals = 0;          // true-model cost attributed to the run
  std::uint64_t unamortized_cost = 0; // M0 + m_add*K_ad for surrogate runs
  bool stopped_early = false;         // stopping rule vs budget exhaustion
  std::vector<double> sigma_traj;       // sigma_0 then each selected level
  std::vector<double> delta_w_traj;     // achieved weight CoV per selection
  std::vector<double> delta_star_traj;  // stopping diagnostic per stage
  MixtureParams proposal;               // final fitted proposal q_f
  std::shared_ptr<const Mlp> net;       // final predictor (surrogate runs)
  VectorXd stop_ghat, stop_h;  // pool data behind the last diagnostic value
  double final_lr_mean = 0;    // mean p/q_f over the final pool
  double wall_seconds = 0;
  std::vector<StageTrace> stages;        // populated when cfg.store_traces
  std::vector<MixtureParams> proposal_traj;  // q after each update, when store_traces
};

// pretrained initial predictor, shareable across repeated runs
struct PretrainedSurrogate {
  Dataset data;
  Mlp net;
  int m0 = 0;
};

inline PretrainedSurrogate pggr_pretrain(const Problem& prob, const IceConfig& cfg,
                                         std::uint64_t seed) {
  cfg.validate();
  Rng base(seed);
  Rng data_rng = base.child(stream::init_data);
  PretrainedSurrogate pre;
  pre.m0 = cfg.m0;
  MatrixXd X0 = data_rng.normal_mat(prob.dim(), cfg.m0);
  VectorXd y0 = prob.eval_batch(X0);
  for (int i = 0; i < cfg.m0; ++i)
    PGGR_REQUIRE(pre.data.add(X0.col(i), y0[i], 0), "duplicate pretraining draw");
  Rng net_rng = base.child(stream::net_init);
  pre.net = Mlp::make(cfg.shape_for(prob.dim()), net_rng);
  TrainOptions topt;
  topt.iters = cfg.n_pre;
  train(pre.net, X0, y0, topt);
  return pre;
}

namespace detail {

// shared driver for the surrogate-based runs; random_selection switches the
// refinement rule from greedy latent selection to uniform choice
inline RunResult run_surrogate_driver(const Problem& prob, const IceConfig& cfg,
                                      std::uint64_t seed, const PretrainedSurrogate* shared,
                                      bool random_selection) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::uint64_t evals0 = prob.eval_count();
  Rng base(seed);

  RunResult res;
  res.method = random_selection ? "random" : "pggr";
  res.seed = seed;

  PretrainedSurrogate own;
  if (!shared) {
    own = pggr_pretrain(prob, cfg, seed);
    shared = &own;
  }
  PGGR_REQUIRE(shared->m0 == cfg.m0, "pretrained state does not match config");
  Dataset data = shared->data;
  Mlp net = shared->net;
  const std::uint64_t evals_pretrain = prob.eval_count() - evals0;

  const int d = prob.dim();
  MixtureParams q = MixtureParams::standard_normal(d);
  double sigma = 0;

  auto stage_guard = [](int t, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      raise(strfmt("stage %d: %s", t, e.what()));
    }
  };

  // stage 0: initial smoothing level and first proposal from a nominal pool
  stage_guard(0, [&] {
    Rng pool_rng = base.child(stream::pool, 0);
    MatrixXd C = mixture_sample(q, cfg.n_c, pool_rng);
    VectorXd ghat = net.predict(C);
    std::vector<double> absg(ghat.size());
    for (Eigen::Index i = 0; i < ghat.size(); ++i) absg[size_t(i)] = std::abs(ghat[i]);
    double sigma0 = std::max(1.0, quantile(absg, 0.99));
    res.sigma_traj.push_back(sigma0);
    SigmaSelection sel =
        select_sigma_detail(ghat, VectorXd::Ones(cfg.n_c), sigma0, cfg.delta_target);
    sigma = sel.sigma;
    res.sigma_traj.push_back(sigma);
    res.delta_w_traj.push_back(sel.delta_w);
    Rng em_rng = base.child(stream::em, 0);
    q = ce_update(C, ghat, q, sigma, cfg.em_options(), em_rng);
    if (cfg.store_traces) {
      res.stages.push_back({std::move(C), std::move(ghat), {}, {}});
      res.proposal_traj.push_back(q);
    }
  });

  // adaptive refinement loop
  bool stopped = false;
  for (int t = 1; t <= cfg.t_max && !stopped; ++t) {
    stage_guard(t, [&] {
      Rng pool_rng = base.child(stream::pool, uint64_t(t));
      MatrixXd C = mixture_sample(q, cfg.n_c, pool_rng);
      VectorXd ghat_sel = net.predict(C);

      // drop exact repeats of already-labeled inputs before selection
      std::vector<int> keep;
      keep.reserve(size_t(cfg.n_c));
      for (int j = 0; j < cfg.n_c; ++j)
        if (!data.contains(C.col(j))) keep.push_back(j);
      PGGR_REQUIRE(int(keep.size()) >= cfg.m_add,
                   "candidate pool exhausted by duplicate labels");

      std::vector<int> chosen;
      if (random_selection) {
        Rng sel_rng = base.child(stream::random_select, uint64_t(t));
        for (int r : sel_rng.sample_without_replacement(int(keep.size()), cfg.m_add))
          chosen.push_back(keep[size_t(r)]);
      } else {
        MatrixXd cand(d, keep.size());
        VectorXd gk(keep.size());
        for (size_t j = 0; j < keep.size(); ++j) {
          cand.col(Eigen::Index(j)) = C.col(keep[j]);
          gk[Eigen::Index(j)] = ghat_sel[keep[j]];
        }
        SelectionConfig scfg;
        scfg.beta = cfg.beta;
        scfg.m_add = cfg.m_add;
        for (int r : greedy_select(cand, gk, data.inputs_matrix(), net, scfg))
          chosen.push_back(keep[size_t(r)]);
      }

      VectorXd labels(cfg.m_add);
      for (int j = 0; j < cfg.m_add; ++j) {
        labels[j] = prob.eval(C.col(chosen[size_t(j)]));
        PGGR_REQUIRE(data.add(C.col(chosen[size_t(j)]), labels[j], t),
                     "selected candidate already labeled");
      }

      TrainOptions topt;
      topt.iters = cfg.n_ft;
      topt.freeze_last_encoder = true;
      train(net, data.inputs_matrix(), data.labels_vector(), topt);

      VectorXd ghat = net.predict(C);
      VectorXd lr =
          (nominal_logpdf_batch(C) - mixture_logpdf_batch(C, q)).array().exp().matrix();
      SigmaSelection sel = select_sigma_detail(ghat, lr, sigma, cfg.delta_target);
      sigma = sel.sigma;
      res.sigma_traj.push_back(sigma);
      res.delta_w_traj.push_back(sel.delta_w);

      VectorXd h = soft_indicator(ghat, sigma);
      double dstar = stopping_diagnostic(ghat, h, cfg.eps_h);
      res.delta_star_traj.push_back(dstar);
      res.k_ad = t;
      res.stop_ghat = ghat;
      res.stop_h = h;
      if (cfg.store_traces)
        res.stages.push_back({C, ghat, chosen, labels});

      if (dstar <= cfg.delta_stop) {
        stopped = true;  // q_f = q_t
      } else {
        Rng em_rng = base.child(stream::em, uint64_t(t));
        q = ce_update(C, ghat, q, sigma, cfg.em_options(), em_rng);
        if (cfg.store_traces) res.proposal_traj.push_back(q);
      }
    });
  }
  res.stopped_early = stopped;

  // final estimator from q_f with the frozen predictor
  stage_guard(res.k_ad + 1, [&] {
    Rng fin_rng = base.child(stream::final_pool);
    MatrixXd F = mixture_sample(q, cfg.n_final, fin_rng);
    VectorXd gF = net.predict(F);
    VectorXd lr = (nominal_logpdf_batch(F) - mixture_logpdf_batch(F, q)).array().exp().matrix();
    double acc = 0;
    for (Eigen::Index i = 0; i < gF.size(); ++i)
      if (gF[i] <= 0) acc += lr[i];
    res.estimate = acc / double(cfg.n_final);
    res.final_lr_mean = lr.mean();
  });

  res.proposal = q;
  res.net = std::make_shared<Mlp>(std::move(net));
  res.unamortized_cost = std::uint64_t(cfg.m0) + std::uint64_t(cfg.m_add) * res.k_ad;
  const std::uint64_t measured = prob.eval_count() - evals0;
  PGGR_REQUIRE(measured == evals_pretrain + std::uint64_t(cfg.m_add) * res.k_ad,
               "evaluation-count identity violated");
  res.g_evals = res.unamortized_cost;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace detail

inline RunResult run_pggr(const Problem& prob, const IceConfig& cfg, std::uint64_t seed,
                          const PretrainedSurrogate* shared = nullptr) {
  return detail::run_surrogate_driver(prob, cfg, seed, shared, false);
}

inline RunResult run_random_refine(const Problem& prob, const IceConfig& cfg,
                                   std::uint64_t seed,
                                   const PretrainedSurrogate* shared = nullptr) {
  return detail::run_surrogate_driver(prob, cfg, seed, shared, true);
}

// adaptive importance sampling with the true model in every stage
inline RunResult run_ice_true(const Problem& prob, const IceConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::uint64_t evals0 = prob.eval_count();
  Rng base(seed);

  RunResult res;
  res.method = "ice_true";
  res.seed = seed;

  const int d = prob.dim();
  MixtureParams q = MixtureParams::standard_normal(d);
  double sigma = 0;
  int pools = 0;

  auto stage_guard = [](int t, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      raise(strfmt("stage %d: %s", t, e.what()));
    }
  };

  stage_guard(0, [&] {
    Rng pool_rng = base.child(stream::pool, 0);
    MatrixXd C = mixture_sample(q, cfg.n_c, pool_rng);
    VectorXd g = prob.eval_batch(C);
    ++pools;
    std::vector<double> absg(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) absg[size_t(i)] = std::abs(g[i]);
    double sigma0 = std::max(1.0, quantile(absg, 0.99));
    res.sigma_traj.push_back(sigma0);
    SigmaSelection sel =
        select_sigma_detail(g, VectorXd::Ones(cfg.n_c), sigma0, cfg.delta_target);
    sigma = sel.sigma;
    res.sigma_traj.push_back(sigma);
    res.delta_w_traj.push_back(sel.delta_w);
    Rng em_rng = base.child(stream::em, 0);
    q = ce_update(C, g, q, sigma, cfg.em_options(), em_rng);
    if (cfg.store_traces) {
      res.stages.push_back({C, g, {}, g});
      res.proposal_traj.push_back(q);
    }
  });

  bool stopped = false;
  for (int t = 1; t <= cfg.t_max && !stopped; ++t) {
    stage_guard(t, [&] {
      Rng pool_rng = base.child(stream::pool, uint64_t(t));
      MatrixXd C = mixture_sample(q, cfg.n_c, pool_rng);
      VectorXd g = prob.eval_batch(C);
      ++pools;
      VectorXd lr = (nominal_logpdf_batch(C) - mixture_logpdf_batch(C, q)).array().exp().matrix();
      SigmaSelection sel = select_sigma_detail(g, lr, sigma, cfg.delta_target);
      sigma = sel.sigma;
      res.sigma_traj.push_back(sigma);
      res.delta_w_traj.push_back(sel.delta_w);
      VectorXd h = soft_indicator(g, sigma);
      double dstar = stopping_diagnostic(g, h, cfg.eps_h);
      res.delta_star_traj.push_back(dstar);
      res.k_ad = t;
      res.stop_ghat = g;
      res.stop_h = h;
      if (cfg.store_traces) res.stages.push_back({C, g, {}, g});
      if (dstar <= cfg.delta_stop) {
        stopped = true;
      } else {
        Rng em_rng = base.child(stream::em, uint64_t(t));
        q = ce_update(C, g, q, sigma, cfg.em_options(), em_rng);
        if (cfg.store_traces) res.proposal_traj.push_back(q);
      }
    });
  }
  res.stopped_early = stopped;

  stage_guard(res.k_ad + 1, [&] {
    Rng fin_rng = base.child(stream::final_pool);
    MatrixXd F = mixture_sample(q, cfg.n_final, fin_rng);
    VectorXd gF = prob.eval_batch(F);
    VectorXd lr = (nominal_logpdf_batch(F) - mixture_logpdf_batch(F, q)).array().exp().matrix();
    double acc = 0;
    for (Eigen::Index i = 0; i < gF.size(); ++i)
      if (gF[i] <= 0) acc += lr[i];
    res.estimate = acc / double(cfg.n_final);
    res.final_lr_mean = lr.mean();
  });

  res.proposal = q;
  const std::uint64_t measured = prob.eval_count() - evals0;
  PGGR_REQUIRE(measured == std::uint64_t(cfg.n_c) * pools + std::uint64_t(cfg.n_final),
               "evaluation-count identity violated");
  res.g_evals = measured;
  res.unamortized_cost = measured;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

struct CmcResult {
  double estimate = 0;
  double cov = kInf;      // sqrt((1-p)/(p N)); +inf when no failures were seen
  bool cov_defined = false;
  std::uint64_t n = 0;
  std::uint64_t failures = 0;
};

// crude Monte Carlo under the nominal density, fixed-size chunks so the
// result only depends on (seed, chunk index)
inline CmcResult run_cmc(const Problem& prob, std::uint64_t n, std::uint64_t seed) {
  PGGR_REQUIRE(n >= 1, "run_cmc needs at least one sample");
  Rng base(seed);
  const std::uint64_t chunk = 100000;
  CmcResult res;
  res.n = n;
  std::uint64_t done = 0, ci = 0;
  const int d = prob.dim();
  while (done < n) {
    const int m = int(std::min(chunk, n - done));
    Rng crng = base.child(stream::cmc_chunk, ci++);
    MatrixXd X = crng.normal_mat(d, m);
    for (int j = 0; j < m; ++j)
      if (prob.eval(X.col(j)) <= 0) ++res.failures;
    done += std::uint64_t(m);
  }
  res.estimate = double(res.failures) / double(n);
  if (res.failures > 0) {
    res.cov = std::sqrt((1.0 - res.estimate) / (res.estimate * double(n)));
    res.cov_defined = true;
  } else {
    log_warn("crude Monte Carlo saw no failures; CoV undefined");
  }
  return res;
}

}  // namespace pggr
