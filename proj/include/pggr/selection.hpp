#pragma once

#include "pggr/common.hpp"
#include "pggr/surrogate.hpp"

namespace pggr {

struct SelectionConfig {
  double beta = 0.5;
  int m_add = 70;
};

struct SelectionStep {
  int pool_index = -1;
  double score = 0;
  double norm_g = 0;
  double norm_dist = 0;
};

// Min over refset columns of the Euclidean distance to each candidate column.
inline VectorXd latent_min_distances(const MatrixXd& cand, const MatrixXd& refs) {
  PGGR_REQUIRE(refs.cols() > 0, "latent distances need a nonempty reference set");
  PGGR_REQUIRE(cand.rows() == refs.rows(), "latent dimension mismatch");
  VectorXd cn = cand.colwise().squaredNorm();
  VectorXd rn = refs.colwise().squaredNorm();
  VectorXd out(cand.cols());
  // process refs in blocks to bound the temporary size
  const Eigen::Index blk = 512;
  out.setConstant(kInf);
  for (Eigen::Index j0 = 0; j0 < refs.cols(); j0 += blk) {
    Eigen::Index nb = std::min(blk, refs.cols() - j0);
    MatrixXd cross = cand.transpose() * refs.middleCols(j0, nb);  // n x nb
    for (Eigen::Index i = 0; i < cand.cols(); ++i) {
      for (Eigen::Index j = 0; j < nb; ++j) {
        double d2 = cn[i] + rn[j0 + j] - 2 * cross(i, j);
        if (d2 < out[i]) out[i] = d2;
      }
    }
  }
  return out.array().max(0.0).sqrt();
}

// Greedy selection over latent coordinates. Both the |ghat| term and the
// min-distance term are min-max normalized over the remaining pool at every
// step; ties go to the lowest pool index. Returns selected pool indices in
// pick order; per-step scores go to `trace` when provided.
inline std::vector<int> greedy_select_latent(const MatrixXd& pool_latent,
                                             const VectorXd& ghat,
                                             const MatrixXd& ref_latent,
                                             const SelectionConfig& cfg,
                                             std::vector<SelectionStep>* trace = nullptr) {
  const int n = int(pool_latent.cols());
  PGGR_REQUIRE(ghat.size() == n, "greedy: ghat/pool mismatch");
  PGGR_REQUIRE(cfg.m_add >= 1 && cfg.m_add <= n, "greedy: m_add out of range");
  PGGR_REQUIRE(cfg.beta >= 0, "greedy: beta must be nonnegative");

  VectorXd absg = ghat.array().abs();
  VectorXd mind = latent_min_distances(pool_latent, ref_latent);
  std::vector<bool> taken(n, false);
  std::vector<int> picked;
  picked.reserve(cfg.m_add);
  bool warned_degenerate = false;

  for (int step = 0; step < cfg.m_add; ++step) {
    double gmin = kInf, gmax = -kInf, dmin = kInf, dmax = -kInf;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      gmin = std::min(gmin, absg[i]);
      gmax = std::max(gmax, absg[i]);
      dmin = std::min(dmin, mind[i]);
      dmax = std::max(dmax, mind[i]);
    }
    bool g_degen = !(gmax > gmin), d_degen = !(dmax > dmin);
    if ((g_degen || d_degen) && !warned_degenerate) {
      log_info("greedy: degenerate normalization range, term zeroed");
      warned_degenerate = true;
    }
    int arg = -1;
    double best = -kInf, best_ng = 0, best_nd = 0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double ng = g_degen ? 0.0 : (absg[i] - gmin) / (gmax - gmin);
      double nd = d_degen ? 0.0 : (mind[i] - dmin) / (dmax - dmin);
      double s = -ng + cfg.beta * nd;
      if (s > best) {
        best = s;
        arg = i;
        best_ng = ng;
        best_nd = nd;
      }
    }
    PGGR_REQUIRE(arg >= 0, "greedy: no candidate available");
    taken[arg] = true;
    picked.push_back(arg);
    if (trace) trace->push_back({arg, best, best_ng, best_nd});
    // fold the new pick into the min-distance field
    const auto& sel = pool_latent.col(arg);
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double d = (pool_latent.col(i) - sel).norm();
      if (d < mind[i]) mind[i] = d;
    }
  }
  return picked;
}

// Convenience wrapper operating on raw inputs through the surrogate encoder.
inline std::vector<int> greedy_select(const MatrixXd& pool, const VectorXd& ghat,
                                      const MatrixXd& ref_inputs, const Mlp& net,
                                      const SelectionConfig& cfg,
                                      std::vector<SelectionStep>* trace = nullptr) {
  return greedy_select_latent(net.encode(pool), ghat, net.encode(ref_inputs), cfg, trace);
}

}  // namespace pggr
