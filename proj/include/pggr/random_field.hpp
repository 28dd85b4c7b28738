#pragma once

#include <Eigen/Eigenvalues>

#include "pggr/common.hpp"

namespace pggr {

// Truncated KL expansion of a 1-D field with exponential covariance
//   c(x,y) = sigma_z^2 * exp(-|x-y|/lambda_c)   on (0,1),
// eigenpairs computed by Nystrom with trapezoid weights on a uniform grid.
// Z_d(x; u) = mu_z + sum_m sqrt(nu_m) theta_m(x) u_m.
struct Kl1dField {
  int d = 0;
  double lambda_c = 0;
  double mu_z = 0, sigma_z2 = 0;
  VectorXd grid;           // Nystrom nodes (n+1 points on [0,1])
  VectorXd wts;            // trapezoid weights
  VectorXd eigvals;        // nu_m, descending, scaled by sigma_z^2
  MatrixXd eigfuncs;       // theta_m at grid nodes, (n+1) x d, orthonormal in L2
  double capture_ratio = 0;  // sum(nu) / (sigma_z^2 * |D|)

  // Nystrom extension of the eigenfunctions to arbitrary points; returns the
  // (npts x d) matrix of sqrt(nu_m) * theta_m(x_i), ready to multiply by u.
  MatrixXd modes_at(const VectorXd& xs) const {
    MatrixXd K(xs.size(), grid.size());
    for (Eigen::Index i = 0; i < xs.size(); ++i)
      K.row(i) = (-(grid.array() - xs[i]).abs() / lambda_c).exp();
    MatrixXd theta = (K * wts.asDiagonal() * eigfuncs) *
                     (eigvals / sigma_z2).cwiseInverse().asDiagonal();
    return theta * eigvals.cwiseSqrt().asDiagonal();
  }

  // Z_d at tabulated points given premultiplied modes M = modes_at(xs).
  static VectorXd field_values(const MatrixXd& modes, double mu_z, const VectorXd& u) {
    return (modes * u).array() + mu_z;
  }

  // Var[Z_d(x)] of the truncated expansion at the same tabulated points.
  static VectorXd field_variance(const MatrixXd& modes) {
    return modes.array().square().rowwise().sum();
  }
};

// mean_a/std_a describe the lognormal field exp(Z); sigma_z^2 and mu_z follow
// from moment matching. Pass mean_a=exp(1/2), std_a s.t. sigma_z2=1 for a unit
// Gaussian field (or use build_kl_1d_unit below).
inline Kl1dField build_kl_1d(int d, double lambda_c, double mean_a, double std_a,
                             int n_intervals) {
  PGGR_REQUIRE(d >= 1 && lambda_c > 0 && n_intervals >= 2, "build_kl_1d parameters");
  PGGR_REQUIRE(d <= n_intervals + 1, "requested modes exceed grid resolution");
  Kl1dField f;
  f.d = d;
  f.lambda_c = lambda_c;
  f.sigma_z2 = std::log(1 + (std_a * std_a) / (mean_a * mean_a));
  f.mu_z = std::log(mean_a) - 0.5 * f.sigma_z2;

  const int n = n_intervals + 1;
  f.grid = VectorXd::LinSpaced(n, 0.0, 1.0);
  f.wts = VectorXd::Constant(n, 1.0 / n_intervals);
  f.wts[0] *= 0.5;
  f.wts[n - 1] *= 0.5;

  MatrixXd K(n, n);
  for (int i = 0; i < n; ++i)
    K.row(i) = (-(f.grid.array() - f.grid[i]).abs() / lambda_c).exp();
  VectorXd sw = f.wts.cwiseSqrt();
  MatrixXd B = sw.asDiagonal() * K * sw.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(B);
  PGGR_REQUIRE(es.info() == Eigen::Success, "KL eigendecomposition failed");

  // eigh returns ascending order; take the top d
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return es.eigenvalues()[a] > es.eigenvalues()[b]; });
  PGGR_REQUIRE(es.eigenvalues()[order[d - 1]] > 0,
               "requested modes exceed positive spectrum");

  f.eigvals.resize(d);
  f.eigfuncs.resize(n, d);
  double total = 0;
  for (int m = 0; m < d; ++m) {
    double rho = es.eigenvalues()[order[m]];
    f.eigvals[m] = f.sigma_z2 * rho;
    total += rho;
    VectorXd v = es.eigenvectors().col(order[m]).cwiseQuotient(sw);
    // deterministic sign: first coefficient of visible magnitude positive
    for (int i = 0; i < n; ++i)
      if (std::abs(v[i]) > 1e-8) {
        if (v[i] < 0) v = -v;
        break;
      }
    f.eigfuncs.col(m) = v;
  }
  // trapezoid trace of the unit-variance kernel is exactly 1, so the captured
  // fraction is the eigenvalue sum itself
  f.capture_ratio = total;
  return f;
}

inline Kl1dField build_kl_1d_unit(int d, double lambda_c, int n_intervals) {
  // mean/std chosen so sigma_z2 = log(1+std^2/mean^2) = 1 and mu_z = -1/2...
  // then overridden to the unit zero-mean field.
  Kl1dField f = build_kl_1d(d, lambda_c, 1.0, std::sqrt(std::numbers::e - 1), n_intervals);
  PGGR_REQUIRE(std::abs(f.sigma_z2 - 1.0) < 1e-12, "unit field variance");
  f.mu_z = 0.0;
  return f;
}

// EOLE representation of a unit-variance Gaussian field on a 2-D grid with
// squared-exponential covariance exp(-||x-x'||^2 / l^2).
struct EoleField {
  int modes = 0;
  double corr_l = 0;
  MatrixXd grid_pts;  // 2 x n
  VectorXd eigvals;   // l_i descending, length modes
  MatrixXd eigvecs;   // n x modes

  MatrixXd cov_to_grid(const MatrixXd& pts) const {
    MatrixXd C(pts.cols(), grid_pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
      for (Eigen::Index j = 0; j < grid_pts.cols(); ++j) {
        double d2 = (pts.col(i) - grid_pts.col(j)).squaredNorm();
        C(i, j) = std::exp(-d2 / (corr_l * corr_l));
      }
    return C;
  }

  // basis_at(pts): (npts x modes) matrix B with f_hat(pts) = B * u.
  MatrixXd basis_at(const MatrixXd& pts) const {
    return cov_to_grid(pts) * eigvecs * eigvals.cwiseSqrt().cwiseInverse().asDiagonal();
  }

  // pointwise variance captured by the truncation (target field variance 1)
  VectorXd variance_capture(const MatrixXd& pts) const {
    return basis_at(pts).array().square().rowwise().sum();
  }
};

inline EoleField build_eole(double lo, double hi, int pts_per_axis, int modes,
                            double corr_l) {
  PGGR_REQUIRE(pts_per_axis >= 2 && corr_l > 0, "build_eole parameters");
  const int n = pts_per_axis * pts_per_axis;
  PGGR_REQUIRE(modes >= 1 && modes <= n, "EOLE modes out of range");
  EoleField f;
  f.modes = modes;
  f.corr_l = corr_l;
  f.grid_pts.resize(2, n);
  VectorXd axis = VectorXd::LinSpaced(pts_per_axis, lo, hi);
  int c = 0;
  for (int j = 0; j < pts_per_axis; ++j)
    for (int i = 0; i < pts_per_axis; ++i) {
      f.grid_pts(0, c) = axis[i];
      f.grid_pts(1, c) = axis[j];
      ++c;
    }
  MatrixXd C = f.cov_to_grid(f.grid_pts);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
  PGGR_REQUIRE(es.info() == Eigen::Success, "EOLE eigendecomposition failed");
  f.eigvals.resize(modes);
  f.eigvecs.resize(n, modes);
  for (int m = 0; m < modes; ++m) {
    int src = n - 1 - m;  // ascending -> descending
    f.eigvals[m] = es.eigenvalues()[src];
    VectorXd v = es.eigenvectors().col(src);
    for (int i = 0; i < n; ++i)
      if (std::abs(v[i]) > 1e-8) {
        if (v[i] < 0) v = -v;
        break;
      }
    f.eigvecs.col(m) = v;
  }
  PGGR_REQUIRE(f.eigvals[modes - 1] > 0, "EOLE spectrum not positive at requested modes");
  return f;
}

}  // namespace pggr
