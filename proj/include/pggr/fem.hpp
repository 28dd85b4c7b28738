#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <mutex>

#include "pggr/common.hpp"
#include "pggr/random_field.hpp"

namespace pggr {

// In-place Thomas algorithm; diag/rhs are overwritten, solution lands in rhs.
inline void thomas_solve(VectorXd& lower, VectorXd& diag, VectorXd& upper, VectorXd& rhs) {
  const Eigen::Index n = diag.size();
  for (Eigen::Index i = 1; i < n; ++i) {
    double w = lower[i - 1] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (Eigen::Index i = n - 2; i >= 0; --i)
    rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

// -(a(x) y')' = 1 on (0,1), y(0)=0, natural Neumann a y'(1)=0, P1 elements on
// a uniform mesh, a(x) = exp(Z_d(x;u)) frozen per element at midpoints.
class Diffusion1dSolver {
 public:
  Diffusion1dSolver(int n_intervals, const Kl1dField& field)
      : n_(n_intervals), h_(1.0 / n_intervals), mu_z_(field.mu_z) {
    VectorXd mids(n_);
    for (int e = 0; e < n_; ++e) mids[e] = (e + 0.5) * h_;
    modes_mid_ = field.modes_at(mids);
  }

  // y_h(1) for coefficient exp(mu_z + modes*u)
  double solve_y1(const VectorXd& u) const {
    VectorXd a = ((modes_mid_ * u).array() + mu_z_).exp();
    PGGR_REQUIRE((a.array() > 0).all(), "diffusion coefficient must be positive");
    VectorXd diag(n_), lower(n_ - 1), upper(n_ - 1), rhs(n_);
    for (int i = 0; i < n_; ++i) {
      // unknown i corresponds to mesh node i+1
      double left = a[i] / h_;
      double right = (i + 1 < n_) ? a[i + 1] / h_ : 0.0;
      diag[i] = left + right;
      rhs[i] = (i + 1 < n_) ? h_ : 0.5 * h_;
      if (i + 1 < n_) {
        lower[i] = -a[i + 1] / h_;
        upper[i] = -a[i + 1] / h_;
      }
    }
    thomas_solve(lower, diag, upper, rhs);
    return rhs[n_ - 1];
  }

  int intervals() const { return n_; }

 private:
  int n_;
  double h_, mu_z_;
  MatrixXd modes_mid_;
};

// dy/dt - nu y_xx + gamma y^3 = f(x) on (0,1)x(0,T], zero Dirichlet and zero
// initial data; backward Euler in time, centered differences in space, Newton
// per step. QoI: space-time average of y over (0.4,0.6)x(0,T], trapezoid in
// both directions (the t=0 slice is identically zero).
class SemilinearHeatSolver {
 public:
  SemilinearHeatSolver(int nx, int nt, double T, double nu, double gamma, double sigma_f,
                       const Kl1dField& field, double obs_lo = 0.4, double obs_hi = 0.6)
      : nx_(nx), nt_(nt), T_(T), nu_(nu), gamma_(gamma), sigma_f_(sigma_f) {
    h_ = 1.0 / (nx + 1);
    dt_ = T / nt;
    VectorXd xi(nx);
    for (int i = 0; i < nx; ++i) xi[i] = (i + 1) * h_;
    modes_ = field.modes_at(xi);
    varz_ = Kl1dField::field_variance(modes_);
    f0_ = (5.0 * (-80.0 * (xi.array() - 0.5).square()).exp()).matrix();

    // exact integral of the P1 interpolant over the observation window,
    // accumulated into nodal weights (boundary nodes carry zero solution)
    VectorXd wfull = VectorXd::Zero(nx + 2);
    for (int k = 0; k <= nx; ++k) {
      double x0 = k * h_, x1 = (k + 1) * h_;
      double lo = std::max(x0, obs_lo), hi = std::min(x1, obs_hi);
      if (hi <= lo) continue;
      double t0 = (lo - x0) / h_, t1 = (hi - x0) / h_;
      double len = hi - lo;
      wfull[k] += len * (1 - 0.5 * (t0 + t1));
      wfull[k + 1] += len * 0.5 * (t0 + t1);
    }
    obs_w_ = wfull.segment(1, nx) / (obs_hi - obs_lo);
  }

  VectorXd source_for(const VectorXd& u) const {
    return (f0_.array() *
            (sigma_f_ * (modes_ * u).array() - 0.5 * sigma_f_ * sigma_f_ * varz_.array())
                .exp())
        .matrix();
  }

  // time-space average QoI for a given source vector
  double solve_q(const VectorXd& f) const {
    VectorXd y = VectorXd::Zero(nx_);
    const double c = nu_ / (h_ * h_);
    double qsum = 0;  // interior trapezoid accumulation over time
    for (int step = 1; step <= nt_; ++step) {
      VectorXd yk = y;
      bool done = false;
      for (int it = 0; it < 12; ++it) {
        VectorXd lap = -2.0 * yk;
        lap.head(nx_ - 1) += yk.tail(nx_ - 1);
        lap.tail(nx_ - 1) += yk.head(nx_ - 1);
        VectorXd resid =
            (yk - y) / dt_ - c * lap + gamma_ * yk.array().cube().matrix() - f;
        if (resid.lpNorm<Eigen::Infinity>() < 1e-8) {
          done = true;
          break;
        }
        VectorXd diag =
            (1.0 / dt_ + 2.0 * c + 3.0 * gamma_ * yk.array().square()).matrix();
        VectorXd lower = VectorXd::Constant(nx_ - 1, -c);
        VectorXd upper = lower;
        thomas_solve(lower, diag, upper, resid);
        yk -= resid;
      }
      PGGR_REQUIRE(done, strfmt("Newton failed to converge at time step %d", step));
      y = yk;
      qsum += (step == nt_ ? 0.5 : 1.0) * obs_w_.dot(y);
    }
    return qsum * dt_ / T_;
  }

  double solve_q_for_u(const VectorXd& u) const { return solve_q(source_for(u)); }

 private:
  int nx_, nt_;
  double T_, nu_, gamma_, sigma_f_, h_, dt_;
  MatrixXd modes_;
  VectorXd varz_, f0_, obs_w_;
};

// -div(kappa grad T) = Q 1_A on (-0.5,0.5)^2, T=0 on the bottom edge, zero
// Neumann elsewhere. Structured P1 triangulation, kappa piecewise constant
// per element from the EOLE field at centroids. QoI: mean of T over B.
class Heat2dSolver {
 public:
  Heat2dSolver(int nsub, const EoleField& field, double a_kappa, double b_kappa,
               double q_source = 2000.0,
               double ax0 = 0.2, double ax1 = 0.3, double bx0 = -0.3, double bx1 = -0.2)
      : nsub_(nsub), a_kappa_(a_kappa), b_kappa_(b_kappa) {
    const int n1 = nsub + 1;
    n_nodes_ = n1 * n1;
    VectorXd axis = VectorXd::LinSpaced(n1, -0.5, 0.5);
    pts_.resize(2, n_nodes_);
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n1; ++i) {
        pts_(0, j * n1 + i) = axis[i];
        pts_(1, j * n1 + i) = axis[j];
      }
    const int ne = 2 * nsub * nsub;
    tri_.resize(3, ne);
    int e = 0;
    for (int j = 0; j < nsub; ++j)
      for (int i = 0; i < nsub; ++i) {
        int v00 = j * n1 + i, v10 = j * n1 + i + 1;
        int v01 = (j + 1) * n1 + i, v11 = (j + 1) * n1 + i + 1;
        tri_.col(e++) = Eigen::Vector3i(v00, v10, v11);
        tri_.col(e++) = Eigen::Vector3i(v00, v11, v01);
      }

    // geometry: per-element unit-kappa stiffness, areas, centroids
    ke_.resize(ne);
    VectorXd areas(ne);
    MatrixXd cents(2, ne);
    for (int t = 0; t < ne; ++t) {
      Eigen::Vector2d p0 = pts_.col(tri_(0, t)), p1 = pts_.col(tri_(1, t)),
                      p2 = pts_.col(tri_(2, t));
      Eigen::Matrix2d B;
      B.col(0) = p1 - p0;
      B.col(1) = p2 - p0;
      double det = B.determinant();
      areas[t] = 0.5 * std::abs(det);
      Eigen::Matrix<double, 2, 3> gref;
      gref << -1, 1, 0, -1, 0, 1;
      Eigen::Matrix<double, 2, 3> g = B.inverse().transpose() * gref;
      ke_[t] = areas[t] * (g.transpose() * g);
      cents.col(t) = (p0 + p1 + p2) / 3.0;
    }

    // Dirichlet on the bottom edge only
    std::vector<int> free_of_node(n_nodes_, -1);
    for (int v = 0; v < n_nodes_; ++v)
      if (pts_(1, v) > -0.5 + 1e-12) {
        free_of_node[v] = n_free_;
        ++n_free_;
      }
    free_of_node_ = std::move(free_of_node);

    // load vector and observation weights from centroid membership
    load_ = VectorXd::Zero(n_free_);
    double b_area = 0;
    obs_nodes_.clear();
    for (int t = 0; t < ne; ++t) {
      double cx = cents(0, t), cy = cents(1, t);
      if (cx > ax0 && cx < ax1 && cy > ax0 && cy < ax1) {
        for (int a = 0; a < 3; ++a) {
          int fi = free_of_node_[tri_(a, t)];
          if (fi >= 0) load_[fi] += q_source * areas[t] / 3.0;
        }
      }
      if (cx > bx0 && cx < bx1 && cy > bx0 && cy < bx1) {
        for (int a = 0; a < 3; ++a) obs_nodes_.push_back({tri_(a, t), areas[t] / 3.0});
        b_area += areas[t];
      }
    }
    PGGR_REQUIRE(b_area > 0, "observation region contains no elements");
    for (auto& [node, w] : obs_nodes_) w /= b_area;

    eole_basis_ = field.basis_at(cents);  // ne x modes

    // fixed sparsity pattern with precomputed scatter slots
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(size_t(ne) * 9);
    for (int t = 0; t < ne; ++t)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          int fa = free_of_node_[tri_(a, t)], fb = free_of_node_[tri_(b, t)];
          if (fa >= 0 && fb >= 0) trips.push_back({fa, fb, 1.0});
        }
    A_.resize(n_free_, n_free_);
    A_.setFromTriplets(trips.begin(), trips.end());
    A_.makeCompressed();
    slot_.assign(size_t(ne) * 9, -1);
    for (int t = 0; t < ne; ++t)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          int fa = free_of_node_[tri_(a, t)], fb = free_of_node_[tri_(b, t)];
          if (fa < 0 || fb < 0) continue;
          // CSC lookup of entry (fa, fb): column fb
          int lo = int(A_.outerIndexPtr()[fb]), hi = int(A_.outerIndexPtr()[fb + 1]);
          const auto* inner = A_.innerIndexPtr();
          int pos = int(std::lower_bound(inner + lo, inner + hi, fa) - inner);
          PGGR_REQUIRE(pos < hi && inner[pos] == fa, "sparsity slot lookup failed");
          slot_[(size_t(t) * 3 + a) * 3 + b] = pos;
        }
    solver_.analyzePattern(A_);
  }

  int n_elements() const { return int(tri_.cols()); }
  int modes() const { return int(eole_basis_.cols()); }

  // mean temperature over B for the EOLE coefficient vector u
  double solve_mean_temp(const VectorXd& u) const {
    VectorXd kappa = (a_kappa_ + b_kappa_ * (eole_basis_ * u).array()).exp();
    PGGR_REQUIRE(kappa.allFinite() && (kappa.array() > 0).all(),
                 "conductivity must be positive");
    std::lock_guard<std::mutex> lock(mu_);
    double* vals = A_.valuePtr();
    std::fill(vals, vals + A_.nonZeros(), 0.0);
    const int ne = n_elements();
    for (int t = 0; t < ne; ++t) {
      const auto& ke = ke_[t];
      double k = kappa[t];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          int s = slot_[(size_t(t) * 3 + a) * 3 + b];
          if (s >= 0) vals[s] += k * ke(a, b);
        }
    }
    solver_.factorize(A_);
    PGGR_REQUIRE(solver_.info() == Eigen::Success, "sparse factorization failed");
    VectorXd T = solver_.solve(load_);
    double acc = 0;
    for (const auto& [node, w] : obs_nodes_) {
      int fi = free_of_node_[node];
      if (fi >= 0) acc += w * T[fi];
    }
    return acc;
  }

 private:
  int nsub_, n_nodes_ = 0, n_free_ = 0;
  double a_kappa_, b_kappa_;
  MatrixXd pts_;
  Eigen::Matrix3Xi tri_;
  std::vector<Eigen::Matrix3d> ke_;
  std::vector<int> free_of_node_;
  VectorXd load_;
  std::vector<std::pair<int, double>> obs_nodes_;
  MatrixXd eole_basis_;
  mutable Eigen::SparseMatrix<double> A_;
  std::vector<int> slot_;
  mutable Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
  mutable std::mutex mu_;
};

}  // namespace pggr
