#pragma once

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_bessel.h>

#include <climits>
#include <numbers>

#include "pggr/common.hpp"

namespace pggr {

namespace detail {
inline const int gsl_handler_off = [] {
  gsl_set_error_handler_off();
  return 0;
}();
}  // namespace detail

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// log I_nu(x) for nu >= 0, x >= 0. Power series where it converges in a few
// terms, otherwise GSL's exponentially scaled Bessel (safe up to huge x).
inline double log_bessel_i(double nu, double x) {
  PGGR_REQUIRE(nu >= 0 && x >= 0, "log_bessel_i domain");
  if (x == 0) return nu == 0 ? 0.0 : -kInf;
  double q = 0.25 * x * x;
  if (q < nu + 1) {
    double lead = nu * std::log(0.5 * x) - std::lgamma(nu + 1);
    double term = 1.0, s = 1.0;
    for (int k = 1; k < 500; ++k) {
      term *= q / (double(k) * (nu + double(k)));
      s += term;
      if (term < 1e-17 * s) break;
    }
    return lead + std::log(s);
  }
  gsl_sf_result r;
  int status;
  if (nu == std::floor(nu) && nu <= double(INT_MAX)) {
    // the fractional-order routine yields NaN for integer nu at large x
    status = gsl_sf_bessel_In_scaled_e(int(nu), x, &r);
  } else {
    status = gsl_sf_bessel_Inu_scaled_e(nu, x, &r);
  }
  PGGR_REQUIRE(status == 0 && std::isfinite(r.val) && r.val > 0,
               strfmt("scaled Bessel I failed: nu=%g x=%g status=%d", nu, x, status));
  return std::log(r.val) + x;
}

// log surface area of the unit sphere S^{d-1}.
inline double log_sphere_surface(int d) {
  PGGR_REQUIRE(d >= 1, "log_sphere_surface dim");
  return std::numbers::ln2 + 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d);
}

inline double log_sum_exp(const VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (or a stray inf) dominates
  return m + std::log((v.array() - m).exp().sum());
}

inline double chisq_upper_tail(double stat, double dof) {
  return gsl_cdf_chisq_Q(stat, dof);
}

}  // namespace pggr
