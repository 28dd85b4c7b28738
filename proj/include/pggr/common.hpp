#pragma once

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pggr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] inline void raise(const std::string& msg) { throw std::runtime_error(msg); }

// Always-on runtime contract check (survives NDEBUG builds).
#define PGGR_REQUIRE(cond, msg)                                              \
  do {                                                                       \
    if (!(cond)) ::pggr::raise(std::string("pggr: ") + (msg));               \
  } while (0)

inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[512];
  vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

// 3 significant digits in scientific notation, table style.
inline std::string sci3(double x) { return strfmt("%.2e", x); }

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

inline LogLevel& log_threshold() {
  static LogLevel lv = [] {
    const char* e = std::getenv("PGGR_LOG");
    if (!e) return LogLevel::warn;
    std::string_view s(e);
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    if (s == "error") return LogLevel::error;
    return LogLevel::warn;
  }();
  return lv;
}

inline void log_msg(LogLevel lv, const std::string& msg) {
  if (lv < log_threshold()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[pggr %s] %s\n", names[static_cast<int>(lv)], msg.c_str());
}
inline void log_info(const std::string& m) { log_msg(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::warn, m); }

inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct MomentSummary {
  double mean = 0;
  double sd = 0;
  double cov = 0;  // sd / mean
};

// Sample moments with n-1 variance denominator; cov is +inf when mean <= 0.
inline MomentSummary moments(const VectorXd& v) {
  PGGR_REQUIRE(v.size() >= 1, "moments of empty vector");
  MomentSummary s;
  s.mean = v.mean();
  if (v.size() > 1) {
    double ss = (v.array() - s.mean).square().sum();
    s.sd = std::sqrt(ss / double(v.size() - 1));
  }
  s.cov = s.mean > 0 ? s.sd / s.mean : kInf;
  return s;
}

inline double quantile(std::vector<double> v, double p) {
  PGGR_REQUIRE(!v.empty() && p >= 0 && p <= 1, "quantile domain");
  double t = std::ceil(p * double(v.size()));
  size_t idx = t < 1 ? 0 : std::min(v.size() - 1, size_t(t) - 1);
  std::nth_element(v.begin(), v.begin() + idx, v.end());
  return v[idx];
}

inline std::vector<double> ranks_with_ties(const std::vector<double>& v) {
  size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = 0.5 * double(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  PGGR_REQUIRE(x.size() == y.size() && x.size() >= 2, "spearman inputs");
  auto rx = ranks_with_ties(x), ry = ranks_with_ties(y);
  size_t n = x.size();
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(n);
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  PGGR_REQUIRE(sxx > 0 && syy > 0, "spearman: constant ranks");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace pggr
