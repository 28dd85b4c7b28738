#pragma once

#include <random>

#include "pggr/common.hpp"

namespace pggr {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Named substreams used to derive child generators. Keeping the stream ids
// stable makes the stage-0 candidate pool identical across methods sharing a
// seed, which the baseline-equivalence checks rely on.
namespace stream {
constexpr uint64_t init_data = 1;
constexpr uint64_t net_init = 2;
constexpr uint64_t pool = 3;
constexpr uint64_t em = 4;
constexpr uint64_t random_select = 5;
constexpr uint64_t final_pool = 6;
constexpr uint64_t cmc_chunk = 7;
}  // namespace stream

// mt19937_64 wrapper carrying its seed so independent child streams can be
// derived by hashing rather than by engine state.
class Rng {
 public:
  explicit Rng(uint64_t seed)
      : seed_(seed), eng_(splitmix64(seed ^ 0xa02bdbf7bb3c0a7ull)) {}

  uint64_t seed() const { return seed_; }

  Rng child(uint64_t stream_id, uint64_t index = 0) const {
    uint64_t h = splitmix64(seed_ ^ 0x6a09e667f3bcc908ull);
    h = splitmix64(h ^ (stream_id + 0x9e3779b97f4a7c15ull));
    h = splitmix64(h ^ (index + 0x517cc1b727220a95ull));
    return Rng(h);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }
  double normal() { return normal_(eng_); }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(eng_);
  }
  double beta(double a, double b) {
    double x = gamma(a, 1.0), y = gamma(b, 1.0);
    PGGR_REQUIRE(x + y > 0, "beta draw degenerate");
    return x / (x + y);
  }
  uint64_t uniform_int(uint64_t n) {
    PGGR_REQUIRE(n > 0, "uniform_int(0)");
    return std::uniform_int_distribution<uint64_t>(0, n - 1)(eng_);
  }

  VectorXd normal_vec(int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  MatrixXd normal_mat(int rows, int cols) {
    MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  // k distinct indices from {0..n-1}, partial Fisher-Yates.
  std::vector<int> sample_without_replacement(int n, int k) {
    PGGR_REQUIRE(k >= 0 && k <= n, "sample_without_replacement sizes");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      int j = i + int(uniform_int(uint64_t(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_;
};

}  // namespace pggr
