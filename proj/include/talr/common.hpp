// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace talr {

/// Malformed input file or inconsistent dataset contents.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numeric routine failed to meet its accuracy target or diverged.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sentinel for "no index excluded" in ranking/histogram builders.
inline constexpr std::size_t kNoSkip = static_cast<std::size_t>(-1);

/// Dense row-major matrix of doubles. Small by design; all heavy math in this
/// library is explicit loops over this storage.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

/// a (m x k) times b (k x n).
Matrix matmul(const Matrix& a, const Matrix& b);

/// a (m x k) times b^T where b is (n x k).
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// a^T (k x m -> m x k transposed) times b (k x n); result m x n.
Matrix matmul_at(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Deterministic RNG with platform-independent derived distributions.
/// mt19937_64 output is standardized; the uniform/normal/shuffle layers here
/// avoid the implementation-defined std::distribution adaptors so that fixed
/// seeds give bit-identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); rejection sampled, n > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (cached spare).
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Number of worker threads: min(hardware, TALR_THREADS when set), >= 1.
std::size_t max_threads();

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Falls back to a direct call when a single thread suffices.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn);

namespace instrument {
// Counts per-item touches of the counting-based ranking/evaluation paths so
// tests can assert linear scaling in the database size.
extern std::atomic<std::uint64_t> item_touches;
inline void touch(std::uint64_t n) {
  item_touches.fetch_add(n, std::memory_order_relaxed);
}
inline std::uint64_t reset_touches() { return item_touches.exchange(0); }
}  // namespace instrument

}  // namespace talr
