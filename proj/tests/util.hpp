#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Test-local randomness and reference statistics. Deliberately independent of
// the library: mt19937_64 is bit-specified by the standard, and the reference
// moments below are plain two-pass formulas.
namespace testutil {

class rand_stream {
 public:
  explicit rand_stream(std::uint64_t seed) : eng_(seed) {}

  // uniform in [0,1), mantissa construction, no distribution dependence
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // integer in [0, n)
  std::int64_t index(std::int64_t n) {
    return static_cast<std::int64_t>(eng_() % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 eng_;
};

struct two_pass_result {
  std::vector<double> mean;
  std::vector<double> s2;   // centered second-order sums per component
  double z2 = 0.0;          // sum_m ||x_m - mean||_w^2 with given weights
};

inline two_pass_result two_pass(const std::vector<std::vector<double>>& samples,
                                const std::vector<double>& weights) {
  two_pass_result r;
  const std::size_t n = samples.front().size();
  const std::size_t m = samples.size();
  r.mean.assign(n, 0.0);
  r.s2.assign(n, 0.0);
  for (const auto& s : samples)
    for (std::size_t k = 0; k < n; ++k) r.mean[k] += s[k];
  for (std::size_t k = 0; k < n; ++k) r.mean[k] /= static_cast<double>(m);
  for (const auto& s : samples)
    for (std::size_t k = 0; k < n; ++k) {
      const double d = s[k] - r.mean[k];
      r.s2[k] += d * d;
    }
  for (std::size_t k = 0; k < n; ++k) r.z2 += r.s2[k] * weights[k];
  return r;
}

inline double rel_err(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / scale;
}

// Dense Gaussian elimination with partial pivoting; reference solver for the
// iterative methods under test. Quadratic storage, fine for n <= a few hundred.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace testutil
