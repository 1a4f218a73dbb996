#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fieldmc/errors.hpp"

namespace fieldmc {

struct triplet {
  std::int64_t row;
  std::int64_t col;
  double value;
};

// Compressed sparse rows built from an unordered triplet list; duplicate
// coordinates accumulate. Immutable once built.
class csr_matrix {
 public:
  csr_matrix(std::int64_t rows, std::int64_t cols, std::vector<triplet> entries)
      : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) throw structural_error("csr: empty shape");
    for (const auto& t : entries)
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw structural_error("csr: entry (" + std::to_string(t.row) + "," +
                               std::to_string(t.col) + ") outside " + std::to_string(rows) +
                               "x" + std::to_string(cols));
    std::sort(entries.begin(), entries.end(), [](const triplet& a, const triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    row_start_.assign(static_cast<std::size_t>(rows) + 1, 0);
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      double sum = 0.0;
      while (j < entries.size() && entries[j].row == entries[i].row &&
             entries[j].col == entries[i].col)
        sum += entries[j++].value;
      col_.push_back(entries[i].col);
      val_.push_back(sum);
      row_start_[static_cast<std::size_t>(entries[i].row) + 1] += 1;
      i = j;
    }
    for (std::size_t r = 0; r < static_cast<std::size_t>(rows); ++r)
      row_start_[r + 1] += row_start_[r];
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }

  void multiply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != static_cast<std::size_t>(cols_) ||
        y.size() != static_cast<std::size_t>(rows_))
      throw structural_error("csr multiply: shape mismatch");
    for (std::size_t r = 0; r < static_cast<std::size_t>(rows_); ++r) {
      double s = 0.0;
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k)
        s += val_[k] * x[static_cast<std::size_t>(col_[k])];
      y[r] = s;
    }
  }

  std::vector<double> multiply(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<std::size_t>(rows_), 0.0);
    multiply(std::span<const double>(x), std::span<double>(y));
    return y;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(static_cast<std::size_t>(std::min(rows_, cols_)), 0.0);
    for (std::size_t r = 0; r < d.size(); ++r)
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k)
        if (col_[k] == static_cast<std::int64_t>(r)) d[r] = val_[k];
    return d;
  }

 private:
  std::int64_t rows_;
  std::int64_t cols_;
  std::vector<std::size_t> row_start_;
  std::vector<std::int64_t> col_;
  std::vector<double> val_;
};

struct solve_options {
  double tol = 1e-10;               // relative to ||b||
  std::int64_t max_iterations = 0;  // 0: 10 sqrt(n) + 100
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline std::int64_t default_iterations(std::int64_t n, std::int64_t requested) {
  if (requested > 0) return requested;
  return static_cast<std::int64_t>(10.0 * std::sqrt(static_cast<double>(n))) + 100;
}

// Jacobi scaling; non-positive diagonal entries fall back to the identity.
inline std::vector<double> inverse_diagonal(const csr_matrix& a) {
  auto d = a.diagonal();
  for (auto& v : d) v = v > 0.0 ? 1.0 / v : 1.0;
  return d;
}

}  // namespace detail

// Preconditioned conjugate gradients for SPD systems, Jacobi scaling built in.
inline std::vector<double> solve_cg(const csr_matrix& a, const std::vector<double>& b,
                                    solve_options opts = {}) {
  if (a.rows() != a.cols()) throw structural_error("cg: matrix must be square");
  const auto n = static_cast<std::size_t>(a.rows());
  if (b.size() != n) throw structural_error("cg: right-hand side has wrong length");

  const double bnorm = detail::norm2(b);
  const double threshold = opts.tol * bnorm;
  std::vector<double> x(n, 0.0);
  std::vector<double> r = b;
  if (detail::norm2(r) <= threshold) return x;

  const auto minv = detail::inverse_diagonal(a);
  std::vector<double> z(n), p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = minv[i] * r[i];
  p = z;
  double rz = detail::dot(r, z);

  const std::int64_t maxit = detail::default_iterations(a.rows(), opts.max_iterations);
  double rnorm = detail::norm2(r);
  for (std::int64_t it = 1; it <= maxit; ++it) {
    a.multiply(p, q);
    const double pq = detail::dot(p, q);
    if (pq <= 0.0) throw solver_error("cg", rnorm / bnorm, it);
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
    for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * q[i];
    rnorm = detail::norm2(r);
    if (rnorm <= threshold) return x;
    for (std::size_t i = 0; i < n; ++i) z[i] = minv[i] * r[i];
    const double rz_next = detail::dot(r, z);
    const double beta = rz_next / rz;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    rz = rz_next;
  }
  throw solver_error("cg", rnorm / (bnorm > 0.0 ? bnorm : 1.0), maxit);
}

// Restarted GMRES(30) with right Jacobi preconditioning and Givens rotations.
// An initial guess whose residual already meets the tolerance is returned
// unchanged, which time steppers rely on when the operator degenerates.
inline std::vector<double> solve_gmres(const csr_matrix& a, const std::vector<double>& b,
                                       std::vector<double> x0, solve_options opts = {}) {
  if (a.rows() != a.cols()) throw structural_error("gmres: matrix must be square");
  const auto n = static_cast<std::size_t>(a.rows());
  if (b.size() != n || x0.size() != n)
    throw structural_error("gmres: vector length mismatch");

  constexpr int restart = 30;
  const double bnorm = detail::norm2(b);
  const double threshold = opts.tol * bnorm;
  const std::int64_t maxit = detail::default_iterations(a.rows(), opts.max_iterations);
  const auto minv = detail::inverse_diagonal(a);

  std::vector<double> x = std::move(x0);
  std::vector<double> r(n), w(n), tmp(n);
  std::int64_t used = 0;
  double rel = 0.0;

  while (true) {
    a.multiply(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double beta = detail::norm2(r);
    rel = beta / (bnorm > 0.0 ? bnorm : 1.0);
    if (beta <= threshold) return x;
    if (used >= maxit) throw solver_error("gmres", rel, used);

    std::vector<std::vector<double>> v;
    v.emplace_back(n);
    for (std::size_t i = 0; i < n; ++i) v[0][i] = r[i] / beta;

    // Hessenberg columns after Givens, plus the rotation pairs and rhs
    std::vector<std::vector<double>> h;
    std::vector<double> cs, sn;
    std::vector<double> g(1, beta);

    int j = 0;
    for (; j < restart && used < maxit; ++j) {
      ++used;
      for (std::size_t i = 0; i < n; ++i) tmp[i] = minv[i] * v[static_cast<std::size_t>(j)][i];
      a.multiply(tmp, w);

      h.emplace_back(static_cast<std::size_t>(j) + 2, 0.0);
      for (int i = 0; i <= j; ++i) {
        const double hij = detail::dot(w, v[static_cast<std::size_t>(i)]);
        h[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = hij;
        for (std::size_t k = 0; k < n; ++k) w[k] -= hij * v[static_cast<std::size_t>(i)][k];
      }
      const double hn = detail::norm2(w);
      h[static_cast<std::size_t>(j)][static_cast<std::size_t>(j) + 1] = hn;

      // previously accumulated rotations, then a new one to kill the subdiagonal
      auto& col = h[static_cast<std::size_t>(j)];
      for (int i = 0; i < j; ++i) {
        const double t = cs[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i)] +
                         sn[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i) + 1];
        col[static_cast<std::size_t>(i) + 1] =
            -sn[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i)] +
            cs[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i) + 1];
        col[static_cast<std::size_t>(i)] = t;
      }
      const double denom = std::hypot(col[static_cast<std::size_t>(j)], hn);
      const double c = denom > 0.0 ? col[static_cast<std::size_t>(j)] / denom : 1.0;
      const double s = denom > 0.0 ? hn / denom : 0.0;
      cs.push_back(c);
      sn.push_back(s);
      col[static_cast<std::size_t>(j)] = denom;
      col[static_cast<std::size_t>(j) + 1] = 0.0;
      g.push_back(-s * g[static_cast<std::size_t>(j)]);
      g[static_cast<std::size_t>(j)] *= c;

      const double est = std::abs(g[static_cast<std::size_t>(j) + 1]);
      if (est <= threshold || hn == 0.0) {
        ++j;
        break;
      }
      if (j + 1 < restart) {
        v.emplace_back(n);
        for (std::size_t k = 0; k < n; ++k) v[static_cast<std::size_t>(j) + 1][k] = w[k] / hn;
      }
    }

    // back substitution for y, then x += M^{-1} V y
    std::vector<double> y(static_cast<std::size_t>(j), 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < j; ++k)
        s -= h[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] *
             y[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(i)] = s / h[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < j; ++i)
      for (std::size_t k = 0; k < n; ++k)
        x[k] += minv[k] * v[static_cast<std::size_t>(i)][k] * y[static_cast<std::size_t>(i)];
  }
}

}  // namespace fieldmc
