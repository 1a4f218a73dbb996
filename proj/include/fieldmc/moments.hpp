#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"

namespace fieldmc {

// Single-pass mean / second-order accumulator with an exact pairwise merge.
// second_order_sum() is the sum of squared deviations from the running mean,
// so variance = second_order_sum / (count - 1). Merging is associative up to
// roundoff, which lets worker batches combine in any grouping.
class scalar_moments {
 public:
  void add(double x) {
    count_ += 1;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(count_);
    s2_ += d * (x - mean_);
  }

  void merge(const scalar_moments& b) {
    if (b.count_ == 0) return;
    if (count_ == 0) {
      *this = b;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(b.count_);
    const double n = na + nb;
    const double d = b.mean_ - mean_;
    mean_ += (nb / n) * d;
    s2_ += b.s2_ + (na * nb / n) * d * d;
    count_ += b.count_;
  }

  std::int64_t count() const { return count_; }
  double mean() const { return mean_; }
  double second_order_sum() const { return s2_; }

  double variance() const {
    require_two();
    return s2_ / static_cast<double>(count_ - 1);
  }
  // z^2 / (M^2 - M): this accumulator's contribution to the sampling error.
  double sampling_error_term() const {
    require_two();
    return s2_ / (static_cast<double>(count_) * static_cast<double>(count_ - 1));
  }

 private:
  void require_two() const {
    if (count_ < 2) throw insufficient_samples_error("need at least 2 samples");
  }
  std::int64_t count_ = 0;
  double mean_ = 0.0;
  double s2_ = 0.0;
};

// Componentwise moments of a cell field plus the volume-weighted scalar z2
// that drives the sample-allocation estimates. All updates are single-pass
// and merges are exact, so a run never stores individual samples.
class field_moments {
 public:
  explicit field_moments(grid_level g)
      : grid_(g),
        mean_(static_cast<std::size_t>(g.cell_total()), 0.0),
        s2_(static_cast<std::size_t>(g.cell_total()), 0.0) {}

  void add(const field& f) {
    if (f.kind() != storage_kind::cell)
      throw structural_error("field_moments: only cell fields accumulate");
    if (!(f.grid() == grid_))
      throw structural_error("field_moments: sample grid does not match accumulator grid");
    count_ += 1;
    const double inv_n = 1.0 / static_cast<double>(count_);
    const double vol = grid_.cell_volume();
    for (std::size_t k = 0; k < mean_.size(); ++k) {
      const double d = f[k] - mean_[k];
      mean_[k] += d * inv_n;
      const double inc = d * (f[k] - mean_[k]);
      s2_[k] += inc;
      z2_ += inc * vol;
    }
  }

  void merge(const field_moments& b) {
    if (!(b.grid_ == grid_))
      throw structural_error("field_moments: merge across different grids");
    if (b.count_ == 0) return;
    if (count_ == 0) {
      *this = b;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(b.count_);
    const double n = na + nb;
    const double w = na * nb / n;
    const double vol = grid_.cell_volume();
    for (std::size_t k = 0; k < mean_.size(); ++k) {
      const double d = b.mean_[k] - mean_[k];
      mean_[k] += (nb / n) * d;
      s2_[k] += b.s2_[k] + w * d * d;
      z2_ += w * d * d * vol;
    }
    z2_ += b.z2_;
    count_ += b.count_;
  }

  const grid_level& grid() const { return grid_; }
  std::int64_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& second_order() const { return s2_; }
  double z2() const { return z2_; }

  std::vector<double> variance() const {
    require_two();
    std::vector<double> v(s2_);
    for (auto& x : v) x /= static_cast<double>(count_ - 1);
    return v;
  }
  double sampling_error_term() const {
    require_two();
    return z2_ / (static_cast<double>(count_) * static_cast<double>(count_ - 1));
  }

  // Mean field as a grid object, for transfer between levels and for output.
  field mean_field() const {
    field f(grid_, storage_kind::cell);
    for (std::size_t k = 0; k < mean_.size(); ++k) f[k] = mean_[k];
    return f;
  }
  field variance_field() const {
    field f(grid_, storage_kind::cell);
    const auto v = variance();
    for (std::size_t k = 0; k < v.size(); ++k) f[k] = v[k];
    return f;
  }

 private:
  void require_two() const {
    if (count_ < 2) throw insufficient_samples_error("need at least 2 samples");
  }
  grid_level grid_;
  std::int64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> s2_;
  double z2_ = 0.0;
};

}  // namespace fieldmc
