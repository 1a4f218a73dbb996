#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fieldmc/errors.hpp"

namespace fieldmc {

struct level_point {
  int level;
  double value;
};

struct fit_result {
  double exponent;   // decay (or growth) rate per level, base 2
  double intercept;  // log2 of the value extrapolated to level 0
};

// Least squares of log2(value) = intercept - exponent * level. Points with
// non-positive values carry no information on a log scale and are skipped.
inline fit_result fit_exponent(const std::vector<level_point>& points) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::int64_t n = 0;
  for (const auto& p : points) {
    if (!(p.value > 0.0)) continue;
    const double x = static_cast<double>(p.level);
    const double y = std::log2(p.value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw insufficient_samples_error("fit_exponent: fewer than 2 usable points");
  const double nn = static_cast<double>(n);
  const double den = sxx - sx * sx / nn;
  if (den <= 0.0)
    throw insufficient_samples_error("fit_exponent: all usable points on one level");
  const double slope = (sxy - sx * sy / nn) / den;
  const double exponent = -slope;
  const double intercept = sy / nn + exponent * (sx / nn);
  return {exponent, intercept};
}

// Squared extrapolated discretization error. correction_norms[i] is the norm
// of the mean level correction on level i+1; the largest geometric
// extrapolation to the finest level wins. Empty input (single-level data)
// reports zero, callers must treat that round as bias-blind.
inline double bias_estimate(const std::vector<double>& correction_norms, double alpha) {
  if (alpha <= 0.0) throw structural_error("bias_estimate: decay rate must be positive");
  if (correction_norms.empty()) return 0.0;
  const int top = static_cast<int>(correction_norms.size());
  const double den = std::exp2(alpha) - 1.0;
  double worst = 0.0;
  for (int i = 0; i < top; ++i) {
    const int level = i + 1;
    const double term =
        correction_norms[i] / den * std::exp2(-alpha * static_cast<double>(top - level));
    worst = std::max(worst, term);
  }
  return worst * worst;
}

struct level_alloc {
  double z2;             // volume-weighted sum of squared deviations
  std::int64_t samples;  // M_l accumulated so far
  double cost;           // mean seconds per sample on this level
};

// Total statistical error of the level sum: sum of z2 / (M^2 - M).
inline double sampling_error(const std::vector<level_alloc>& levels) {
  double err = 0.0;
  for (const auto& lv : levels) {
    if (lv.samples < 2)
      throw insufficient_samples_error("sampling_error: level with fewer than 2 samples");
    const double m = static_cast<double>(lv.samples);
    err += lv.z2 / (m * m - m);
  }
  return err;
}

// Cost-optimal per-level sample counts that push the sampling error below
// theta * eps^2: M_l proportional to sqrt(V_l / C_l). The ceil is shaved by a
// few ulps so targets that land exactly on an integer do not round up.
inline std::vector<std::int64_t> optimal_samples(double eps, double theta,
                                                 const std::vector<level_alloc>& levels) {
  if (!(eps > 0.0)) throw structural_error("optimal_samples: tolerance must be positive");
  if (!(theta > 0.0 && theta < 1.0))
    throw structural_error("optimal_samples: error split must lie in (0,1)");
  double cross = 0.0;
  std::vector<double> v(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& lv = levels[l];
    if (lv.samples < 2)
      throw insufficient_samples_error("optimal_samples: level with fewer than 2 samples");
    if (!(lv.cost > 0.0)) throw structural_error("optimal_samples: cost must be positive");
    if (lv.z2 < 0.0) throw structural_error("optimal_samples: negative z2");
    v[l] = lv.z2 / static_cast<double>(lv.samples - 1);
    cross += std::sqrt(v[l] * lv.cost);
  }
  const double budget = theta * eps * eps;
  std::vector<std::int64_t> out(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const double x = std::sqrt(v[l] / levels[l].cost) * cross / budget;
    const double shaved = x - 8.0 * std::abs(x) * std::numeric_limits<double>::epsilon();
    out[l] = static_cast<std::int64_t>(std::ceil(shaved));
  }
  return out;
}

inline std::int64_t sample_increment(std::int64_t optimal, std::int64_t have) {
  return std::max<std::int64_t>(optimal - have, 0);
}

}  // namespace fieldmc
