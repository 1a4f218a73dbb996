#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>

#include "grid.hpp"
#include "rng.hpp"
#include "sample.hpp"
#include "spde.hpp"
#include "transport.hpp"

namespace fieldmc {

// Closed-form stand-in for the full chain: a level-0 base shape lifted by
// injection (so fine and coarse halves share it exactly), a mean perturbation
// shrinking like 2^{-alpha*l}, and coupled hierarchical noise shrinking like
// 2^{-beta*l/2}. Mean and variance decay rates are therefore known exactly,
// which lets budget-run behavior be checked against ground truth.
struct synthetic_params {
  double alpha = 1.0;
  double beta = 2.0;
  double amplitude = 1.0;
};

class synthetic_sampler {
 public:
  synthetic_sampler(int dim, std::int64_t base_cells, synthetic_params params)
      : dim_(dim), base_cells_(base_cells), params_(params) {}

  sample_pair operator()(int level, seed_key key) const {
    const grid_level fine(dim_, level, base_cells_);
    field hi = level_field(fine, key);
    const double fine_qoi = l2_norm(hi);
    field flux(fine, storage_kind::face);
    if (level == 0) {
      field copy = hi;
      return sample_pair{std::move(hi), std::nullopt, std::move(copy),
                         std::move(flux), fine_qoi, 0.0, {}};
    }
    const grid_level coarse(dim_, level - 1, base_cells_);
    field lo = level_field(coarse, key);
    const double coarse_qoi = l2_norm(lo);
    field correction = prolong(lo);
    for (std::size_t i = 0; i < correction.size(); ++i)
      correction[i] = hi[i] - correction[i];
    return sample_pair{std::move(hi),       std::move(lo),
                       std::move(correction), std::move(flux),
                       fine_qoi,             coarse_qoi,
                       {}};
  }

 private:
  field level_field(const grid_level& g, seed_key key) const {
    field base = gaussian_bump(grid_level(dim_, 0, base_cells_));
    for (int l = 0; l < g.level; ++l) base = prolong(base);
    const double mean_shift = std::exp2(-params_.alpha * g.level);
    const double noise_scale =
        params_.amplitude * std::exp2(-0.5 * params_.beta * g.level);
    const field noise = hierarchical_cell_noise(g, key);
    field out(g, storage_kind::cell);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = base[i] * (1.0 + mean_shift) + noise_scale * noise[i];
    return out;
  }

  int dim_;
  std::int64_t base_cells_;
  synthetic_params params_;
};

}  // namespace fieldmc
