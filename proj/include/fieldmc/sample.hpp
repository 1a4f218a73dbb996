#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "darcy.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "rng.hpp"
#include "spde.hpp"
#include "transport.hpp"

namespace fieldmc {

// One end-to-end chain: log-permeability draw, flux solve, density transport.
struct chain_config {
  int dim = 2;
  std::int64_t base_cells = 2;  // cells per axis on level 0
  std::int64_t base_steps = 8;  // midpoint steps on level 0, doubled per level
  double final_time = 0.5;
  matern_params matern{0.3, 1.0, 1.0, 0.0};
  std::vector<double> snapshot_times;  // empty: final time only
};

struct sample_pair {
  field fine_density;                   // cell field on the pair's level
  std::optional<field> coarse_density;  // one level down; absent on level 0
  field correction;  // fine_density - prolong(coarse_density); fine on level 0
  field fine_flux;   // face field that drove the fine transport stage
  double fine_qoi = 0.0;    // l2_norm(fine_density)
  double coarse_qoi = 0.0;  // l2_norm(coarse_density), 0 on level 0
  std::vector<field> snapshot_corrections;  // one per requested snapshot time
};

namespace detail {

template <class F>
auto tagged_stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const solver_error& e) {
    throw solver_error(std::string(name) + "/" + e.stage, e.residual,
                       e.iterations);
  }
}

struct chain_run {
  field density;
  field flux;
  std::vector<field> snapshots;
};

inline chain_run run_chain(const grid_level& g, const chain_config& cfg,
                           seed_key key) {
  field log_k = tagged_stage(
      "spde", [&] { return sample_grf_coupled(g, cfg.matern, key); });
  darcy_solution flow = tagged_stage(
      "darcy", [&] { return solve_darcy(cell_permeability(log_k)); });
  const std::int64_t steps = cfg.base_steps << g.level;
  transport_result moved = tagged_stage("transport", [&] {
    return advect_density(flow.velocity, gaussian_bump(g), cfg.final_time,
                          steps, cfg.snapshot_times);
  });
  return {std::move(moved.final_density), std::move(flow.velocity),
          std::move(moved.snapshots)};
}

}  // namespace detail

// Runs the chain on `level` and, above level 0, again on level - 1 with the
// same key; both halves then consume one underlying noise stream, the coarse
// hierarchical draws being a prefix of the fine ones.
inline sample_pair coupled_sample(const chain_config& cfg, int level,
                                  seed_key key) {
  const grid_level fine(cfg.dim, level, cfg.base_cells);
  detail::chain_run hi = detail::run_chain(fine, cfg, key);
  const double fine_qoi = l2_norm(hi.density);
  if (level == 0) {
    field copy = hi.density;
    return sample_pair{std::move(hi.density),   std::nullopt,
                       std::move(copy),         std::move(hi.flux),
                       fine_qoi,                0.0,
                       std::move(hi.snapshots)};
  }
  const grid_level coarse(cfg.dim, level - 1, cfg.base_cells);
  detail::chain_run lo = detail::run_chain(coarse, cfg, key);
  const double coarse_qoi = l2_norm(lo.density);
  field correction = prolong(lo.density);
  for (std::size_t i = 0; i < correction.size(); ++i)
    correction[i] = hi.density[i] - correction[i];
  std::vector<field> snapshot_corrections;
  snapshot_corrections.reserve(hi.snapshots.size());
  for (std::size_t s = 0; s < hi.snapshots.size(); ++s) {
    field delta = prolong(lo.snapshots[s]);
    for (std::size_t i = 0; i < delta.size(); ++i)
      delta[i] = hi.snapshots[s][i] - delta[i];
    snapshot_corrections.push_back(std::move(delta));
  }
  return sample_pair{std::move(hi.density),
                     std::move(lo.density),
                     std::move(correction),
                     std::move(hi.flux),
                     fine_qoi,
                     coarse_qoi,
                     std::move(snapshot_corrections)};
}

}  // namespace fieldmc
