#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/linalg.hpp"

namespace fieldmc {

struct darcy_solution {
  field pressure;  // one value per cell
  field velocity;  // normal components on faces, oriented along +x / +y
};

namespace detail {

inline double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

inline void check_permeability(const field& perm) {
  if (perm.kind() != storage_kind::cell)
    throw structural_error("darcy: permeability must live on cells");
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (!(perm[i] > 0.0) || !std::isfinite(perm[i]))
      throw structural_error("darcy: permeability must be positive and finite");
}

}  // namespace detail

// Two-point flux scheme on the uniform grid. The flow is driven from the high
// wall (x_d = 1, prescribed influx) to the floor (x_d = 0, prescribed
// pressure); the remaining walls are sealed. Cell sources allow manufactured
// problems; the production case uses zero sources, zero floor pressure, and
// influx -1.
inline darcy_solution solve_darcy_general(const field& perm,
                                          const std::vector<double>& cell_source,
                                          const std::vector<double>& floor_pressure,
                                          const std::vector<double>& top_influx,
                                          solve_options opts = {1e-10, 0}) {
  detail::check_permeability(perm);
  const grid_level& g = perm.grid();
  const std::int64_t n = g.cells_per_axis();
  const auto walls = static_cast<std::size_t>(g.dim == 1 ? 1 : n);
  if (cell_source.size() != static_cast<std::size_t>(g.cell_total()))
    throw structural_error("darcy: source array must have one entry per cell");
  if (floor_pressure.size() != walls || top_influx.size() != walls)
    throw structural_error("darcy: boundary arrays must have one entry per wall cell");

  const double h = g.mesh_width();
  std::vector<triplet> t;
  std::vector<double> rhs(static_cast<std::size_t>(g.cell_total()), 0.0);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = cell_source[i] * g.cell_volume();

  if (g.dim == 1) {
    for (std::int64_t i = 0; i + 1 < n; ++i) {
      const double tr = detail::harmonic(perm[i], perm[i + 1]) / h;
      t.push_back({i, i, tr});
      t.push_back({i + 1, i + 1, tr});
      t.push_back({i, i + 1, -tr});
      t.push_back({i + 1, i, -tr});
    }
    const double tb = 2.0 * perm[0] / h;
    t.push_back({0, 0, tb});
    rhs[0] += tb * floor_pressure[0];
    rhs[static_cast<std::size_t>(n - 1)] -= top_influx[0];
  } else {
    // |F| = h and the two-point distance is h, so interior transmissibility
    // is just the harmonic mean; the wall half-distance doubles it
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix + 1 < n; ++ix) {
        const std::int64_t a = cell_index(g, ix, iy);
        const std::int64_t b = cell_index(g, ix + 1, iy);
        const double tr = detail::harmonic(perm[a], perm[b]);
        t.push_back({a, a, tr});
        t.push_back({b, b, tr});
        t.push_back({a, b, -tr});
        t.push_back({b, a, -tr});
      }
    for (std::int64_t iy = 0; iy + 1 < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix) {
        const std::int64_t a = cell_index(g, ix, iy);
        const std::int64_t b = cell_index(g, ix, iy + 1);
        const double tr = detail::harmonic(perm[a], perm[b]);
        t.push_back({a, a, tr});
        t.push_back({b, b, tr});
        t.push_back({a, b, -tr});
        t.push_back({b, a, -tr});
      }
    for (std::int64_t ix = 0; ix < n; ++ix) {
      const std::int64_t a = cell_index(g, ix, 0);
      const double tb = 2.0 * perm[a];
      t.push_back({a, a, tb});
      rhs[static_cast<std::size_t>(a)] += tb * floor_pressure[static_cast<std::size_t>(ix)];
      const std::int64_t top = cell_index(g, ix, n - 1);
      rhs[static_cast<std::size_t>(top)] -= top_influx[static_cast<std::size_t>(ix)] * h;
    }
  }

  csr_matrix a(g.cell_total(), g.cell_total(), std::move(t));
  auto p = solve_cg(a, rhs, opts);

  field pressure(g, storage_kind::cell);
  for (std::size_t i = 0; i < pressure.size(); ++i) pressure[i] = p[i];

  field velocity(g, storage_kind::face);
  if (g.dim == 1) {
    velocity[0] = 2.0 * perm[0] * (floor_pressure[0] - p[0]) / h;
    for (std::int64_t i = 1; i < n; ++i)
      velocity[static_cast<std::size_t>(i)] =
          detail::harmonic(perm[i - 1], perm[i]) *
          (p[static_cast<std::size_t>(i - 1)] - p[static_cast<std::size_t>(i)]) / h;
    velocity[static_cast<std::size_t>(n)] = top_influx[0];
  } else {
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 1; ix < n; ++ix) {
        const std::int64_t a2 = cell_index(g, ix - 1, iy);
        const std::int64_t b2 = cell_index(g, ix, iy);
        velocity[face_index_x(g, ix, iy)] =
            detail::harmonic(perm[a2], perm[b2]) * (pressure[a2] - pressure[b2]) / h;
      }
    for (std::int64_t ix = 0; ix < n; ++ix) {
      velocity[face_index_y(g, ix, 0)] =
          2.0 * perm[cell_index(g, ix, 0)] *
          (floor_pressure[static_cast<std::size_t>(ix)] - pressure[cell_index(g, ix, 0)]) / h;
      velocity[face_index_y(g, ix, n)] = top_influx[static_cast<std::size_t>(ix)];
      for (std::int64_t iy = 1; iy < n; ++iy) {
        const std::int64_t a2 = cell_index(g, ix, iy - 1);
        const std::int64_t b2 = cell_index(g, ix, iy);
        velocity[face_index_y(g, ix, iy)] =
            detail::harmonic(perm[a2], perm[b2]) * (pressure[a2] - pressure[b2]) / h;
      }
    }
  }
  return {std::move(pressure), std::move(velocity)};
}

inline darcy_solution solve_darcy(const field& perm, solve_options opts = {1e-10, 0}) {
  detail::check_permeability(perm);
  const grid_level& g = perm.grid();
  const auto walls = static_cast<std::size_t>(g.dim == 1 ? 1 : g.cells_per_axis());
  return solve_darcy_general(perm, std::vector<double>(static_cast<std::size_t>(g.cell_total()), 0.0),
                             std::vector<double>(walls, 0.0), std::vector<double>(walls, -1.0),
                             opts);
}

// Net outflux per cell volume; zero (up to solver tolerance) away from sources.
inline field cell_divergence(const field& velocity) {
  if (velocity.kind() != storage_kind::face)
    throw structural_error("cell_divergence: needs a face field");
  const grid_level& g = velocity.grid();
  const std::int64_t n = g.cells_per_axis();
  const double h = g.mesh_width();
  field div(g, storage_kind::cell);
  if (g.dim == 1) {
    for (std::int64_t i = 0; i < n; ++i)
      div[static_cast<std::size_t>(i)] =
          (velocity[static_cast<std::size_t>(i + 1)] - velocity[static_cast<std::size_t>(i)]) / h;
  } else {
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix)
        div[cell_index(g, ix, iy)] =
            (velocity[face_index_x(g, ix + 1, iy)] - velocity[face_index_x(g, ix, iy)] +
             velocity[face_index_y(g, ix, iy + 1)] - velocity[face_index_y(g, ix, iy)]) /
            h;
  }
  return div;
}

}  // namespace fieldmc
