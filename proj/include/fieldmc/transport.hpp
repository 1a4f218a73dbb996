#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/linalg.hpp"

namespace fieldmc {

// Release profile: a Gaussian plume high in the domain, wide across the flow
// and narrow along it, evaluated at cell centers.
inline field gaussian_bump(const grid_level& g) {
  field rho(g, storage_kind::cell);
  const std::int64_t n = g.cells_per_axis();
  if (g.dim == 1) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = cell_center(g, i) - 0.8;
      rho[static_cast<std::size_t>(i)] = std::exp(-d * d / 0.01);
    }
  } else {
    for (std::int64_t iy = 0; iy < n; ++iy) {
      const double dy = cell_center(g, iy) - 0.8;
      for (std::int64_t ix = 0; ix < n; ++ix) {
        const double dx = cell_center(g, ix) - 0.5;
        rho[cell_index(g, ix, iy)] = std::exp(-dx * dx / 0.09 - dy * dy / 0.01);
      }
    }
  }
  return rho;
}

struct transport_result {
  field final_density;
  std::vector<field> snapshots;  // one per requested time, in request order
};

// Finite-volume upwind transport of a cell density through a stationary face
// velocity field, advanced with the implicit midpoint rule. Inflow carries
// zero density; outflow is donor-valued, so the scheme only moves mass that
// is actually there. Each linear solve starts from the previous step, which
// makes a vanishing velocity an exact no-op.
inline transport_result advect_density(const field& velocity, const field& initial,
                                       double final_time, std::int64_t steps,
                                       const std::vector<double>& snapshot_times = {},
                                       solve_options opts = {1e-8, 0}) {
  if (velocity.kind() != storage_kind::face)
    throw structural_error("transport: velocity must live on faces");
  if (initial.kind() != storage_kind::cell)
    throw structural_error("transport: density must live on cells");
  if (!(velocity.grid() == initial.grid()))
    throw structural_error("transport: velocity and density grids differ");
  if (steps < 1) throw structural_error("transport: need at least one step");
  if (!(final_time > 0.0)) throw structural_error("transport: final time must be positive");

  const grid_level& g = initial.grid();
  const std::int64_t n = g.cells_per_axis();
  const double h = g.mesh_width();
  const double tau = final_time / static_cast<double>(steps);

  // upwind flux matrix: row = balance equation, column = donor cell
  std::vector<triplet> flux;
  auto interior = [&](std::int64_t left, std::int64_t right, double phi) {
    const std::int64_t donor = phi >= 0.0 ? left : right;
    flux.push_back({left, donor, phi});
    flux.push_back({right, donor, -phi});
  };
  auto outflow = [&](std::int64_t cell, double outward) {
    if (outward > 0.0) flux.push_back({cell, cell, outward});
  };
  if (g.dim == 1) {
    for (std::int64_t i = 1; i < n; ++i)
      interior(i - 1, i, velocity[static_cast<std::size_t>(i)]);
    outflow(0, -velocity[0]);
    outflow(n - 1, velocity[static_cast<std::size_t>(n)]);
  } else {
    for (std::int64_t iy = 0; iy < n; ++iy) {
      for (std::int64_t ix = 1; ix < n; ++ix)
        interior(cell_index(g, ix - 1, iy), cell_index(g, ix, iy),
                 velocity[face_index_x(g, ix, iy)] * h);
      outflow(cell_index(g, 0, iy), -velocity[face_index_x(g, 0, iy)] * h);
      outflow(cell_index(g, n - 1, iy), velocity[face_index_x(g, n, iy)] * h);
    }
    for (std::int64_t ix = 0; ix < n; ++ix) {
      for (std::int64_t iy = 1; iy < n; ++iy)
        interior(cell_index(g, ix, iy - 1), cell_index(g, ix, iy),
                 velocity[face_index_y(g, ix, iy)] * h);
      outflow(cell_index(g, ix, 0), -velocity[face_index_y(g, ix, 0)] * h);
      outflow(cell_index(g, ix, n - 1), velocity[face_index_y(g, ix, n)] * h);
    }
  }

  const double vol = g.cell_volume();
  std::vector<triplet> forward = flux, backward = flux;
  for (auto& t : forward) t.value *= 0.5 * tau;
  for (auto& t : backward) t.value *= -0.5 * tau;
  for (std::int64_t i = 0; i < g.cell_total(); ++i) {
    forward.push_back({i, i, vol});
    backward.push_back({i, i, vol});
  }
  csr_matrix lhs(g.cell_total(), g.cell_total(), std::move(forward));
  csr_matrix rhs_op(g.cell_total(), g.cell_total(), std::move(backward));

  // map each snapshot to the first step boundary at or after its time
  std::vector<std::int64_t> snap_step(snapshot_times.size());
  for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
    const double t = snapshot_times[i];
    if (!(t > 0.0) || t > final_time + 1e-12)
      throw structural_error("transport: snapshot time " + std::to_string(t) +
                             " outside (0, " + std::to_string(final_time) + "]");
    auto s = static_cast<std::int64_t>(std::ceil(t / tau - 1e-9));
    snap_step[i] = std::min(std::max<std::int64_t>(s, 1), steps);
  }

  std::vector<double> rho(initial.values().begin(), initial.values().end());
  std::vector<double> work(rho.size());
  transport_result out{field(g, storage_kind::cell), {}};
  out.snapshots.reserve(snapshot_times.size());
  for (std::size_t i = 0; i < snapshot_times.size(); ++i)
    out.snapshots.emplace_back(g, storage_kind::cell);

  for (std::int64_t step = 1; step <= steps; ++step) {
    rhs_op.multiply(rho, work);
    rho = solve_gmres(lhs, work, std::move(rho), opts);
    for (std::size_t i = 0; i < snap_step.size(); ++i)
      if (snap_step[i] == step)
        for (std::size_t k = 0; k < rho.size(); ++k) out.snapshots[i][k] = rho[k];
  }
  for (std::size_t k = 0; k < rho.size(); ++k) out.final_density[k] = rho[k];
  return out;
}

}  // namespace fieldmc
