#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/linalg.hpp"
#include "fieldmc/rng.hpp"

namespace fieldmc {

// Log-permeability model: a stationary Gaussian field with Matern covariance,
// sampled by solving a reaction-diffusion equation driven by white noise.
struct matern_params {
  double corr_length;
  double smoothness;
  double sigma;
  double variance_scale = 0.0;  // 0: closed-form normalization; else used as-is
};

// The sampler realizes exactly one smoothness per dimension (the operator is
// applied once, unfractionally); reject anything else instead of silently
// producing a field with the wrong law.
inline void validate_matern(const matern_params& p, int dim) {
  if (dim != 1 && dim != 2) throw structural_error("matern: dimension must be 1 or 2");
  if (!(p.corr_length > 0.0)) throw structural_error("matern: correlation length must be positive");
  if (!(p.sigma > 0.0)) throw structural_error("matern: sigma must be positive");
  if (p.variance_scale < 0.0) throw structural_error("matern: variance scale must be >= 0");
  const double zeta = (p.smoothness + static_cast<double>(dim) / 2.0) / 2.0;
  if (std::abs(zeta - 1.0) > 1e-12)
    throw structural_error("matern: smoothness " + std::to_string(p.smoothness) +
                           " not realizable in " + std::to_string(dim) +
                           "d (needs one operator application)");
}

inline double matern_kappa(const matern_params& p, int dim) {
  validate_matern(p, dim);
  return std::sqrt(2.0 * p.smoothness) / p.corr_length;
}

inline double matern_covariance(const matern_params& p, int dim, double r) {
  validate_matern(p, dim);
  if (r < 0.0) throw structural_error("matern: negative distance");
  if (r == 0.0) return p.sigma * p.sigma;
  const double nu = p.smoothness;
  const double kr = matern_kappa(p, dim) * r;
  return p.sigma * p.sigma * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) *
         std::pow(kr, nu) * std::cyl_bessel_k(nu, kr);
}

// Pointwise variance the unscaled operator inversion would produce on the
// whole space; dividing by it makes the sill equal sigma^2.
inline double matern_natural_variance(const matern_params& p, int dim) {
  const double nu = p.smoothness;
  const double d = static_cast<double>(dim);
  const double kappa = matern_kappa(p, dim);
  return std::tgamma(nu) /
         (std::tgamma(nu + d / 2.0) * std::pow(4.0 * 3.14159265358979323846, d / 2.0) *
          std::pow(kappa, 2.0 * nu));
}

// --- bilinear/linear element machinery on the uniform grid ---

inline std::vector<double> lumped_mass(const grid_level& g) {
  std::vector<double> m(static_cast<std::size_t>(g.node_total()), 0.0);
  const double share = g.cell_volume() / std::pow(2.0, g.dim);
  const std::int64_t n = g.cells_per_axis();
  if (g.dim == 1) {
    for (std::int64_t i = 0; i < n; ++i) {
      m[static_cast<std::size_t>(i)] += share;
      m[static_cast<std::size_t>(i + 1)] += share;
    }
  } else {
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix)
        for (int b = 0; b < 2; ++b)
          for (int a = 0; a < 2; ++a)
            m[static_cast<std::size_t>(node_index(g, ix + a, iy + b))] += share;
  }
  return m;
}

namespace detail {

// local corner order: (0,0), (1,0), (1,1), (0,1)
inline const double* stiffness_2d() {
  static const double s[16] = {
      4.0 / 6, -1.0 / 6, -2.0 / 6, -1.0 / 6,  //
      -1.0 / 6, 4.0 / 6, -1.0 / 6, -2.0 / 6,  //
      -2.0 / 6, -1.0 / 6, 4.0 / 6, -1.0 / 6,  //
      -1.0 / 6, -2.0 / 6, -1.0 / 6, 4.0 / 6,
  };
  return s;
}

inline const double* mass_2d() {
  static const double m[16] = {
      4.0 / 36, 2.0 / 36, 1.0 / 36, 2.0 / 36,  //
      2.0 / 36, 4.0 / 36, 2.0 / 36, 1.0 / 36,  //
      1.0 / 36, 2.0 / 36, 4.0 / 36, 2.0 / 36,  //
      2.0 / 36, 1.0 / 36, 2.0 / 36, 4.0 / 36,
  };
  return m;
}

inline void element_nodes(const grid_level& g, std::int64_t ix, std::int64_t iy,
                          std::int64_t out[4]) {
  out[0] = node_index(g, ix, iy);
  out[1] = node_index(g, ix + 1, iy);
  out[2] = node_index(g, ix + 1, iy + 1);
  out[3] = node_index(g, ix, iy + 1);
}

}  // namespace detail

inline std::vector<double> apply_consistent_mass(const grid_level& g,
                                                 const std::vector<double>& x) {
  if (x.size() != static_cast<std::size_t>(g.node_total()))
    throw structural_error("apply_consistent_mass: wrong vector length");
  std::vector<double> y(x.size(), 0.0);
  const std::int64_t n = g.cells_per_axis();
  const double h = g.mesh_width();
  if (g.dim == 1) {
    for (std::int64_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(i + 1);
      y[a] += h / 6.0 * (2.0 * x[a] + x[b]);
      y[b] += h / 6.0 * (x[a] + 2.0 * x[b]);
    }
  } else {
    const double* me = detail::mass_2d();
    const double h2 = h * h;
    std::int64_t nd[4];
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix) {
        detail::element_nodes(g, ix, iy, nd);
        for (int r = 0; r < 4; ++r) {
          double s = 0.0;
          for (int c = 0; c < 4; ++c) s += me[4 * r + c] * x[static_cast<std::size_t>(nd[c])];
          y[static_cast<std::size_t>(nd[r])] += h2 * s;
        }
      }
  }
  return y;
}

// Essential-condition mask for one axis combination: bit a of the combo puts
// homogeneous conditions on both walls normal to axis a.
inline std::vector<char> dirichlet_nodes(const grid_level& g, int combo) {
  const int ncombo = 1 << g.dim;
  if (combo < 0 || combo >= ncombo)
    throw structural_error("dirichlet_nodes: combo out of range");
  std::vector<char> mask(static_cast<std::size_t>(g.node_total()), 0);
  const std::int64_t n = g.cells_per_axis();
  if (g.dim == 1) {
    if (combo & 1) {
      mask[0] = 1;
      mask[static_cast<std::size_t>(n)] = 1;
    }
    return mask;
  }
  for (std::int64_t iy = 0; iy <= n; ++iy)
    for (std::int64_t ix = 0; ix <= n; ++ix) {
      const bool hit_x = (combo & 1) && (ix == 0 || ix == n);
      const bool hit_y = (combo & 2) && (iy == 0 || iy == n);
      if (hit_x || hit_y) mask[static_cast<std::size_t>(node_index(g, ix, iy))] = 1;
    }
  return mask;
}

// kappa2 * M + S over the nodes, with masked rows and columns eliminated
// symmetrically (unit diagonal, so the operator stays SPD).
inline csr_matrix assemble_reaction_diffusion(const grid_level& g, double kappa2, int combo) {
  const auto mask = dirichlet_nodes(g, combo);
  std::vector<triplet> t;
  const std::int64_t n = g.cells_per_axis();
  const double h = g.mesh_width();
  if (g.dim == 1) {
    const double se[4] = {1.0 / h, -1.0 / h, -1.0 / h, 1.0 / h};
    const double me[4] = {2.0 * h / 6.0, h / 6.0, h / 6.0, 2.0 * h / 6.0};
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t nd[2] = {i, i + 1};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          if (mask[static_cast<std::size_t>(nd[r])] || mask[static_cast<std::size_t>(nd[c])])
            continue;
          t.push_back({nd[r], nd[c], kappa2 * me[2 * r + c] + se[2 * r + c]});
        }
    }
  } else {
    const double* se = detail::stiffness_2d();
    const double* me = detail::mass_2d();
    const double h2 = h * h;
    std::int64_t nd[4];
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix) {
        detail::element_nodes(g, ix, iy, nd);
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) {
            if (mask[static_cast<std::size_t>(nd[r])] || mask[static_cast<std::size_t>(nd[c])])
              continue;
            t.push_back({nd[r], nd[c], kappa2 * h2 * me[4 * r + c] + se[4 * r + c]});
          }
      }
  }
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) t.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(i), 1.0});
  return csr_matrix(g.node_total(), g.node_total(), std::move(t));
}

// --- white-noise draws ---

// Nodal white-noise function: Var(w_n) = 1 / lumped mass entry, so that
// integrating w against a test function has the right covariance scaling.
inline field node_white_noise(const grid_level& g, const seed_key& key, int combo = 0) {
  seed_key k = key;
  k.stage = stage::node_noise + static_cast<std::uint64_t>(combo);
  keyed_stream rng(k);
  const auto m = lumped_mass(g);
  field w(g, storage_kind::node);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal() / std::sqrt(m[i]);
  return w;
}

// Cell white noise that refines consistently: the draw for a coarse target is
// a prefix of the draw for a fine one, and restrict_noise inverts each
// refinement step exactly. Children stay i.i.d. N(0,1).
inline field hierarchical_cell_noise(const grid_level& g, const seed_key& key,
                                     int combo = 0) {
  seed_key k = key;
  k.stage = stage::cell_noise + static_cast<std::uint64_t>(combo);
  keyed_stream rng(k);

  grid_level base(g.dim, 0, g.base_per_axis);
  field cur(base, storage_kind::cell);
  for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = rng.normal();

  const int children = 1 << g.dim;
  const double parent_share = 1.0 / std::sqrt(static_cast<double>(children));
  for (int lvl = 0; lvl < g.level; ++lvl) {
    const grid_level& cg = cur.grid();
    grid_level fg(g.dim, lvl + 1, g.base_per_axis);
    field nxt(fg, storage_kind::cell);
    double u[4];
    if (g.dim == 1) {
      for (std::int64_t i = 0; i < cg.cells_per_axis(); ++i) {
        u[0] = rng.normal();
        u[1] = rng.normal();
        const double mean = 0.5 * (u[0] + u[1]);
        const double lift = parent_share * cur[static_cast<std::size_t>(i)];
        nxt[static_cast<std::size_t>(2 * i)] = u[0] - mean + lift;
        nxt[static_cast<std::size_t>(2 * i + 1)] = u[1] - mean + lift;
      }
    } else {
      for (std::int64_t iy = 0; iy < cg.cells_per_axis(); ++iy)
        for (std::int64_t ix = 0; ix < cg.cells_per_axis(); ++ix) {
          double sum = 0.0;
          for (int c = 0; c < 4; ++c) {
            u[c] = rng.normal();
            sum += u[c];
          }
          const double mean = 0.25 * sum;
          const double lift =
              parent_share * cur[static_cast<std::size_t>(cell_index(cg, ix, iy))];
          int c = 0;
          for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a, ++c)
              nxt[static_cast<std::size_t>(cell_index(fg, 2 * ix + a, 2 * iy + b))] =
                  u[c] - mean + lift;
        }
    }
    cur = std::move(nxt);
  }
  return cur;
}

namespace detail {

// Shared solve path: one reaction-diffusion inversion per axis combination,
// each driven by its own independent noise load, averaged with the weight
// that keeps the variance combo-count free.
template <typename LoadFn>
field grf_from_loads(const grid_level& g, const matern_params& p, LoadFn make_load) {
  validate_matern(p, g.dim);
  const double kappa = matern_kappa(p, g.dim);
  const double kappa2 = kappa * kappa;
  const int ncombo = 1 << g.dim;
  const double combo_weight = 1.0 / std::sqrt(static_cast<double>(ncombo));
  const double scale = p.variance_scale > 0.0
                           ? p.variance_scale
                           : p.sigma / std::sqrt(matern_natural_variance(p, g.dim));

  field out(g, storage_kind::node);
  for (int combo = 0; combo < ncombo; ++combo) {
    std::vector<double> load = make_load(combo);
    const auto mask = dirichlet_nodes(g, combo);
    for (std::size_t i = 0; i < load.size(); ++i)
      if (mask[i]) load[i] = 0.0;
    auto op = assemble_reaction_diffusion(g, kappa2, combo);
    auto y = solve_cg(op, load, {1e-10, 0});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= combo_weight * scale;
  return out;
}

}  // namespace detail

// Standalone sampler: nodal white noise, load = lumped mass times noise.
inline field sample_grf(const grid_level& g, const matern_params& p, const seed_key& key) {
  const auto m = lumped_mass(g);
  return detail::grf_from_loads(g, p, [&](int combo) {
    field w = node_white_noise(g, key, combo);
    std::vector<double> load(w.size());
    for (std::size_t i = 0; i < load.size(); ++i) load[i] = m[i] * w[i];
    return load;
  });
}

// Multilevel sampler: the noise lives on cells (hierarchically refinable),
// the load integrates each cell's value against the incident hat functions.
inline field sample_grf_coupled(const grid_level& g, const matern_params& p,
                                const seed_key& key) {
  return detail::grf_from_loads(g, p, [&](int combo) {
    field xi = hierarchical_cell_noise(g, key, combo);
    std::vector<double> load(static_cast<std::size_t>(g.node_total()), 0.0);
    const std::int64_t n = g.cells_per_axis();
    // int_K psi / sqrt(|K|) = h^(d/2) / 2^d for every incident corner
    const double w = std::pow(g.mesh_width(), g.dim / 2.0) / std::pow(2.0, g.dim);
    if (g.dim == 1) {
      for (std::int64_t i = 0; i < n; ++i) {
        const double v = w * xi[static_cast<std::size_t>(i)];
        load[static_cast<std::size_t>(i)] += v;
        load[static_cast<std::size_t>(i + 1)] += v;
      }
    } else {
      for (std::int64_t iy = 0; iy < n; ++iy)
        for (std::int64_t ix = 0; ix < n; ++ix) {
          const double v = w * xi[static_cast<std::size_t>(cell_index(g, ix, iy))];
          for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a)
              load[static_cast<std::size_t>(node_index(g, ix + a, iy + b))] += v;
        }
    }
    return load;
  });
}

// exp of the corner-averaged log field, one value per cell
inline field cell_permeability(const field& log_field) {
  if (log_field.kind() != storage_kind::node)
    throw structural_error("cell_permeability: needs a node field");
  const grid_level& g = log_field.grid();
  field k(g, storage_kind::cell);
  const std::int64_t n = g.cells_per_axis();
  if (g.dim == 1) {
    for (std::int64_t i = 0; i < n; ++i)
      k[static_cast<std::size_t>(i)] =
          std::exp(0.5 * (log_field[static_cast<std::size_t>(i)] +
                          log_field[static_cast<std::size_t>(i + 1)]));
  } else {
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix) {
        const double avg = 0.25 * (log_field[node_index(g, ix, iy)] +
                                   log_field[node_index(g, ix + 1, iy)] +
                                   log_field[node_index(g, ix, iy + 1)] +
                                   log_field[node_index(g, ix + 1, iy + 1)]);
        k[static_cast<std::size_t>(cell_index(g, ix, iy))] = std::exp(avg);
      }
  }
  return k;
}

}  // namespace fieldmc
