#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fieldmc/errors.hpp"
#include "fieldmc/memory.hpp"

namespace fieldmc {

// One member of the nested hierarchy on the unit domain (0,1)^d. Level l
// has base*2^l cells per axis; refinement halves the mesh width. Immutable
// after construction and cheap to copy.
struct grid_level {
  int dim;
  int level;
  std::int64_t base_per_axis;

  grid_level(int dim, int level, std::int64_t base_per_axis)
      : dim(dim), level(level), base_per_axis(base_per_axis) {
    if (dim != 1 && dim != 2)
      throw structural_error("grid dimension must be 1 or 2, got " + std::to_string(dim));
    if (level < 0) throw structural_error("grid level must be >= 0");
    if (base_per_axis < 1) throw structural_error("base cells per axis must be >= 1");
    if (level > 40) throw structural_error("grid level out of range");
  }

  std::int64_t cells_per_axis() const { return base_per_axis << level; }
  double mesh_width() const { return 1.0 / static_cast<double>(cells_per_axis()); }
  double cell_volume() const { return std::pow(mesh_width(), dim); }

  std::int64_t cell_total() const {
    const std::int64_t n = cells_per_axis();
    return dim == 1 ? n : n * n;
  }
  std::int64_t node_total() const {
    const std::int64_t n = cells_per_axis() + 1;
    return dim == 1 ? n : n * n;
  }
  std::int64_t face_total() const {
    const std::int64_t n = cells_per_axis();
    return dim == 1 ? n + 1 : 2 * (n + 1) * n;
  }

  friend bool operator==(const grid_level& a, const grid_level& b) {
    return a.dim == b.dim && a.level == b.level && a.base_per_axis == b.base_per_axis;
  }
};

enum class storage_kind { cell, node, face };

inline std::int64_t entity_total(const grid_level& g, storage_kind kind) {
  switch (kind) {
    case storage_kind::cell: return g.cell_total();
    case storage_kind::node: return g.node_total();
    case storage_kind::face: return g.face_total();
  }
  return 0;
}

// Flat value array over the cells, nodes, or faces of one grid level.
// Registers its footprint with the per-thread allocation meter so sample
// tasks can report real memory use.
class field {
 public:
  field(grid_level g, storage_kind kind)
      : grid_(g), kind_(kind), values_(static_cast<std::size_t>(entity_total(g, kind)), 0.0) {
    meter_add(bytes());
  }
  ~field() { meter_sub(bytes()); }

  field(const field& o) : grid_(o.grid_), kind_(o.kind_), values_(o.values_) {
    meter_add(bytes());
  }
  field(field&& o) noexcept
      : grid_(o.grid_), kind_(o.kind_), values_(std::move(o.values_)) {}
  field& operator=(const field& o) {
    if (this != &o) {
      meter_sub(bytes());
      grid_ = o.grid_;
      kind_ = o.kind_;
      values_ = o.values_;
      meter_add(bytes());
    }
    return *this;
  }
  field& operator=(field&& o) noexcept {
    if (this != &o) {
      meter_sub(bytes());
      grid_ = o.grid_;
      kind_ = o.kind_;
      values_ = std::move(o.values_);
    }
    return *this;
  }

  const grid_level& grid() const { return grid_; }
  storage_kind kind() const { return kind_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

 private:
  std::int64_t bytes() const {
    return static_cast<std::int64_t>(values_.size() * sizeof(double));
  }
  grid_level grid_;
  storage_kind kind_;
  std::vector<double> values_;
};

// |K_{s,l}| = base_cells * 2^(l*d + s), with overflow rejected.
inline std::int64_t cell_count(std::int64_t base_cells, int level, int split, int dim) {
  if (base_cells < 1) throw structural_error("cell_count: base cells must be >= 1");
  if (level < 0 || split < 0) throw structural_error("cell_count: negative exponent");
  if (dim != 1 && dim != 2) throw structural_error("cell_count: dimension must be 1 or 2");
  const int e = level * dim + split;
  if (e >= 63) throw arithmetic_error("cell_count: 2^" + std::to_string(e) + " overflows");
  const std::int64_t factor = std::int64_t{1} << e;
  std::int64_t out = 0;
  if (__builtin_mul_overflow(base_cells, factor, &out))
    throw arithmetic_error("cell_count: product overflows 64-bit range");
  return out;
}

inline std::int64_t cell_index(const grid_level& g, std::int64_t ix, std::int64_t iy = 0) {
  return iy * g.cells_per_axis() + ix;
}
inline std::int64_t node_index(const grid_level& g, std::int64_t ix, std::int64_t iy = 0) {
  return iy * (g.cells_per_axis() + 1) + ix;
}
// Faces with normal along x come first (ix in [0,n], iy in [0,n)), then faces
// with normal along y (ix in [0,n), iy in [0,n]). Face values are the normal
// velocity component in the +axis direction.
inline std::int64_t face_index_x(const grid_level& g, std::int64_t ix, std::int64_t iy = 0) {
  return iy * (g.cells_per_axis() + 1) + ix;
}
inline std::int64_t face_index_y(const grid_level& g, std::int64_t ix, std::int64_t iy) {
  const std::int64_t n = g.cells_per_axis();
  return (n + 1) * n + iy * n + ix;
}

inline double cell_center(const grid_level& g, std::int64_t i) {
  return (static_cast<double>(i) + 0.5) * g.mesh_width();
}

// Injection into the 2^d children of every cell. Exactly L2-isometric because
// children partition their parent.
inline field prolong(const field& coarse) {
  if (coarse.kind() != storage_kind::cell)
    throw structural_error("prolong: only cell fields transfer by injection");
  const grid_level& cg = coarse.grid();
  grid_level fg(cg.dim, cg.level + 1, cg.base_per_axis);
  field fine(fg, storage_kind::cell);
  if (cg.dim == 1) {
    for (std::int64_t i = 0; i < cg.cells_per_axis(); ++i) {
      fine[2 * i] = coarse[i];
      fine[2 * i + 1] = coarse[i];
    }
  } else {
    const std::int64_t nc = cg.cells_per_axis();
    for (std::int64_t iy = 0; iy < nc; ++iy)
      for (std::int64_t ix = 0; ix < nc; ++ix) {
        const double v = coarse[cell_index(cg, ix, iy)];
        for (int b = 0; b < 2; ++b)
          for (int a = 0; a < 2; ++a)
            fine[cell_index(fg, 2 * ix + a, 2 * iy + b)] = v;
      }
  }
  return fine;
}

// Aggregates child draws so that i.i.d. N(0,1) cell noise stays i.i.d. N(0,1)
// one level down: coarse = 2^{-d/2} * sum of the 2^d children.
inline field restrict_noise(const field& fine) {
  if (fine.kind() != storage_kind::cell)
    throw structural_error("restrict_noise: needs a cell field");
  const grid_level& fg = fine.grid();
  if (fg.level < 1) throw structural_error("restrict_noise: level 0 has no parent");
  grid_level cg(fg.dim, fg.level - 1, fg.base_per_axis);
  field coarse(cg, storage_kind::cell);
  const double scale = 1.0 / std::sqrt(std::pow(2.0, fg.dim));
  if (fg.dim == 1) {
    for (std::int64_t i = 0; i < cg.cells_per_axis(); ++i)
      coarse[i] = scale * (fine[2 * i] + fine[2 * i + 1]);
  } else {
    const std::int64_t nc = cg.cells_per_axis();
    for (std::int64_t iy = 0; iy < nc; ++iy)
      for (std::int64_t ix = 0; ix < nc; ++ix) {
        double s = 0.0;
        for (int b = 0; b < 2; ++b)
          for (int a = 0; a < 2; ++a) s += fine[cell_index(fg, 2 * ix + a, 2 * iy + b)];
        coarse[cell_index(cg, ix, iy)] = scale * s;
      }
  }
  return coarse;
}

// Discrete L2 norm. Cell fields use the cell volume; node and face fields use
// their natural lumped volume shares.
inline double l2_norm(const field& f) {
  const grid_level& g = f.grid();
  const double h = g.mesh_width();
  double acc = 0.0;
  switch (f.kind()) {
    case storage_kind::cell: {
      const double w = g.cell_volume();
      for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * f[i] * w;
      break;
    }
    case storage_kind::node: {
      const std::int64_t n = g.cells_per_axis();
      const double unit = g.cell_volume() / std::pow(2.0, g.dim);
      if (g.dim == 1) {
        for (std::int64_t ix = 0; ix <= n; ++ix) {
          const double w = unit * ((ix == 0 || ix == n) ? 1 : 2);
          acc += f[ix] * f[ix] * w;
        }
      } else {
        for (std::int64_t iy = 0; iy <= n; ++iy)
          for (std::int64_t ix = 0; ix <= n; ++ix) {
            const int inc = ((ix == 0 || ix == n) ? 1 : 2) * ((iy == 0 || iy == n) ? 1 : 2);
            const double v = f[node_index(g, ix, iy)];
            acc += v * v * unit * inc;
          }
      }
      break;
    }
    case storage_kind::face: {
      const std::int64_t n = g.cells_per_axis();
      if (g.dim == 1) {
        for (std::int64_t ix = 0; ix <= n; ++ix) {
          const double w = h * ((ix == 0 || ix == n) ? 0.5 : 1.0);
          acc += f[ix] * f[ix] * w;
        }
      } else {
        const double vol = g.cell_volume();
        for (std::int64_t iy = 0; iy < n; ++iy)
          for (std::int64_t ix = 0; ix <= n; ++ix) {
            const double w = vol * ((ix == 0 || ix == n) ? 0.5 : 1.0);
            const double v = f[face_index_x(g, ix, iy)];
            acc += v * v * w;
          }
        for (std::int64_t iy = 0; iy <= n; ++iy)
          for (std::int64_t ix = 0; ix < n; ++ix) {
            const double w = vol * ((iy == 0 || iy == n) ? 0.5 : 1.0);
            const double v = f[face_index_y(g, ix, iy)];
            acc += v * v * w;
          }
      }
      break;
    }
  }
  return std::sqrt(acc);
}

}  // namespace fieldmc
