#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fieldmc/darcy.hpp"
#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/rng.hpp"
#include "fieldmc/spde.hpp"
#include "util.hpp"

using namespace fieldmc;

namespace {

field constant_perm(const grid_level& g, double k) {
  field f(g, storage_kind::cell);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = k;
  return f;
}

field lognormal_perm(const grid_level& g, std::uint64_t index) {
  matern_params p{0.3, 1.0, 1.0, 0.0};
  field log_k = sample_grf(g, p, seed_key{77, 0, static_cast<std::uint64_t>(g.level), index, 0});
  return cell_permeability(log_k);
}

}  // namespace

TEST_CASE("uniform permeability gives unit downward flow, any conductivity") {
  grid_level g(2, 2, 2);
  for (double k : {1.0, 7.3}) {
    auto sol = solve_darcy(constant_perm(g, k), {1e-12, 0});
    REQUIRE(sol.pressure.kind() == storage_kind::cell);
    REQUIRE(sol.velocity.kind() == storage_kind::face);

    const std::int64_t n = g.cells_per_axis();
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix <= n; ++ix)
        REQUIRE(std::abs(sol.velocity[face_index_x(g, ix, iy)]) < 1e-9);
    for (std::int64_t iy = 0; iy <= n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix)
        REQUIRE(std::abs(sol.velocity[face_index_y(g, ix, iy)] + 1.0) < 1e-9);

    // p = y / k with the bottom wall held at zero
    for (std::int64_t iy = 0; iy < n; ++iy)
      for (std::int64_t ix = 0; ix < n; ++ix) {
        const double yc = (static_cast<double>(iy) + 0.5) * g.mesh_width();
        REQUIRE(std::abs(sol.pressure[cell_index(g, ix, iy)] - yc / k) < 1e-9);
      }
  }
}

TEST_CASE("one-dimensional uniform flow is exact") {
  grid_level g(1, 3, 2);
  auto sol = solve_darcy(constant_perm(g, 2.0), {1e-12, 0});
  const std::int64_t n = g.cells_per_axis();
  for (std::int64_t i = 0; i <= n; ++i) REQUIRE(std::abs(sol.velocity[i] + 1.0) < 1e-10);
  for (std::int64_t i = 0; i < n; ++i) {
    const double xc = (static_cast<double>(i) + 0.5) * g.mesh_width();
    REQUIRE(std::abs(sol.pressure[i] - xc / 2.0) < 1e-10);
  }
}

TEST_CASE("lognormal permeability: flux field is discretely divergence-free") {
  grid_level g(2, 3, 2);
  field perm = lognormal_perm(g, 3);
  auto sol = solve_darcy(perm, {1e-13, 0});

  field div = cell_divergence(sol.velocity);
  double worst = 0.0;
  for (std::size_t i = 0; i < div.size(); ++i) worst = std::max(worst, std::abs(div[i]));
  REQUIRE(worst < 1e-8);

  // everything pumped in on top leaves through the bottom wall
  const std::int64_t n = g.cells_per_axis();
  double in_top = 0.0, out_bottom = 0.0;
  for (std::int64_t ix = 0; ix < n; ++ix) {
    in_top -= sol.velocity[face_index_y(g, ix, n)] * g.mesh_width();
    out_bottom -= sol.velocity[face_index_y(g, ix, 0)] * g.mesh_width();
  }
  REQUIRE(in_top == Catch::Approx(1.0).epsilon(1e-10));
  REQUIRE(out_bottom == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("velocity ignores a global permeability rescale") {
  grid_level g(2, 2, 2);
  field perm = lognormal_perm(g, 5);
  field scaled = perm;
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 5.0;

  auto a = solve_darcy(perm, {1e-13, 0});
  auto b = solve_darcy(scaled, {1e-13, 0});
  for (std::size_t i = 0; i < a.velocity.size(); ++i)
    REQUIRE(std::abs(a.velocity[i] - b.velocity[i]) < 1e-8);
  for (std::size_t i = 0; i < a.pressure.size(); ++i)
    REQUIRE(testutil::rel_err(b.pressure[i], a.pressure[i] / 5.0) < 1e-6);
}

namespace {

// p = cos(pi x) cos(pi y / 2): sealed sides and sealed bottom slope, driven by
// a matching source, a bottom pressure trace, and a top influx profile
double manufactured_pressure_error(int level) {
  grid_level g(2, level, 2);
  const double pi = 3.14159265358979323846;
  const std::int64_t n = g.cells_per_axis();

  std::vector<double> source(static_cast<std::size_t>(g.cell_total()));
  for (std::int64_t iy = 0; iy < n; ++iy)
    for (std::int64_t ix = 0; ix < n; ++ix) {
      const double x = cell_center(g, ix);
      const double y = cell_center(g, iy);
      source[static_cast<std::size_t>(cell_index(g, ix, iy))] =
          1.25 * pi * pi * std::cos(pi * x) * std::cos(0.5 * pi * y);
    }
  std::vector<double> bottom(static_cast<std::size_t>(n)), top(static_cast<std::size_t>(n));
  for (std::int64_t ix = 0; ix < n; ++ix) {
    const double x = cell_center(g, ix);
    bottom[static_cast<std::size_t>(ix)] = std::cos(pi * x);
    // q . n on top = -dp/dy (x, 1) = (pi/2) cos(pi x) sin(pi/2)
    top[static_cast<std::size_t>(ix)] = 0.5 * pi * std::cos(pi * x);
  }

  auto sol = solve_darcy_general(constant_perm(g, 1.0), source, bottom, top, {1e-13, 0});
  double err2 = 0.0;
  for (std::int64_t iy = 0; iy < n; ++iy)
    for (std::int64_t ix = 0; ix < n; ++ix) {
      const double want = std::cos(pi * cell_center(g, ix)) * std::cos(0.5 * pi * cell_center(g, iy));
      const double d = sol.pressure[cell_index(g, ix, iy)] - want;
      err2 += d * d * g.cell_volume();
    }
  return std::sqrt(err2);
}

}  // namespace

TEST_CASE("manufactured pressure converges under refinement") {
  const double e2 = manufactured_pressure_error(2);
  const double e3 = manufactured_pressure_error(3);
  const double e4 = manufactured_pressure_error(4);
  REQUIRE(e3 < e2);
  REQUIRE(e4 < e3);
  const double slope = std::log2(e2 / e4) / 2.0;
  REQUIRE(slope > 0.8);
}

TEST_CASE("darcy input guards") {
  grid_level g(2, 1, 2);
  field node_perm(g, storage_kind::node);
  REQUIRE_THROWS_AS(solve_darcy(node_perm), structural_error);

  field bad = constant_perm(g, 1.0);
  bad[3] = 0.0;
  REQUIRE_THROWS_AS(solve_darcy(bad), structural_error);

  field ok = constant_perm(g, 1.0);
  std::vector<double> wrong_size(2, 0.0);
  REQUIRE_THROWS_AS(
      solve_darcy_general(ok, wrong_size, std::vector<double>(4, 0.0),
                          std::vector<double>(4, -1.0), {1e-10, 0}),
      structural_error);
  REQUIRE_THROWS_AS(
      solve_darcy_general(ok, std::vector<double>(16, 0.0), std::vector<double>(3, 0.0),
                          std::vector<double>(4, -1.0), {1e-10, 0}),
      structural_error);
}
