#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/rng.hpp"
#include "fieldmc/spde.hpp"
#include "util.hpp"

using namespace fieldmc;

namespace {
matern_params plane_params() { return {0.3, 1.0, 1.0, 0.0}; }
matern_params line_params() { return {0.3, 1.5, 1.0, 0.0}; }
}  // namespace

TEST_CASE("matern parameters, frozen kappa and covariance values") {
  // independently tabulated for corr_length 0.3, sigma 1
  REQUIRE(matern_kappa(plane_params(), 2) == Catch::Approx(4.7140452079103168).epsilon(1e-14));
  REQUIRE(matern_kappa(line_params(), 1) == Catch::Approx(5.7735026918962576).epsilon(1e-14));

  REQUIRE(matern_covariance(plane_params(), 2, 0.0) == Catch::Approx(1.0).epsilon(1e-14));
  REQUIRE(matern_covariance(plane_params(), 2, 0.05) ==
          Catch::Approx(0.94220302789804565).epsilon(1e-12));
  REQUIRE(matern_covariance(plane_params(), 2, 0.1) ==
          Catch::Approx(0.84139355463344408).epsilon(1e-12));
  REQUIRE(matern_covariance(plane_params(), 2, 0.2) ==
          Catch::Approx(0.62627581024226135).epsilon(1e-12));

  REQUIRE(matern_covariance(line_params(), 1, 0.1) ==
          Catch::Approx(0.88549906754946498).epsilon(1e-12));
  REQUIRE(matern_covariance(line_params(), 1, 0.2) ==
          Catch::Approx(0.67905796574023781).epsilon(1e-12));

  // sill scales quadratically
  matern_params loud = plane_params();
  loud.sigma = 2.0;
  REQUIRE(matern_covariance(loud, 2, 0.1) ==
          Catch::Approx(4.0 * 0.84139355463344408).epsilon(1e-12));
}

TEST_CASE("matern parameter validation pins the admissible smoothness") {
  REQUIRE_NOTHROW(validate_matern(plane_params(), 2));
  REQUIRE_NOTHROW(validate_matern(line_params(), 1));
  REQUIRE_THROWS_AS(validate_matern(line_params(), 2), structural_error);
  REQUIRE_THROWS_AS(validate_matern(plane_params(), 1), structural_error);
  matern_params bad = plane_params();
  bad.corr_length = 0.0;
  REQUIRE_THROWS_AS(validate_matern(bad, 2), structural_error);
  bad = plane_params();
  bad.sigma = -1.0;
  REQUIRE_THROWS_AS(validate_matern(bad, 2), structural_error);
}

TEST_CASE("matern natural variance, frozen") {
  REQUIRE(matern_natural_variance(plane_params(), 2) ==
          Catch::Approx(0.0035809862195676451).epsilon(1e-12));
  REQUIRE(matern_natural_variance(line_params(), 1) ==
          Catch::Approx(0.001299038105676658).epsilon(1e-12));
}

TEST_CASE("lumped mass, frozen entries on a 2x2 grid") {
  grid_level g(2, 0, 2);  // h = 1/2
  auto m = lumped_mass(g);
  REQUIRE(m.size() == 9);
  REQUIRE(m[node_index(g, 0, 0)] == Catch::Approx(0.0625).epsilon(1e-14));  // corner
  REQUIRE(m[node_index(g, 1, 0)] == Catch::Approx(0.125).epsilon(1e-14));   // edge
  REQUIRE(m[node_index(g, 1, 1)] == Catch::Approx(0.25).epsilon(1e-14));    // interior

  grid_level line(1, 1, 2);  // h = 1/4
  auto ml = lumped_mass(line);
  REQUIRE(ml[0] == Catch::Approx(0.125).epsilon(1e-14));
  REQUIRE(ml[2] == Catch::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("consistent mass applied to constants reproduces the lumped mass") {
  for (int dim : {1, 2}) {
    grid_level g(dim, 1, 2);
    std::vector<double> ones(static_cast<std::size_t>(g.node_total()), 1.0);
    auto mc = apply_consistent_mass(g, ones);
    auto ml = lumped_mass(g);
    for (std::size_t i = 0; i < ml.size(); ++i)
      REQUIRE(testutil::rel_err(mc[i], ml[i]) < 1e-13);
  }
}

namespace {

// nodal max error of the assembled Helmholtz solve against a manufactured
// solution; bc_combo selects which axes carry essential conditions
double manufactured_error(int level, int combo, double (*exact)(double, double)) {
  grid_level g(2, level, 2);
  const double k2 = 1.0;
  const std::int64_t nn = g.cells_per_axis() + 1;
  std::vector<double> f(static_cast<std::size_t>(g.node_total()));
  std::vector<double> u(static_cast<std::size_t>(g.node_total()));
  const double pi = 3.14159265358979323846;
  for (std::int64_t iy = 0; iy < nn; ++iy)
    for (std::int64_t ix = 0; ix < nn; ++ix) {
      const double x = static_cast<double>(ix) * g.mesh_width();
      const double y = static_cast<double>(iy) * g.mesh_width();
      const auto n = static_cast<std::size_t>(node_index(g, ix, iy));
      u[n] = exact(x, y);
      f[n] = (k2 + 2.0 * pi * pi) * u[n];
    }
  auto rhs = apply_consistent_mass(g, f);
  auto mask = dirichlet_nodes(g, combo);
  for (std::size_t i = 0; i < rhs.size(); ++i)
    if (mask[i]) rhs[i] = 0.0;
  auto op = assemble_reaction_diffusion(g, k2, combo);
  auto got = solve_cg(op, rhs, {1e-12, 0});
  double err = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::abs(got[i] - u[i]));
  return err;
}

}  // namespace

TEST_CASE("reaction-diffusion solve converges at second order, natural conditions") {
  auto exact = +[](double x, double y) {
    const double pi = 3.14159265358979323846;
    return std::cos(pi * x) * std::cos(pi * y);
  };
  const double e2 = manufactured_error(2, 0, exact);
  const double e4 = manufactured_error(4, 0, exact);
  const double slope = std::log2(e2 / e4) / 2.0;
  REQUIRE(slope > 1.8);
  REQUIRE(e4 < 2e-3);
}

TEST_CASE("reaction-diffusion solve converges at second order, essential x-walls") {
  auto exact = +[](double x, double y) {
    const double pi = 3.14159265358979323846;
    return std::sin(pi * x) * std::cos(pi * y);
  };
  const double e2 = manufactured_error(2, 1, exact);
  const double e4 = manufactured_error(4, 1, exact);
  const double slope = std::log2(e2 / e4) / 2.0;
  REQUIRE(slope > 1.8);
}

TEST_CASE("nodal white noise, determinism and lumped-mass variance") {
  grid_level g(2, 1, 2);
  const seed_key k{5, 0, 1, 9, 0};
  field a = node_white_noise(g, k);
  field b = node_white_noise(g, k);
  REQUIRE(a.kind() == storage_kind::node);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  auto m = lumped_mass(g);
  const int draws = 4000;
  double pooled = 0.0;
  for (int s = 0; s < draws; ++s) {
    field w = node_white_noise(g, seed_key{5, 0, 1, static_cast<std::uint64_t>(s), 0});
    for (std::size_t i = 0; i < w.size(); ++i) pooled += w[i] * w[i] * m[i];
  }
  pooled /= static_cast<double>(draws) * static_cast<double>(g.node_total());
  REQUIRE(std::abs(pooled - 1.0) < 0.03);
}

TEST_CASE("hierarchical cell noise, unit variance and restriction consistency") {
  grid_level fine(2, 3, 2);
  grid_level coarse(2, 2, 2);
  const seed_key k{21, 0, 3, 4, 0};

  field nf = hierarchical_cell_noise(fine, k);
  field nf2 = hierarchical_cell_noise(fine, k);
  REQUIRE(nf.kind() == storage_kind::cell);
  for (std::size_t i = 0; i < nf.size(); ++i) REQUIRE(nf[i] == nf2[i]);

  // building one level less consumes a prefix of the same stream
  field nc = hierarchical_cell_noise(coarse, k);
  field restricted = restrict_noise(nf);
  for (std::size_t i = 0; i < nc.size(); ++i)
    REQUIRE(std::abs(restricted[i] - nc[i]) < 1e-13);

  // pooled second moment over cells and samples
  const int draws = 3000;
  double pooled = 0.0;
  grid_level g(2, 2, 2);
  for (int s = 0; s < draws; ++s) {
    field w = hierarchical_cell_noise(g, seed_key{21, 0, 2, static_cast<std::uint64_t>(s), 0});
    for (std::size_t i = 0; i < w.size(); ++i) pooled += w[i] * w[i];
  }
  pooled /= static_cast<double>(draws) * static_cast<double>(g.cell_total());
  REQUIRE(std::abs(pooled - 1.0) < 0.02);

  // neighbours are uncorrelated
  double cross = 0.0;
  for (int s = 0; s < draws; ++s) {
    field w = hierarchical_cell_noise(g, seed_key{21, 0, 2, static_cast<std::uint64_t>(s), 0});
    cross += w[cell_index(g, 3, 3)] * w[cell_index(g, 4, 3)];
  }
  cross /= static_cast<double>(draws);
  REQUIRE(std::abs(cross) < 4.0 / std::sqrt(static_cast<double>(draws)));
}

TEST_CASE("gaussian field sampler is deterministic and key-separated") {
  grid_level g(2, 2, 2);
  const seed_key k{42, 0, 2, 7, 0};
  field a = sample_grf(g, plane_params(), k);
  field b = sample_grf(g, plane_params(), k);
  REQUIRE(a.kind() == storage_kind::node);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  seed_key other = k;
  other.index += 1;
  field c = sample_grf(g, plane_params(), other);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i] == c[i];
  REQUIRE_FALSE(same);
}

TEST_CASE("variance scale override replaces the closed-form normalization") {
  grid_level g(2, 1, 2);
  const seed_key k{42, 0, 1, 3, 0};
  matern_params raw = plane_params();
  raw.variance_scale = 1.0;  // no rescaling at all
  field unscaled = sample_grf(g, raw, k);
  field scaled = sample_grf(g, plane_params(), k);
  const double want = 1.0 / std::sqrt(matern_natural_variance(plane_params(), 2));
  for (std::size_t i = 0; i < scaled.size(); ++i)
    if (std::abs(unscaled[i]) > 1e-12)
      REQUIRE(testutil::rel_err(scaled[i] / unscaled[i], want) < 1e-12);
}

TEST_CASE("gaussian field variance approaches the sill") {
  grid_level g(2, 3, 2);  // h = 1/16
  const std::int64_t c = g.cells_per_axis() / 2;
  const auto center = static_cast<std::size_t>(node_index(g, c, c));
  const int draws = 3000;
  double s1 = 0.0, s2 = 0.0;
  for (int s = 0; s < draws; ++s) {
    field u = sample_grf(g, plane_params(), seed_key{3, 0, 3, static_cast<std::uint64_t>(s), 0});
    s1 += u[center];
    s2 += u[center] * u[center];
  }
  const double mean = s1 / draws;
  const double var = s2 / draws - mean * mean;
  REQUIRE(std::abs(mean) < 0.075);  // 4 sigma for unit variance
  REQUIRE(std::abs(var - 1.0) < 0.15);
}

TEST_CASE("gaussian field correlation tracks the model at lag 0.1") {
  // base 5 puts nodes exactly 0.05 apart at level 2
  grid_level g(2, 2, 5);
  const std::int64_t c = g.cells_per_axis() / 2;
  const auto p = static_cast<std::size_t>(node_index(g, c - 1, c));
  const auto q = static_cast<std::size_t>(node_index(g, c + 1, c));
  const int draws = 3000;
  double sp = 0.0, sq = 0.0, spp = 0.0, sqq = 0.0, spq = 0.0;
  for (int s = 0; s < draws; ++s) {
    field u = sample_grf(g, plane_params(), seed_key{4, 0, 2, static_cast<std::uint64_t>(s), 0});
    sp += u[p];
    sq += u[q];
    spp += u[p] * u[p];
    sqq += u[q] * u[q];
    spq += u[p] * u[q];
  }
  const double n = draws;
  const double cov = spq / n - (sp / n) * (sq / n);
  const double vp = spp / n - (sp / n) * (sp / n);
  const double vq = sqq / n - (sq / n) * (sq / n);
  const double corr = cov / std::sqrt(vp * vq);
  REQUIRE(std::abs(corr - 0.84139355463344408) < 0.06);
}

TEST_CASE("one-dimensional gaussian field variance approaches the sill") {
  grid_level g(1, 3, 2);
  const auto center = static_cast<std::size_t>(g.cells_per_axis() / 2);
  const int draws = 4000;
  double s1 = 0.0, s2 = 0.0;
  for (int s = 0; s < draws; ++s) {
    field u = sample_grf(g, line_params(), seed_key{6, 0, 3, static_cast<std::uint64_t>(s), 0});
    s1 += u[center];
    s2 += u[center] * u[center];
  }
  const double mean = s1 / draws;
  const double var = s2 / draws - mean * mean;
  REQUIRE(std::abs(mean) < 0.07);
  REQUIRE(std::abs(var - 1.0) < 0.15);
}

TEST_CASE("coupled-noise gaussian field and its permeability cells") {
  grid_level g(2, 2, 2);
  const seed_key k{42, 0, 2, 11, 0};
  field a = sample_grf_coupled(g, plane_params(), k);
  field b = sample_grf_coupled(g, plane_params(), k);
  REQUIRE(a.kind() == storage_kind::node);
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  field perm = cell_permeability(a);
  REQUIRE(perm.kind() == storage_kind::cell);
  REQUIRE(perm.grid() == g);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    REQUIRE(perm[i] > 0.0);
    REQUIRE(std::isfinite(perm[i]));
  }
  // exp of the corner average on one hand-picked cell
  const double avg = 0.25 * (a[node_index(g, 3, 3)] + a[node_index(g, 4, 3)] +
                             a[node_index(g, 3, 4)] + a[node_index(g, 4, 4)]);
  REQUIRE(perm[cell_index(g, 3, 3)] == Catch::Approx(std::exp(avg)).epsilon(1e-14));

  // the coupled path is normalized like the standalone one
  const int draws = 2500;
  const std::int64_t c = g.cells_per_axis() / 2;
  const auto center = static_cast<std::size_t>(node_index(g, c, c));
  double s2 = 0.0;
  for (int s = 0; s < draws; ++s) {
    field u =
        sample_grf_coupled(g, plane_params(), seed_key{9, 0, 2, static_cast<std::uint64_t>(s), 0});
    s2 += u[center] * u[center];
  }
  REQUIRE(std::abs(s2 / draws - 1.0) < 0.2);
}
