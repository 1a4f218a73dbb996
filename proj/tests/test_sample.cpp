#include <catch2/catch_amalgamated.hpp>

#include <cstddef>
#include <cstdint>
#include <vector>

#include <fieldmc/estimators.hpp>
#include <fieldmc/memory.hpp>
#include <fieldmc/moments.hpp>
#include <fieldmc/sample.hpp>

#include "util.hpp"

using namespace fieldmc;

namespace {

chain_config desk_config() {
  chain_config cfg;
  cfg.dim = 2;
  cfg.base_cells = 2;
  cfg.base_steps = 8;
  cfg.final_time = 0.5;
  cfg.matern = matern_params{0.3, 1.0, 1.0, 0.0};
  return cfg;
}

bool same_values(const field& a, const field& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("repeated keys reproduce the whole sample bit for bit") {
  const chain_config cfg = desk_config();
  const seed_key key{7, 2, 2, 11, 0};
  const sample_pair a = coupled_sample(cfg, 2, key);
  const sample_pair b = coupled_sample(cfg, 2, key);
  REQUIRE(same_values(a.fine_density, b.fine_density));
  REQUIRE(a.coarse_density.has_value());
  REQUIRE(same_values(*a.coarse_density, *b.coarse_density));
  REQUIRE(same_values(a.correction, b.correction));
  REQUIRE(same_values(a.fine_flux, b.fine_flux));
  REQUIRE(a.fine_qoi == b.fine_qoi);
  REQUIRE(a.coarse_qoi == b.coarse_qoi);
}

TEST_CASE("base level has no coarse half") {
  const chain_config cfg = desk_config();
  const sample_pair s = coupled_sample(cfg, 0, seed_key{7, 0, 0, 3, 0});
  REQUIRE_FALSE(s.coarse_density.has_value());
  REQUIRE(s.coarse_qoi == 0.0);
  REQUIRE(same_values(s.correction, s.fine_density));
  REQUIRE(s.fine_qoi == l2_norm(s.fine_density));
  REQUIRE(s.snapshot_corrections.empty());
}

TEST_CASE("snapshot corrections track the requested times") {
  chain_config cfg = desk_config();
  cfg.snapshot_times = {0.25, 0.5};
  const seed_key key{7, 1, 1, 4, 0};

  const sample_pair base = coupled_sample(cfg, 0, key);
  REQUIRE(base.snapshot_corrections.size() == 2);
  REQUIRE(same_values(base.snapshot_corrections[1], base.fine_density));
  REQUIRE_FALSE(
      same_values(base.snapshot_corrections[0], base.fine_density));

  const sample_pair pair = coupled_sample(cfg, 1, key);
  REQUIRE(pair.snapshot_corrections.size() == 2);
  for (const field& f : pair.snapshot_corrections) {
    REQUIRE(f.kind() == storage_kind::cell);
    REQUIRE(f.grid().level == 1);
  }
  // the final-time snapshot is the pair correction itself
  REQUIRE(same_values(pair.snapshot_corrections[1], pair.correction));
}

TEST_CASE("coarse half of a pair equals the fine run one level down") {
  // both pairs share one key, so the coarse chain consumes the same stream
  const chain_config cfg = desk_config();
  const seed_key key{7, 1, 0, 5, 0};
  const sample_pair hi = coupled_sample(cfg, 3, key);
  const sample_pair lo = coupled_sample(cfg, 2, key);
  REQUIRE(hi.coarse_density.has_value());
  REQUIRE(same_values(*hi.coarse_density, lo.fine_density));
  REQUIRE(hi.coarse_qoi == lo.fine_qoi);
}

TEST_CASE("correction is the fine solution minus the injected coarse one") {
  const chain_config cfg = desk_config();
  const sample_pair s = coupled_sample(cfg, 2, seed_key{9, 0, 2, 4, 0});
  REQUIRE(s.coarse_density.has_value());
  const field lifted = prolong(*s.coarse_density);
  REQUIRE(lifted.size() == s.correction.size());
  for (std::size_t i = 0; i < s.correction.size(); ++i)
    REQUIRE(s.correction[i] == s.fine_density[i] - lifted[i]);
  REQUIRE(s.fine_qoi == l2_norm(s.fine_density));
  REQUIRE(s.coarse_qoi == l2_norm(*s.coarse_density));
}

TEST_CASE("distinct sample indices decorrelate the draws") {
  const chain_config cfg = desk_config();
  const sample_pair a = coupled_sample(cfg, 1, seed_key{7, 0, 1, 0, 0});
  const sample_pair b = coupled_sample(cfg, 1, seed_key{7, 0, 1, 1, 0});
  REQUIRE_FALSE(same_values(a.fine_density, b.fine_density));
}

TEST_CASE("sample fields live on the expected grids") {
  const chain_config cfg = desk_config();
  const sample_pair s = coupled_sample(cfg, 2, seed_key{3, 0, 2, 0, 0});
  REQUIRE(s.fine_flux.kind() == storage_kind::face);
  REQUIRE(s.fine_flux.grid() == grid_level(2, 2, 2));
  REQUIRE(s.fine_density.kind() == storage_kind::cell);
  REQUIRE(s.fine_density.grid() == grid_level(2, 2, 2));
  REQUIRE(s.coarse_density->grid() == grid_level(2, 1, 2));
  REQUIRE(s.correction.grid() == grid_level(2, 2, 2));
}

TEST_CASE("one-dimensional chain produces a coupled pair as well") {
  chain_config cfg = desk_config();
  cfg.dim = 1;
  cfg.matern = matern_params{0.3, 1.5, 1.0, 0.0};
  const seed_key key{5, 0, 0, 2, 0};
  const sample_pair s = coupled_sample(cfg, 2, key);
  REQUIRE(s.fine_density.grid() == grid_level(1, 2, 2));
  REQUIRE(s.coarse_density->grid() == grid_level(1, 1, 2));
  const sample_pair lo = coupled_sample(cfg, 1, key);
  REQUIRE(same_values(*s.coarse_density, lo.fine_density));
}

TEST_CASE("correction energy decays geometrically across levels") {
  const chain_config cfg = desk_config();
  std::vector<level_point> pts;
  for (int level = 1; level <= 4; ++level) {
    scalar_moments acc;
    for (std::uint64_t m = 0; m < 200; ++m) {
      const sample_pair s = coupled_sample(
          cfg, level, seed_key{21, 0, static_cast<std::uint64_t>(level), m, 0});
      const double n = l2_norm(s.correction);
      acc.add(n * n);
    }
    pts.push_back({level, acc.mean()});
  }
  const fit_result fit = fit_exponent(pts);
  REQUIRE(fit.exponent > 0.0);
}

TEST_CASE("qoi difference variance is bounded by the correction field spread") {
  // batched runs put a standard error on the field-spread estimate
  const chain_config cfg = desk_config();
  for (int level : {1, 2}) {
    const grid_level g(cfg.dim, level, cfg.base_cells);
    const int batches = 10;
    const int per_batch = 30;
    scalar_moments y_acc;
    field_moments v_acc(g);
    std::vector<double> batch_spread;
    for (int b = 0; b < batches; ++b) {
      field_moments local(g);
      for (int m = 0; m < per_batch; ++m) {
        const std::uint64_t index =
            static_cast<std::uint64_t>(b * per_batch + m);
        const sample_pair s = coupled_sample(
            cfg, level, seed_key{33, 0, static_cast<std::uint64_t>(level), index, 0});
        y_acc.add(s.fine_qoi - s.coarse_qoi);
        v_acc.add(s.correction);
        local.add(s.correction);
      }
      batch_spread.push_back(local.z2() / (per_batch - 1));
    }
    const double spread = v_acc.z2() / static_cast<double>(y_acc.count() - 1);
    scalar_moments batch_stats;
    for (double b : batch_spread) batch_stats.add(b);
    const double rel_err =
        std::sqrt(batch_stats.variance() / batches) / batch_stats.mean();
    REQUIRE(y_acc.variance() <= spread * (1.0 + 3.0 * rel_err));
  }
}

TEST_CASE("sample construction reports its footprint to the thread meter") {
  const chain_config cfg = desk_config();
  alloc_meter meter;
  {
    meter_scope scope(meter);
    const sample_pair s = coupled_sample(cfg, 1, seed_key{2, 0, 1, 0, 0});
    // the live result plus solver workspaces were all metered
    REQUIRE(meter.current_bytes() > 0);
    REQUIRE(meter.peak_bytes() >= meter.current_bytes());
    const std::int64_t floor_bytes = static_cast<std::int64_t>(
        (s.fine_density.size() + s.coarse_density->size() + s.correction.size() +
         s.fine_flux.size()) *
        sizeof(double));
    REQUIRE(meter.peak_bytes() >= floor_bytes);
  }
  REQUIRE(meter.current_bytes() == 0);
}
