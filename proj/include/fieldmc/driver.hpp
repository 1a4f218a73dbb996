#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fieldmc/config.hpp"
#include "fieldmc/errors.hpp"
#include "fieldmc/estimators.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/moments.hpp"
#include "fieldmc/runtime.hpp"
#include "fieldmc/sample.hpp"
#include "fieldmc/scheduler.hpp"

namespace fieldmc {

// Everything a run accumulates for one level: the merged moment tracks, the
// running cost mean, and the split exponents its batches have used. Sample
// counts live in the accumulators; samples() is the authoritative one.
struct level_state {
  explicit level_state(const grid_level& g) : grid(g), stats(g) {}
  grid_level grid;
  batch_accumulators stats;
  cost_estimate cost_ct;
  std::vector<int> split_history;

  std::int64_t samples() const { return stats.fine.count(); }
};

// Per-level decay and growth rates refitted whenever level data changes.
// alpha_* and beta_* are decay rates (positive means shrinking per level),
// gamma_* are growth rates of per-sample cost and memory.
struct exponent_fits {
  fit_result alpha_u{1.0, 0.0};    // mean correction norm
  fit_result alpha_q{1.0, 0.0};    // mean qoi correction
  fit_result beta_v{1.0, 0.0};     // correction field variance
  fit_result beta_y{1.0, 0.0};     // qoi correction variance
  fit_result gamma_ct{1.0, 0.0};   // seconds per sample
  fit_result gamma_mem{1.0, 0.0};  // megabytes per sample
};

// Snapshot of one level's statistics inside a round record; the raw inputs
// of the error estimates, so every recorded decision can be recomputed.
struct round_level_row {
  int level = 0;
  std::int64_t samples = 0;
  double z2_field = 0.0;     // second-order sum of the correction field
  double z2_qoi = 0.0;       // second-order sum of the qoi correction
  double mean_v_norm = 0.0;  // L2 norm of the mean correction field
  double mean_y = 0.0;       // mean qoi correction
  double cost_ct = 0.0;      // mean seconds per sample
  double cost_mem_mb = 0.0;  // calibrated megabytes per sample
  std::vector<int> splits;
};

// One adaptive round as the driver saw it on entry: the tolerances in force,
// the error estimates of the data so far, and the action the guards chose.
struct round_record {
  std::int64_t round = 0;
  std::string action;  // init | sample | shrink | raise-epsilon | stop reason
  double epsilon = 0.0;
  double epsilon_prev = 0.0;
  double time_left = 0.0;
  int max_level = 0;
  double err_sam = 0.0;
  double err_num = 0.0;
  double err_mse = 0.0;
  bool raised_level = false;
  exponent_fits fits;
  std::vector<round_level_row> levels;
};

// One executed batch in scheduler terms; every batch appears exactly once.
struct batch_log_entry {
  std::int64_t round = 0;
  int level = 0;
  int split = 0;
  std::int64_t parallel = 0;
  std::int64_t batches = 0;
  std::int64_t dynamic_cells = 0;  // cells alive per wave
  std::int64_t peak_cells = 0;     // ledger peak after the batch
};

struct combined_fields {
  field mean;
  field variance;
};

// Full outcome of a budgeted run. Budget exhaustion is a normal stop, never
// an error; stop_reason says which budget ended the run.
struct driver_result {
  run_config config;
  std::vector<level_state> levels;
  std::vector<round_record> rounds;
  std::vector<batch_log_entry> batch_log;
  std::string stop_reason;
  int max_level = 0;
  double time_consumed = 0.0;
  double time_left = 0.0;
  double epsilon = 0.0;
  double err_sam = 0.0;
  double err_num = 0.0;
  exponent_fits fits;
  double bytes_per_cell = 0.0;
  std::int64_t peak_cells = 0;
};

namespace detail {

// Telescoping combination over one moment track: level 0 contributes its
// statistic directly, every finer level prolongs the running sum and adds its
// correction statistic. Only the selected track needs samples.
template <class Track>
combined_fields combine_track(const std::vector<level_state>& levels,
                              Track&& track) {
  if (levels.empty())
    throw insufficient_samples_error("mlmc_combine: no level data");
  const field_moments& base = track(levels.front());
  field mean = base.mean_field();
  field variance = base.variance_field();
  for (std::size_t l = 1; l < levels.size(); ++l) {
    field lifted_mean = prolong(mean);
    field lifted_variance = prolong(variance);
    const field_moments& mom = track(levels[l]);
    const field m = mom.mean_field();
    const field v = mom.variance_field();
    for (std::size_t k = 0; k < lifted_mean.size(); ++k) {
      lifted_mean[k] += m[k];
      lifted_variance[k] += v[k];
    }
    mean = std::move(lifted_mean);
    variance = std::move(lifted_variance);
  }
  return {std::move(mean), std::move(variance)};
}

}  // namespace detail

// Mean and variance fields on the finest level, combined across the
// hierarchy from the per-level correction moments.
inline combined_fields mlmc_combine(const std::vector<level_state>& levels) {
  return detail::combine_track(
      levels,
      [](const level_state& st) -> const field_moments& {
        return st.stats.correction;
      });
}

// Same combination for the k-th snapshot time's correction moments.
inline combined_fields mlmc_combine_snapshot(
    const std::vector<level_state>& levels, std::size_t k) {
  for (const level_state& st : levels)
    if (k >= st.stats.snapshots.size())
      throw structural_error("mlmc_combine_snapshot: level " +
                             std::to_string(st.grid.level) +
                             " holds no snapshot " + std::to_string(k));
  return detail::combine_track(
      levels,
      [k](const level_state& st) -> const field_moments& {
        return st.stats.snapshots[k];
      });
}

namespace detail {

// Least-squares decay fit with a prior fallback: a single usable point
// anchors the prior slope through that point, none at all returns the bare
// prior.
inline fit_result decay_fit(const std::vector<level_point>& points,
                            double prior) {
  try {
    return fit_exponent(points);
  } catch (const insufficient_samples_error&) {
    for (const level_point& p : points)
      if (p.value > 0.0)
        return {prior,
                std::log2(p.value) + prior * static_cast<double>(p.level)};
    return {prior, 0.0};
  }
}

// Growth variant: value ~ 2^(intercept + exponent * level).
inline fit_result growth_fit(const std::vector<level_point>& points,
                             double prior) {
  try {
    const fit_result f = fit_exponent(points);
    return {-f.exponent, f.intercept};
  } catch (const insufficient_samples_error&) {
    for (const level_point& p : points)
      if (p.value > 0.0)
        return {prior,
                std::log2(p.value) - prior * static_cast<double>(p.level)};
    return {prior, 0.0};
  }
}

// The adaptive loop. Owns the worker pool, the memory ledger, and all level
// accumulators; run() drives warm-up plus rounds and consumes *this.
template <class Sampler>
class bmlmc_engine {
 public:
  bmlmc_engine(const run_config& cfg, const Sampler& sampler)
      : cfg_(cfg),
        sampler_(sampler),
        pool_(static_cast<int>(cfg.units)),
        ledger_(cfg.memory_budget),
        costs_{cfg.cost == "virtual" ? cost_mode::virtual_units
                                     : cost_mode::wallclock,
               cfg.virtual_base},
        time_left_(cfg.time_budget) {}

  driver_result run() {
    const bool warm_ok = warm_up();
    if (levels_.empty()) return finalize("budget-too-small");
    max_level_ = levels_.back().grid.level;
    state_ = refresh();
    const double eps0 = state_.err_sam + state_.err_num;
    eps_prev_ = eps0;
    eps_ = eps0;
    rounds_.push_back(make_record(0, "init"));
    if (!warm_ok) return finalize("memory-gate");
    eps_ = cfg_.eta * eps0;

    for (std::int64_t round = 1;; ++round) {
      if (round > cfg_.max_rounds) {
        rounds_.push_back(make_record(round, "round-cap"));
        return finalize("round-cap");
      }
      round_record rec = make_record(round, "");

      // below 5% of the budget further rounds cannot pay off
      if (time_left_ < 0.05 * cfg_.time_budget) {
        rec.action = "time-budget";
        rounds_.push_back(std::move(rec));
        return finalize("time-budget");
      }

      // discretization error dominates: admit one finer level. A raise
      // waits until the current top holds data (stacking a second raise on
      // an unsampled one would extrapolate from nothing and never settle)
      // and must pass the memory gate for the candidate grid; an
      // unaffordable round skips the later gate check, so the admission
      // decision is the one place that can stop runaway refinement.
      if (state_.err_num >= (1.0 - cfg_.theta) * eps_ * eps_ &&
          max_level_ < cfg_.level_cap &&
          max_level_ == levels_.back().grid.level) {
        const std::optional<std::int64_t> cells =
            checked_cells(max_level_ + 1);
        if (!cells || !memory_gate(ledger_, *cells)) {
          rec.action = "memory-gate";
          rounds_.push_back(std::move(rec));
          return finalize("memory-gate");
        }
        ++max_level_;
        rec.raised_level = true;
        // the bias tail now extrapolates one level further down
        state_.err_num = compute_err_num(state_.rows, state_.fits);
      }

      // sampling error dominates: grow sample counts toward the optimum
      std::vector<std::int64_t> delta(
          static_cast<std::size_t>(max_level_) + 1, 0);
      if (state_.err_sam >= cfg_.theta * eps_ * eps_) {
        const std::vector<std::int64_t> target =
            optimal_samples(eps_, cfg_.theta, build_allocs());
        for (std::size_t l = 0; l < delta.size(); ++l) {
          const std::int64_t have =
              l < levels_.size() ? levels_[l].samples() : 0;
          std::int64_t want = target[l];
          // a fresh level needs at least two samples to report statistics
          if (l >= levels_.size()) want = std::max<std::int64_t>(want, 2);
          delta[l] = sample_increment(want, have);
        }
      }

      // plan every batch now; the projection charges the executed counts
      // (plans over-provision by the wave ceil), so in virtual mode the
      // projection equals the cost the batches will book
      std::vector<std::optional<multi_index_layout>> plans(delta.size());
      bool blocked = false;
      double projected = 0.0;
      for (std::size_t l = 0; l < delta.size(); ++l) {
        if (delta[l] == 0) continue;
        const int level = static_cast<int>(l);
        plans[l] = plan_level_batch(cfg_.units, delta[l],
                                    mem_capacity(level, delta[l]),
                                    grid_at(level));
        if (!plans[l]) {
          blocked = true;
          continue;
        }
        const std::int64_t executed =
            plans[l]->parallel_samples * plans[l]->sequential_batches;
        projected += cost_rate(level) * static_cast<double>(executed) /
                     static_cast<double>(cfg_.units);
      }

      // unaffordable: back the tolerance off toward the last achieved one
      // and try again; epsilon_prev stays fixed so the retreat is monotone
      if (projected > time_left_) {
        rec.action = "raise-epsilon";
        rounds_.push_back(std::move(rec));
        eps_ = 0.5 * (eps_ + eps_prev_);
        continue;
      }

      // memory stop: the finest level no longer fits, or some level cannot
      // hold even one sample next to the permanent accumulators
      if (blocked ||
          !memory_gate(ledger_, grid_at(max_level_).cell_total())) {
        rec.action = "memory-gate";
        rounds_.push_back(std::move(rec));
        return finalize("memory-gate");
      }

      bool any_work = false;
      for (const std::int64_t d : delta) any_work = any_work || d > 0;
      if (!any_work) {
        rec.action = "shrink";
        rounds_.push_back(std::move(rec));
        eps_prev_ = eps_;
        eps_ *= cfg_.eta;
        continue;
      }

      for (std::size_t l = 0; l < delta.size(); ++l)
        if (delta[l] > 0)
          run_level_batch(static_cast<int>(l), *plans[l], round);
      state_ = refresh();
      rec.action = "sample";
      rounds_.push_back(std::move(rec));
      eps_prev_ = eps_;
      eps_ *= cfg_.eta;
    }
  }

 private:
  struct state_snapshot {
    std::vector<round_level_row> rows;
    exponent_fits fits;
    double err_sam = 0.0;
    double err_num = 0.0;
  };

  grid_level grid_at(int level) const {
    return grid_level(cfg_.dim, level, cfg_.base_cells);
  }

  // cell count for a candidate level, nullopt when it overflows int64
  std::optional<std::int64_t> checked_cells(int level) const {
    std::int64_t base_total = 1;
    for (int d = 0; d < cfg_.dim; ++d) {
      if (__builtin_mul_overflow(base_total, cfg_.base_cells, &base_total)) {
        return std::nullopt;
      }
    }
    try {
      return cell_count(base_total, level, 0, cfg_.dim);
    } catch (const arithmetic_error&) {
      return std::nullopt;
    }
  }

  bool field_track() const { return cfg_.mode == "field"; }

  // Calibrated per-sample footprint: fine plus coarse partner and transient
  // workspace, factor 2 over the nominal fine-grid cells.
  double per_sample_mb(const grid_level& g) const {
    return ledger_.bytes_per_cell() * static_cast<double>(g.cell_total()) *
           2.0 / 1e6;
  }

  // Cells the per-level accumulators hold: mean and second-order for the
  // fine and correction tracks, plus two per snapshot time.
  std::int64_t accumulator_cells(int level) const {
    std::int64_t tracks = 4;
    if (level < static_cast<int>(levels_.size()))
      tracks += 2 * static_cast<std::int64_t>(
                        levels_[static_cast<std::size_t>(level)]
                            .stats.snapshots.size());
    else
      tracks += 2 * static_cast<std::int64_t>(cfg_.snapshot_times.size());
    return tracks * grid_at(level).cell_total();
  }

  void refresh_permanent(int level) {
    ledger_.record_permanent(level, accumulator_cells(level));
  }

  // How many samples of this level fit next to everything permanent. A new
  // level books its accumulators prospectively before its first batch. Until
  // bytes-per-cell calibration exists the request passes through unclamped.
  std::int64_t mem_capacity(int level, std::int64_t want) const {
    const double bpc = ledger_.bytes_per_cell();
    if (bpc <= 0.0) return want;
    std::int64_t held_cells = ledger_.permanent_cells();
    if (level >= static_cast<int>(levels_.size()))
      held_cells += accumulator_cells(level);
    const double held_mb = static_cast<double>(held_cells) * bpc / 1e6;
    return max_samples_in_memory(cfg_.memory_budget, held_mb,
                                 per_sample_mb(grid_at(level)));
  }

  // Mean seconds per sample, extrapolated through the cost fit for levels
  // without data yet.
  double cost_rate(int level) const {
    if (level < static_cast<int>(levels_.size())) {
      const cost_estimate& c =
          levels_[static_cast<std::size_t>(level)].cost_ct;
      if (c.count > 0) return c.mean;
    }
    return std::exp2(state_.fits.gamma_ct.intercept +
                     state_.fits.gamma_ct.exponent *
                         static_cast<double>(level));
  }

  // Warm-up projection before any fits exist: virtual mode prices levels
  // directly, wallclock runs level 0 unconditionally to measure the scale
  // and extrapolates finer levels by the structural growth 2^(dim+1).
  double warm_up_rate(int level) const {
    if (costs_.mode == cost_mode::virtual_units)
      return virtual_sample_cost(costs_, cfg_.dim, level);
    if (level == 0) return 0.0;
    return levels_[0].cost_ct.mean *
           std::exp2(static_cast<double>(level * (cfg_.dim + 1)));
  }

  // Runs the configured warm-up schedule level by level; skips the tail once
  // a level does not fit the remaining time. False means memory stopped it.
  bool warm_up() {
    for (int l = 0; l <= cfg_.initial_levels; ++l) {
      const std::int64_t want =
          cfg_.initial_samples[static_cast<std::size_t>(l)];
      const std::optional<multi_index_layout> plan = plan_level_batch(
          cfg_.units, want, mem_capacity(l, want), grid_at(l));
      if (!plan) return false;
      const std::int64_t executed =
          plan->parallel_samples * plan->sequential_batches;
      const double projected = warm_up_rate(l) *
                               static_cast<double>(executed) /
                               static_cast<double>(cfg_.units);
      if (projected > time_left_) break;
      run_level_batch(l, *plan, 0);
    }
    return true;
  }

  void run_level_batch(int level, const multi_index_layout& layout,
                       std::int64_t round) {
    if (level > static_cast<int>(levels_.size()))
      throw accounting_error("driver: levels must be admitted in order");
    if (level == static_cast<int>(levels_.size())) {
      levels_.emplace_back(grid_at(level));
      refresh_permanent(level);
    }
    level_state& st = levels_[static_cast<std::size_t>(level)];
    const batch_request req{layout, st.samples(), cfg_.seed,
                            static_cast<std::uint64_t>(round)};
    batch_result batch =
        execute_batch(st.grid, req, sampler_, pool_, ledger_, costs_);
    st.stats.fine.merge(batch.stats.fine);
    st.stats.correction.merge(batch.stats.correction);
    st.stats.fine_qoi.merge(batch.stats.fine_qoi);
    st.stats.qoi_delta.merge(batch.stats.qoi_delta);
    if (!batch.stats.snapshots.empty()) {
      st.stats.ensure_snapshots(st.grid, batch.stats.snapshots.size());
      for (std::size_t k = 0; k < batch.stats.snapshots.size(); ++k)
        st.stats.snapshots[k].merge(batch.stats.snapshots[k]);
    }
    st.cost_ct = update_cost_estimate(st.cost_ct, batch.costs, level);
    st.split_history.push_back(layout.split);
    refresh_permanent(level);
    batch_log_.push_back({round, level, layout.split,
                          layout.parallel_samples, layout.sequential_batches,
                          layout.cells_total, ledger_.peak_cells()});
    time_left_ -= batch.wall_seconds;
    consumed_ += batch.wall_seconds;
  }

  std::vector<round_level_row> make_rows() const {
    std::vector<round_level_row> rows;
    rows.reserve(levels_.size());
    for (const level_state& st : levels_) {
      round_level_row r;
      r.level = st.grid.level;
      r.samples = st.samples();
      r.z2_field = st.stats.correction.z2();
      r.z2_qoi = st.stats.qoi_delta.second_order_sum();
      r.mean_v_norm = l2_norm(st.stats.correction.mean_field());
      r.mean_y = st.stats.qoi_delta.mean();
      r.cost_ct = st.cost_ct.mean;
      r.cost_mem_mb = per_sample_mb(st.grid);
      r.splits = st.split_history;
      rows.push_back(std::move(r));
    }
    return rows;
  }

  exponent_fits compute_fits(const std::vector<round_level_row>& rows) const {
    std::vector<level_point> nu, nq, vv, vy, ct, mm;
    for (const round_level_row& r : rows) {
      if (r.level >= 1 && r.samples >= 2) {
        const double m1 = static_cast<double>(r.samples - 1);
        nu.push_back({r.level, r.mean_v_norm});
        nq.push_back({r.level, std::abs(r.mean_y)});
        vv.push_back({r.level, r.z2_field / m1});
        vy.push_back({r.level, r.z2_qoi / m1});
      }
      if (r.cost_ct > 0.0) ct.push_back({r.level, r.cost_ct});
      if (r.cost_mem_mb > 0.0) mm.push_back({r.level, r.cost_mem_mb});
    }
    const double gamma_prior = static_cast<double>(cfg_.dim + 1);
    exponent_fits f;
    f.alpha_u = decay_fit(nu, 1.0);
    f.alpha_q = decay_fit(nq, 1.0);
    f.beta_v = decay_fit(vv, 1.0);
    f.beta_y = decay_fit(vy, 1.0);
    f.gamma_ct = growth_fit(ct, gamma_prior);
    f.gamma_mem = growth_fit(mm, gamma_prior);
    return f;
  }

  double compute_err_sam(const std::vector<round_level_row>& rows) const {
    double err = 0.0;
    for (const round_level_row& r : rows) {
      const double z2 = field_track() ? r.z2_field : r.z2_qoi;
      const double m = static_cast<double>(r.samples);
      err += z2 / (m * m - m);
    }
    return err;
  }

  // Squared bias of the data levels, extrapolated down to max_level by the
  // fitted decay; the prior rate 1 covers fits that have not stabilized.
  double compute_err_num(const std::vector<round_level_row>& rows,
                         const exponent_fits& fits) const {
    std::vector<double> norms;
    for (const round_level_row& r : rows)
      if (r.level >= 1)
        norms.push_back(field_track() ? r.mean_v_norm : std::abs(r.mean_y));
    if (norms.empty()) return 0.0;
    double alpha =
        field_track() ? fits.alpha_u.exponent : fits.alpha_q.exponent;
    if (!(alpha > 0.0)) alpha = 1.0;
    const int top = static_cast<int>(norms.size());
    return bias_estimate(norms, alpha) *
           std::exp2(-2.0 * alpha * static_cast<double>(max_level_ - top));
  }

  state_snapshot refresh() const {
    state_snapshot s;
    s.rows = make_rows();
    s.fits = compute_fits(s.rows);
    s.err_sam = compute_err_sam(s.rows);
    s.err_num = compute_err_num(s.rows, s.fits);
    return s;
  }

  // Allocation inputs for the sample optimizer: data levels report their
  // accumulated statistics, a freshly admitted level enters with the fitted
  // variance and cost extrapolations (samples = 2 makes z2 the variance).
  std::vector<level_alloc> build_allocs() const {
    const fit_result& decay =
        field_track() ? state_.fits.beta_v : state_.fits.beta_y;
    std::vector<level_alloc> out;
    out.reserve(static_cast<std::size_t>(max_level_) + 1);
    for (int l = 0; l <= max_level_; ++l) {
      if (l < static_cast<int>(levels_.size())) {
        const level_state& st = levels_[static_cast<std::size_t>(l)];
        const double z2 = field_track()
                              ? st.stats.correction.z2()
                              : st.stats.qoi_delta.second_order_sum();
        out.push_back({z2, st.samples(), st.cost_ct.mean});
        continue;
      }
      const double vhat = std::exp2(
          decay.intercept - decay.exponent * static_cast<double>(l));
      out.push_back({vhat, 2, cost_rate(l)});
    }
    return out;
  }

  round_record make_record(std::int64_t round,
                           const std::string& action) const {
    round_record rec;
    rec.round = round;
    rec.action = action;
    rec.epsilon = eps_;
    rec.epsilon_prev = eps_prev_;
    rec.time_left = time_left_;
    rec.max_level = max_level_;
    rec.err_sam = state_.err_sam;
    rec.err_num = state_.err_num;
    rec.err_mse = state_.err_sam + state_.err_num;
    rec.fits = state_.fits;
    rec.levels = state_.rows;
    return rec;
  }

  driver_result finalize(std::string reason) {
    driver_result out;
    out.config = cfg_;
    out.levels = std::move(levels_);
    out.rounds = std::move(rounds_);
    out.batch_log = std::move(batch_log_);
    out.stop_reason = std::move(reason);
    out.max_level = max_level_;
    out.time_consumed = consumed_;
    out.time_left = time_left_;
    out.epsilon = eps_;
    out.err_sam = state_.err_sam;
    out.err_num = state_.err_num;
    out.fits = state_.fits;
    out.bytes_per_cell = ledger_.bytes_per_cell();
    out.peak_cells = ledger_.peak_cells();
    return out;
  }

  run_config cfg_;
  const Sampler& sampler_;
  worker_pool pool_;
  memory_ledger ledger_;
  cost_model costs_;
  double time_left_;
  double consumed_ = 0.0;
  double eps_ = 0.0;
  double eps_prev_ = 0.0;
  int max_level_ = 0;
  std::vector<level_state> levels_;
  std::vector<round_record> rounds_;
  std::vector<batch_log_entry> batch_log_;
  state_snapshot state_;
};

}  // namespace detail

// Budget-constrained multilevel run with a caller-supplied sampler
// (level, seed_key) -> sample_pair. Throws config_error up front on an
// invalid configuration; running out of budget is a normal return.
template <class Sampler>
driver_result run_bmlmc(const run_config& cfg, const Sampler& sampler) {
  std::vector<std::string> bad = validate(cfg);
  if (!bad.empty()) throw config_error(std::move(bad));
  return detail::bmlmc_engine<Sampler>(cfg, sampler).run();
}

// Same run driven by the full simulation chain the config describes.
inline driver_result run_bmlmc(const run_config& cfg) {
  const chain_config chain = to_chain_config(cfg);
  const auto sampler = [&chain](int level, seed_key key) {
    return coupled_sample(chain, level, key);
  };
  return run_bmlmc(cfg, sampler);
}

}  // namespace fieldmc
