#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"

namespace fieldmc {

// Picks the split exponent s: 2^s tasks run side by side, bounded by the
// machine's unit count, by the number of requested samples, and by how many
// samples fit in memory at once. Empty optional means not even one sample
// fits, which callers must treat as a stop signal.
inline std::optional<int> comm_split(std::int64_t units, std::int64_t delta_m,
                                     std::int64_t mem_samples) {
  if (units < 1 || (units & (units - 1)) != 0)
    throw structural_error("comm_split: units must be a power of two, got " +
                           std::to_string(units));
  if (delta_m < 1) throw structural_error("comm_split: need at least one sample");
  if (mem_samples < 0) throw structural_error("comm_split: negative memory capacity");
  if (mem_samples == 0) return std::nullopt;
  const std::int64_t cap = std::min({units, delta_m, mem_samples});
  int s = 0;
  while ((std::int64_t{1} << s) < cap) ++s;  // ceil(log2 cap)
  return s;
}

struct batch_layout {
  std::int64_t parallel_samples;    // tasks per wave, 2^s
  std::int64_t sequential_batches;  // waves, ceil(delta_m / parallel)
};

// The wave shape for delta_m requested samples at split s. The last wave may
// over-provision; surplus samples are still executed and counted.
inline batch_layout batch_plan(std::int64_t delta_m, int split) {
  if (delta_m < 1) throw structural_error("batch_plan: need at least one sample");
  if (split < 0 || split > 62) throw structural_error("batch_plan: split out of range");
  const std::int64_t parallel = std::int64_t{1} << split;
  return {parallel, (delta_m + parallel - 1) / parallel};
}

// Full shape of one level's batch execution: how many samples run side by
// side, how many waves, how many grid cells the wave holds at once, and how
// many worker units cooperate on each sample.
struct multi_index_layout {
  int level;
  int split;
  std::int64_t parallel_samples;    // 2^split
  std::int64_t sequential_batches;  // waves
  std::int64_t cells_total;         // cells alive per wave
  std::int64_t group_size;          // units per sample, parallel * group = units
};

// Combines the split choice with the wave shape for one level. Empty optional
// propagates the comm_split stop signal (nothing fits in memory).
inline std::optional<multi_index_layout> plan_level_batch(
    std::int64_t units, std::int64_t delta_m, std::int64_t mem_samples,
    const grid_level& g) {
  const std::optional<int> split = comm_split(units, delta_m, mem_samples);
  if (!split) return std::nullopt;
  const batch_layout waves = batch_plan(delta_m, *split);
  std::int64_t base_total = g.base_per_axis;
  if (g.dim == 2) base_total *= g.base_per_axis;
  return multi_index_layout{
      g.level,
      *split,
      waves.parallel_samples,
      waves.sequential_batches,
      cell_count(base_total, g.level, *split, g.dim),
      units >> *split};
}

// floor((budget - peak) / per_sample), clamped at zero.
inline std::int64_t max_samples_in_memory(double budget_mb, double peak_mb,
                                          double per_sample_mb) {
  if (per_sample_mb <= 0.0)
    throw structural_error("max_samples_in_memory: per-sample footprint must be positive");
  const double room = (budget_mb - peak_mb) / per_sample_mb;
  if (room <= 0.0) return 0;
  return static_cast<std::int64_t>(room);
}

// Tracks memory in cell units: permanent cells held by the per-level
// accumulators plus dynamic cells alive inside sample waves. Converts to
// bytes through a calibrated bytes-per-cell ratio that only ever grows, so
// the estimate stays conservative. Thread safe; workers record and release
// around each task.
class memory_ledger {
 public:
  explicit memory_ledger(double budget_mb) : budget_mb_(budget_mb) {
    if (budget_mb <= 0.0) throw structural_error("memory budget must be positive");
  }

  double budget_mb() const { return budget_mb_; }

  void record_permanent(int level, std::int64_t cells) {
    std::lock_guard lock(mu_);
    permanent_by_level_[level] = cells;
    permanent_ = 0;
    for (const auto& [l, c] : permanent_by_level_) permanent_ += c;
    peak_ = std::max(peak_, permanent_ + dynamic_);
  }

  void record(std::int64_t cells) {
    std::lock_guard lock(mu_);
    dynamic_ += cells;
    peak_ = std::max(peak_, permanent_ + dynamic_);
  }

  void release(std::int64_t cells) {
    std::lock_guard lock(mu_);
    if (cells > dynamic_)
      throw accounting_error("memory ledger: releasing " + std::to_string(cells) +
                             " cells with only " + std::to_string(dynamic_) + " recorded");
    dynamic_ -= cells;
  }

  void observe_bytes(double bytes, std::int64_t cells) {
    if (cells < 1) throw structural_error("observe_bytes: needs a positive cell count");
    std::lock_guard lock(mu_);
    bytes_per_cell_ = std::max(bytes_per_cell_, bytes / static_cast<double>(cells));
  }

  std::int64_t permanent_cells() const {
    std::lock_guard lock(mu_);
    return permanent_;
  }
  std::int64_t dynamic_cells() const {
    std::lock_guard lock(mu_);
    return dynamic_;
  }
  std::int64_t peak_cells() const {
    std::lock_guard lock(mu_);
    return peak_;
  }
  double bytes_per_cell() const {
    std::lock_guard lock(mu_);
    return bytes_per_cell_;
  }
  double peak_mb() const {
    std::lock_guard lock(mu_);
    return static_cast<double>(peak_) * bytes_per_cell_ / 1e6;
  }

 private:
  double budget_mb_;
  mutable std::mutex mu_;
  std::map<int, std::int64_t> permanent_by_level_;
  std::int64_t permanent_ = 0;
  std::int64_t dynamic_ = 0;
  std::int64_t peak_ = 0;
  double bytes_per_cell_ = 0.0;
};

// Admission check before a level is added: twice the finest level's cell
// footprint must fit in the budget (one sample plus its coarse partner, and
// headroom for the accumulators that outlive it). 1 MB = 1e6 bytes.
inline bool memory_gate(const memory_ledger& ledger, std::int64_t finest_cells) {
  if (finest_cells < 1) throw structural_error("memory_gate: needs a positive cell count");
  const double need = ledger.bytes_per_cell() * static_cast<double>(finest_cells) * 2.0;
  return need <= ledger.budget_mb() * 1e6;
}

}  // namespace fieldmc
