#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "memory.hpp"
#include "moments.hpp"
#include "rng.hpp"
#include "sample.hpp"
#include "scheduler.hpp"

namespace fieldmc {

// One executed sample's price tag. `seconds` is wall-clock task time or exact
// virtual units; `peak_cells` is the sample's nominal grid footprint, the
// denominator for the bytes-per-cell calibration.
struct cost_record {
  int level;
  std::int64_t sample_index;
  double seconds;
  std::int64_t peak_cells;
};

enum class cost_mode { wallclock, virtual_units };

struct cost_model {
  cost_mode mode = cost_mode::wallclock;
  double virtual_base = 1.0;  // units per level-0 sample
};

// Deterministic price of one sample in virtual mode: base * 2^{level*(dim+1)}.
inline double virtual_sample_cost(const cost_model& m, int dim, int level) {
  return m.virtual_base * std::exp2(static_cast<double>(level * (dim + 1)));
}

// Running mean of per-sample cost on one level, fed by batches over time.
struct cost_estimate {
  double mean = 0.0;
  std::int64_t count = 0;
};

inline cost_estimate update_cost_estimate(cost_estimate prior,
                                          std::span<const cost_record> records,
                                          int level) {
  for (const cost_record& r : records) {
    if (r.level != level) continue;
    if (r.seconds <= 0.0)
      throw structural_error("cost record must carry positive time");
    prior.mean = (prior.mean * static_cast<double>(prior.count) + r.seconds) /
                 static_cast<double>(prior.count + 1);
    ++prior.count;
  }
  return prior;
}

// Fixed set of worker threads executing submitted waves. A wave is a batch of
// closures that all run to completion (closures must not throw) before
// run_wave returns. Task order within a wave carries no meaning; callers get
// determinism by writing results into caller-owned slots.
class worker_pool {
 public:
  explicit worker_pool(int slots) {
    if (slots < 1) throw structural_error("worker pool needs at least one slot");
    workers_.reserve(static_cast<std::size_t>(slots));
    for (int i = 0; i < slots; ++i)
      workers_.emplace_back([this] { work_loop(); });
  }

  ~worker_pool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    wake_.notify_all();
    for (std::thread& w : workers_) w.join();
  }

  worker_pool(const worker_pool&) = delete;
  worker_pool& operator=(const worker_pool&) = delete;

  int slots() const { return static_cast<int>(workers_.size()); }

  void run_wave(std::vector<std::function<void()>> tasks) {
    if (tasks.empty()) return;
    {
      std::lock_guard lock(mu_);
      pending_ += tasks.size();
      for (std::function<void()>& t : tasks) queue_.push_back(std::move(t));
    }
    wake_.notify_all();
    std::unique_lock lock(mu_);
    drained_.wait(lock, [this] { return pending_ == 0; });
  }

 private:
  void work_loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        wake_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;  // only reachable when stopping
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
      {
        std::lock_guard lock(mu_);
        --pending_;
      }
      drained_.notify_all();
    }
  }

  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable drained_;
  std::deque<std::function<void()>> queue_;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::vector<std::thread> workers_;
};

struct batch_request {
  multi_index_layout layout;
  std::int64_t first_index;  // global index of the wave's first sample
  std::uint64_t run_seed;
  std::uint64_t round;
};

// Merged single-batch statistics: fine-solution and correction field moments
// plus the two scalar tracks (fine qoi, fine-minus-coarse qoi). Snapshot
// moments appear only when the sampler produces snapshot corrections.
struct batch_accumulators {
  explicit batch_accumulators(const grid_level& g) : fine(g), correction(g) {}
  field_moments fine;
  field_moments correction;
  scalar_moments fine_qoi;
  scalar_moments qoi_delta;
  std::vector<field_moments> snapshots;

  void ensure_snapshots(const grid_level& g, std::size_t n) {
    while (snapshots.size() < n) snapshots.emplace_back(g);
  }
};

struct batch_result {
  explicit batch_result(const grid_level& g) : stats(g) {}
  batch_accumulators stats;
  std::vector<cost_record> costs;  // sample-index order
  std::int64_t executed = 0;
  double wall_seconds = 0.0;  // what the time budget pays for this batch
};

// Runs the layout's waves on the pool: every wave books its cells on the
// ledger, executes parallel_samples tasks, merges their results in sample
// index order (bit-stable under any scheduling), then releases the cells.
// Surplus samples from the ceil in batch_plan are executed and counted. The
// lowest-indexed task failure aborts the remaining waves.
template <class Sampler>
batch_result execute_batch(const grid_level& g, const batch_request& req,
                           const Sampler& sampler, worker_pool& pool,
                           memory_ledger& ledger, const cost_model& costs) {
  if (req.layout.level != g.level)
    throw structural_error("execute_batch: layout level does not match grid");
  std::int64_t base_total = g.base_per_axis;
  if (g.dim == 2) base_total *= g.base_per_axis;
  const std::int64_t sample_cells = cell_count(base_total, g.level, 0, g.dim);
  const double virtual_cost = virtual_sample_cost(costs, g.dim, g.level);

  batch_result out(g);
  const auto batch_start = std::chrono::steady_clock::now();
  const std::int64_t parallel = req.layout.parallel_samples;
  for (std::int64_t wave = 0; wave < req.layout.sequential_batches; ++wave) {
    ledger.record(req.layout.cells_total);
    std::vector<std::optional<sample_pair>> slots(
        static_cast<std::size_t>(parallel));
    std::vector<std::exception_ptr> failures(
        static_cast<std::size_t>(parallel));
    std::vector<double> task_seconds(static_cast<std::size_t>(parallel), 0.0);
    std::vector<std::int64_t> task_peaks(static_cast<std::size_t>(parallel), 0);
    std::vector<std::function<void()>> tasks;
    tasks.reserve(static_cast<std::size_t>(parallel));
    for (std::int64_t k = 0; k < parallel; ++k) {
      const std::int64_t index = req.first_index + wave * parallel + k;
      tasks.push_back([&, k, index] {
        alloc_meter meter;
        meter_scope scope(meter);
        const auto task_start = std::chrono::steady_clock::now();
        try {
          slots[static_cast<std::size_t>(k)] = sampler(
              g.level, seed_key{req.run_seed, req.round,
                                static_cast<std::uint64_t>(g.level),
                                static_cast<std::uint64_t>(index), 0});
        } catch (...) {
          failures[static_cast<std::size_t>(k)] = std::current_exception();
        }
        task_seconds[static_cast<std::size_t>(k)] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          task_start)
                .count();
        task_peaks[static_cast<std::size_t>(k)] = meter.peak_bytes();
      });
    }
    pool.run_wave(std::move(tasks));
    for (std::int64_t k = 0; k < parallel; ++k) {
      if (!failures[static_cast<std::size_t>(k)]) continue;
      ledger.release(req.layout.cells_total);
      const std::int64_t index = req.first_index + wave * parallel + k;
      try {
        std::rethrow_exception(failures[static_cast<std::size_t>(k)]);
      } catch (const std::exception& e) {
        throw task_error(g.level, index, e.what());
      }
    }
    for (std::int64_t k = 0; k < parallel; ++k) {
      const sample_pair& s = *slots[static_cast<std::size_t>(k)];
      out.stats.fine.add(s.fine_density);
      out.stats.correction.add(s.correction);
      out.stats.fine_qoi.add(s.fine_qoi);
      out.stats.qoi_delta.add(s.fine_qoi - s.coarse_qoi);
      if (!s.snapshot_corrections.empty()) {
        out.stats.ensure_snapshots(g, s.snapshot_corrections.size());
        for (std::size_t i = 0; i < s.snapshot_corrections.size(); ++i)
          out.stats.snapshots[i].add(s.snapshot_corrections[i]);
      }
      if (task_peaks[static_cast<std::size_t>(k)] > 0)
        ledger.observe_bytes(
            static_cast<double>(task_peaks[static_cast<std::size_t>(k)]),
            sample_cells);
      const std::int64_t index = req.first_index + wave * parallel + k;
      const double seconds = costs.mode == cost_mode::virtual_units
                                 ? virtual_cost
                                 : task_seconds[static_cast<std::size_t>(k)];
      out.costs.push_back({g.level, index, seconds, sample_cells});
      ++out.executed;
    }
    ledger.release(req.layout.cells_total);
  }
  const std::int64_t units = req.layout.parallel_samples * req.layout.group_size;
  if (costs.mode == cost_mode::virtual_units) {
    out.wall_seconds = static_cast<double>(out.executed) * virtual_cost /
                       static_cast<double>(units);
  } else {
    out.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - batch_start)
                           .count();
  }
  return out;
}

}  // namespace fieldmc
