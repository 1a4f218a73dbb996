#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fieldmc {

// Base for everything this library throws on contract violations. Budget or
// memory exhaustion during a run is NOT an error and never throws; it ends
// the run normally.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreements: grid/level mismatches, wrong storage kinds,
// out-of-domain arguments.
struct structural_error : error {
  using error::error;
};

// A statistic was requested that needs more samples than were accumulated.
struct insufficient_samples_error : error {
  using error::error;
};

// Integer overflow in closed-form size computations.
struct arithmetic_error : error {
  using error::error;
};

// Memory ledger misuse (over-release). Fails fast by design.
struct accounting_error : error {
  using error::error;
};

// A Krylov solve did not reach its tolerance within the iteration cap.
struct solver_error : error {
  solver_error(const std::string& stage, double residual, long iterations)
      : error(stage + ": no convergence, residual " + std::to_string(residual) +
              " after " + std::to_string(iterations) + " iterations"),
        stage(stage),
        residual(residual),
        iterations(iterations) {}
  std::string stage;
  double residual;
  long iterations;
};

// A sample task failed inside a batch wave; carries which sample broke.
struct task_error : error {
  task_error(int level, std::int64_t sample_index, const std::string& reason)
      : error("level " + std::to_string(level) + ", sample " +
              std::to_string(sample_index) + ": " + reason),
        level(level),
        sample_index(sample_index),
        reason(reason) {}
  int level;
  std::int64_t sample_index;
  std::string reason;
};

// Aggregated configuration problems; `violations` lists every issue found.
struct config_error : error {
  explicit config_error(std::vector<std::string> problems)
      : error(join(problems)), violations(std::move(problems)) {}
  std::vector<std::string> violations;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& p : v) s += "\n  - " + p;
    return s;
  }
};

}  // namespace fieldmc
