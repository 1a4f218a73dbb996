#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "sample.hpp"
#include "spde.hpp"

namespace fieldmc {

// Whole-run settings: grid shape, budgets, error split, random field model,
// transport horizon, execution mode, and output location. Parsed from flat
// `key = value` text with `#` comments; unknown keys are rejected.
struct run_config {
  int dim = 2;
  std::int64_t base_cells = 2;
  int initial_levels = 2;  // finest level of the warm-up round
  std::vector<std::int64_t> initial_samples = {8, 4, 2};
  double time_budget = 60.0;     // seconds, or units in virtual cost mode
  double memory_budget = 2048.0;  // megabytes
  std::int64_t units = 8;         // worker slots, power of two
  double theta = 0.5;             // sampling share of the error split
  double eta = 0.7;               // accuracy shrink factor per round
  double corr_length = 0.3;
  double smoothness = 1.0;
  double sigma = 1.0;
  double variance_scale = 0.0;  // > 0 overrides the calibrated field scale
  double final_time = 0.5;
  std::vector<double> snapshot_times = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::int64_t base_steps = 8;
  std::string mode = "field";     // field | qoi | both
  std::string cost = "wallclock";  // wallclock | virtual
  double virtual_base = 1.0;      // virtual units per level-0 sample
  std::uint64_t seed = 42;
  std::string out_dir = "fieldmc-out";
  std::int64_t max_rounds = 500;
  int level_cap = 40;

  bool operator==(const run_config&) const = default;
};

namespace detail {

template <class T>
bool read_value(const std::string& text, T& out) {
  std::istringstream in(text);
  T parsed;
  in >> parsed;
  if (!in) return false;
  in >> std::ws;
  if (!in.eof()) return false;
  out = parsed;
  return true;
}

template <class T>
bool read_value(const std::string& text, std::vector<T>& out) {
  std::istringstream in(text);
  std::vector<T> parsed;
  T item;
  while (in >> item) parsed.push_back(item);
  in.clear();
  in >> std::ws;
  if (!in.eof() || parsed.empty()) return false;
  out = std::move(parsed);
  return true;
}

inline bool read_value(const std::string& text, std::string& out) {
  if (text.empty()) return false;
  out = text;
  return true;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace detail

// Every invariant violation in `cfg`, empty when the config is usable.
inline std::vector<std::string> validate(const run_config& cfg) {
  std::vector<std::string> bad;
  if (cfg.dim != 1 && cfg.dim != 2) bad.push_back("dim must be 1 or 2");
  if (cfg.base_cells < 1) bad.push_back("base_cells must be >= 1");
  if (cfg.initial_levels < 0) bad.push_back("initial_levels must be >= 0");
  if (cfg.initial_samples.size() !=
      static_cast<std::size_t>(cfg.initial_levels) + 1)
    bad.push_back("initial_samples needs one entry per level 0.." +
                  std::to_string(cfg.initial_levels));
  for (std::int64_t m : cfg.initial_samples)
    if (m < 2) {
      bad.push_back("initial_samples entries must be >= 2");
      break;
    }
  if (!(cfg.time_budget > 0.0)) bad.push_back("time_budget must be positive");
  if (!(cfg.memory_budget > 0.0))
    bad.push_back("memory_budget must be positive");
  if (cfg.units < 1 || (cfg.units & (cfg.units - 1)) != 0)
    bad.push_back("units must be a power of two");
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0))
    bad.push_back("theta must lie in (0, 1)");
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0))
    bad.push_back("eta must lie in (0, 1)");
  if (!(cfg.corr_length > 0.0)) bad.push_back("corr_length must be positive");
  if (!(cfg.smoothness > 0.0)) bad.push_back("smoothness must be positive");
  if (!(cfg.sigma > 0.0)) bad.push_back("sigma must be positive");
  if (cfg.variance_scale < 0.0)
    bad.push_back("variance_scale must be >= 0 (0 selects calibration)");
  if (cfg.dim == 1 || cfg.dim == 2) {
    const double zeta = (cfg.smoothness + cfg.dim / 2.0) / 2.0;
    if (std::abs(zeta - 1.0) > 1e-12)
      bad.push_back("smoothness " + std::to_string(cfg.smoothness) +
                    " gives field exponent " + std::to_string(zeta) +
                    ", engine requires exactly 1");
  }
  if (!(cfg.final_time > 0.0)) bad.push_back("final_time must be positive");
  double previous = 0.0;
  for (double t : cfg.snapshot_times) {
    if (t <= previous || t > cfg.final_time + 1e-12) {
      bad.push_back(
          "snapshot_times must increase strictly inside (0, final_time]");
      break;
    }
    previous = t;
  }
  if (cfg.base_steps < 1) bad.push_back("base_steps must be >= 1");
  if (cfg.mode != "field" && cfg.mode != "qoi" && cfg.mode != "both")
    bad.push_back("mode must be field, qoi, or both");
  if (cfg.cost != "wallclock" && cfg.cost != "virtual")
    bad.push_back("cost must be wallclock or virtual");
  if (!(cfg.virtual_base > 0.0)) bad.push_back("virtual_base must be positive");
  if (cfg.out_dir.empty()) bad.push_back("out_dir must not be empty");
  if (cfg.max_rounds < 1) bad.push_back("max_rounds must be >= 1");
  if (cfg.level_cap < cfg.initial_levels || cfg.level_cap > 40)
    bad.push_back("level_cap must lie in [initial_levels, 40]");
  return bad;
}

// Parses flat key = value text. Collects every problem (unknown key, bad
// value, violated invariant) into one rejection.
inline run_config parse_config(const std::string& text) {
  run_config cfg;
  std::vector<std::string> bad;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      bad.push_back("not a key = value line: '" + stripped + "'");
      continue;
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    bool ok = true;
    if (key == "dim") ok = detail::read_value(value, cfg.dim);
    else if (key == "base_cells") ok = detail::read_value(value, cfg.base_cells);
    else if (key == "initial_levels") ok = detail::read_value(value, cfg.initial_levels);
    else if (key == "initial_samples") ok = detail::read_value(value, cfg.initial_samples);
    else if (key == "time_budget") ok = detail::read_value(value, cfg.time_budget);
    else if (key == "memory_budget") ok = detail::read_value(value, cfg.memory_budget);
    else if (key == "units") ok = detail::read_value(value, cfg.units);
    else if (key == "theta") ok = detail::read_value(value, cfg.theta);
    else if (key == "eta") ok = detail::read_value(value, cfg.eta);
    else if (key == "corr_length") ok = detail::read_value(value, cfg.corr_length);
    else if (key == "smoothness") ok = detail::read_value(value, cfg.smoothness);
    else if (key == "sigma") ok = detail::read_value(value, cfg.sigma);
    else if (key == "variance_scale") ok = detail::read_value(value, cfg.variance_scale);
    else if (key == "final_time") ok = detail::read_value(value, cfg.final_time);
    else if (key == "snapshot_times") ok = detail::read_value(value, cfg.snapshot_times);
    else if (key == "base_steps") ok = detail::read_value(value, cfg.base_steps);
    else if (key == "mode") ok = detail::read_value(value, cfg.mode);
    else if (key == "cost") ok = detail::read_value(value, cfg.cost);
    else if (key == "virtual_base") ok = detail::read_value(value, cfg.virtual_base);
    else if (key == "seed") ok = detail::read_value(value, cfg.seed);
    else if (key == "out_dir") ok = detail::read_value(value, cfg.out_dir);
    else if (key == "max_rounds") ok = detail::read_value(value, cfg.max_rounds);
    else if (key == "level_cap") ok = detail::read_value(value, cfg.level_cap);
    else {
      bad.push_back("unknown key '" + key + "'");
      continue;
    }
    if (!ok) bad.push_back("cannot parse value for '" + key + "': '" + value + "'");
  }
  for (std::string& v : validate(cfg)) bad.push_back(std::move(v));
  if (!bad.empty()) throw config_error(std::move(bad));
  return cfg;
}

// Emits text that parse_config maps back to exactly the same config.
inline std::string emit_config(const run_config& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "dim = " << cfg.dim << "\n";
  out << "base_cells = " << cfg.base_cells << "\n";
  out << "initial_levels = " << cfg.initial_levels << "\n";
  out << "initial_samples =";
  for (std::int64_t m : cfg.initial_samples) out << ' ' << m;
  out << "\n";
  out << "time_budget = " << cfg.time_budget << "\n";
  out << "memory_budget = " << cfg.memory_budget << "\n";
  out << "units = " << cfg.units << "\n";
  out << "theta = " << cfg.theta << "\n";
  out << "eta = " << cfg.eta << "\n";
  out << "corr_length = " << cfg.corr_length << "\n";
  out << "smoothness = " << cfg.smoothness << "\n";
  out << "sigma = " << cfg.sigma << "\n";
  out << "variance_scale = " << cfg.variance_scale << "\n";
  out << "final_time = " << cfg.final_time << "\n";
  out << "snapshot_times =";
  for (double t : cfg.snapshot_times) out << ' ' << t;
  out << "\n";
  out << "base_steps = " << cfg.base_steps << "\n";
  out << "mode = " << cfg.mode << "\n";
  out << "cost = " << cfg.cost << "\n";
  out << "virtual_base = " << cfg.virtual_base << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "max_rounds = " << cfg.max_rounds << "\n";
  out << "level_cap = " << cfg.level_cap << "\n";
  return out.str();
}

// The per-sample chain settings implied by a full run config.
inline chain_config to_chain_config(const run_config& cfg) {
  chain_config chain;
  chain.dim = cfg.dim;
  chain.base_cells = cfg.base_cells;
  chain.base_steps = cfg.base_steps;
  chain.final_time = cfg.final_time;
  chain.matern =
      matern_params{cfg.corr_length, cfg.smoothness, cfg.sigma,
                    cfg.variance_scale};
  chain.snapshot_times = cfg.snapshot_times;
  return chain;
}

// Environment hook: FIELDMC_OUT redirects the output directory.
inline void apply_environment(run_config& cfg) {
  if (const char* dir = std::getenv("FIELDMC_OUT"); dir && *dir)
    cfg.out_dir = dir;
}

}  // namespace fieldmc
