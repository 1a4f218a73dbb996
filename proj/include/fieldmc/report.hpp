#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ios>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldmc/config.hpp"
#include "fieldmc/driver.hpp"
#include "fieldmc/errors.hpp"
#include "fieldmc/grid.hpp"

namespace fieldmc {

// Grid field dump: one header line naming the columns, one line with the
// level and per-axis cell counts, then the cell values row-major, one grid
// row per line. Values print with enough digits to round-trip exactly.
inline void write_field_csv(std::ostream& out, const field& f) {
  if (f.kind() != storage_kind::cell)
    throw structural_error("write_field_csv: only cell fields dump");
  const grid_level& g = f.grid();
  const std::int64_t n = g.cells_per_axis();
  out << std::setprecision(17);
  if (g.dim == 1) {
    out << "level,cells_x\n" << g.level << ',' << n << '\n';
    for (std::int64_t i = 0; i < n; ++i) out << (i ? "," : "") << f[static_cast<std::size_t>(i)];
    out << '\n';
  } else {
    out << "level,cells_x,cells_y\n" << g.level << ',' << n << ',' << n << '\n';
    for (std::int64_t iy = 0; iy < n; ++iy) {
      for (std::int64_t ix = 0; ix < n; ++ix)
        out << (ix ? "," : "") << f[static_cast<std::size_t>(cell_index(g, ix, iy))];
      out << '\n';
    }
  }
}

// Inverse of write_field_csv; the base cell count is recovered from the
// header (cells_x = base << level).
inline field read_field_csv(std::istream& in) {
  std::string header, sizes;
  if (!std::getline(in, header) || !std::getline(in, sizes))
    throw structural_error("read_field_csv: missing header");
  const int dim = header == "level,cells_x" ? 1
                  : header == "level,cells_x,cells_y" ? 2
                  : throw structural_error("read_field_csv: unrecognized header '" + header + "'");
  std::int64_t level = -1, nx = 0, ny = 0;
  {
    std::istringstream row(sizes);
    char comma;
    row >> level >> comma >> nx;
    if (dim == 2) row >> comma >> ny;
    if (!row || level < 0 || nx < 1 || (dim == 2 && ny != nx))
      throw structural_error("read_field_csv: bad size line '" + sizes + "'");
  }
  const std::int64_t base = nx >> level;
  if (base < 1 || (base << level) != nx)
    throw structural_error("read_field_csv: cell count not base * 2^level");
  field f(grid_level(dim, static_cast<int>(level), base), storage_kind::cell);
  const std::int64_t rows = dim == 1 ? 1 : nx;
  for (std::int64_t iy = 0; iy < rows; ++iy) {
    std::string line;
    if (!std::getline(in, line))
      throw structural_error("read_field_csv: truncated value rows");
    std::istringstream cells(line);
    std::string item;
    for (std::int64_t ix = 0; ix < nx; ++ix) {
      if (!std::getline(cells, item, ','))
        throw structural_error("read_field_csv: short row");
      f[static_cast<std::size_t>(iy * nx + ix)] = std::stod(item);
    }
  }
  return f;
}

namespace detail {

inline nlohmann::json fit_json(const fit_result& f) {
  return {{"exponent", f.exponent}, {"intercept", f.intercept}};
}

inline nlohmann::json fits_json(const exponent_fits& f) {
  return {{"alpha_u", fit_json(f.alpha_u)},   {"alpha_q", fit_json(f.alpha_q)},
          {"beta_v", fit_json(f.beta_v)},     {"beta_y", fit_json(f.beta_y)},
          {"gamma_ct", fit_json(f.gamma_ct)}, {"gamma_mem", fit_json(f.gamma_mem)}};
}

inline nlohmann::json config_json(const run_config& c) {
  return {{"dim", c.dim},
          {"base_cells", c.base_cells},
          {"initial_levels", c.initial_levels},
          {"initial_samples", c.initial_samples},
          {"time_budget", c.time_budget},
          {"memory_budget", c.memory_budget},
          {"units", c.units},
          {"theta", c.theta},
          {"eta", c.eta},
          {"corr_length", c.corr_length},
          {"smoothness", c.smoothness},
          {"sigma", c.sigma},
          {"variance_scale", c.variance_scale},
          {"final_time", c.final_time},
          {"snapshot_times", c.snapshot_times},
          {"base_steps", c.base_steps},
          {"mode", c.mode},
          {"cost", c.cost},
          {"virtual_base", c.virtual_base},
          {"seed", c.seed},
          {"out_dir", c.out_dir},
          {"max_rounds", c.max_rounds},
          {"level_cap", c.level_cap}};
}

inline nlohmann::json row_json(const round_level_row& r) {
  return {{"level", r.level},
          {"samples", r.samples},
          {"z2_field", r.z2_field},
          {"z2_qoi", r.z2_qoi},
          {"mean_v_norm", r.mean_v_norm},
          {"mean_y", r.mean_y},
          {"cost_ct", r.cost_ct},
          {"cost_mem_mb", r.cost_mem_mb},
          {"splits", r.splits}};
}

}  // namespace detail

// Whole run as one JSON document: the config, every round's entering state
// and decision, every executed batch, and the final summary.
inline nlohmann::json report_json(const driver_result& r) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const round_record& rec : r.rounds) {
    nlohmann::json rows = nlohmann::json::array();
    for (const round_level_row& row : rec.levels) rows.push_back(detail::row_json(row));
    rounds.push_back({{"round", rec.round},
                      {"action", rec.action},
                      {"epsilon", rec.epsilon},
                      {"epsilon_prev", rec.epsilon_prev},
                      {"time_left", rec.time_left},
                      {"max_level", rec.max_level},
                      {"err_sam", rec.err_sam},
                      {"err_num", rec.err_num},
                      {"err_mse", rec.err_mse},
                      {"raised_level", rec.raised_level},
                      {"fits", detail::fits_json(rec.fits)},
                      {"levels", std::move(rows)}});
  }
  nlohmann::json batches = nlohmann::json::array();
  for (const batch_log_entry& b : r.batch_log)
    batches.push_back({{"round", b.round},
                       {"level", b.level},
                       {"split", b.split},
                       {"parallel", b.parallel},
                       {"batches", b.batches},
                       {"dynamic_cells", b.dynamic_cells},
                       {"peak_cells", b.peak_cells}});
  nlohmann::json levels = nlohmann::json::array();
  for (const level_state& st : r.levels) {
    const std::int64_t cells = st.grid.cell_total();
    levels.push_back(
        {{"level", st.grid.level},
         {"samples", st.samples()},
         {"cells", cells},
         {"z2_field", st.stats.correction.z2()},
         {"z2_qoi", st.stats.qoi_delta.second_order_sum()},
         {"mean_v_norm", l2_norm(st.stats.correction.mean_field())},
         {"mean_y", st.stats.qoi_delta.mean()},
         {"cost_ct", st.cost_ct.mean},
         {"cost_mem_mb",
          r.bytes_per_cell * static_cast<double>(cells) * 2.0 / 1e6},
         {"splits", st.split_history}});
  }
  return {{"config", detail::config_json(r.config)},
          {"stop_reason", r.stop_reason},
          {"max_level", r.max_level},
          {"time_consumed", r.time_consumed},
          {"time_left", r.time_left},
          {"epsilon", r.epsilon},
          {"err_sam", r.err_sam},
          {"err_num", r.err_num},
          {"err_mse", r.err_sam + r.err_num},
          {"bytes_per_cell", r.bytes_per_cell},
          {"peak_cells", r.peak_cells},
          {"fits", detail::fits_json(r.fits)},
          {"rounds", std::move(rounds)},
          {"batch_log", std::move(batches)},
          {"levels", std::move(levels)}};
}

// Final per-level table, one line per level, mirroring the JSON "levels".
inline void write_level_table_csv(std::ostream& out, const driver_result& r) {
  out << std::setprecision(17);
  out << "level,samples,cells,z2_field,z2_qoi,mean_v_norm,mean_y,cost_ct,"
         "cost_mem_mb,splits\n";
  for (const level_state& st : r.levels) {
    const std::int64_t cells = st.grid.cell_total();
    out << st.grid.level << ',' << st.samples() << ',' << cells << ','
        << st.stats.correction.z2() << ','
        << st.stats.qoi_delta.second_order_sum() << ','
        << l2_norm(st.stats.correction.mean_field()) << ','
        << st.stats.qoi_delta.mean() << ',' << st.cost_ct.mean << ','
        << r.bytes_per_cell * static_cast<double>(cells) * 2.0 / 1e6 << ',';
    for (std::size_t i = 0; i < st.split_history.size(); ++i)
      out << (i ? ";" : "") << st.split_history[i];
    out << '\n';
  }
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw structural_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw structural_error("write failed for " + path.string());
}

inline std::string field_csv_text(const field& f) {
  std::ostringstream out;
  write_field_csv(out, f);
  return out.str();
}

}  // namespace detail

// Writes the full artifact set for one run into `dir`: report.json, the
// per-level table, and the combined mean/variance fields at the final time
// plus every snapshot time all levels hold. Returns the written paths.
inline std::vector<std::filesystem::path> write_run_artifacts(
    const driver_result& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto emit = [&](const std::string& name, const std::string& text) {
    const std::filesystem::path p = dir / name;
    detail::write_text_file(p, text);
    written.push_back(p);
  };
  emit("report.json", report_json(r).dump(2) + "\n");
  {
    std::ostringstream out;
    write_level_table_csv(out, r);
    emit("levels.csv", out.str());
  }
  if (!r.levels.empty()) {
    const combined_fields final_time = mlmc_combine(r.levels);
    emit("mean_final.csv", detail::field_csv_text(final_time.mean));
    emit("variance_final.csv", detail::field_csv_text(final_time.variance));
    std::size_t snaps = r.levels.front().stats.snapshots.size();
    for (const level_state& st : r.levels)
      snaps = std::min(snaps, st.stats.snapshots.size());
    for (std::size_t k = 0; k < snaps; ++k) {
      const combined_fields at_time = mlmc_combine_snapshot(r.levels, k);
      emit("mean_snap" + std::to_string(k) + ".csv",
           detail::field_csv_text(at_time.mean));
      emit("variance_snap" + std::to_string(k) + ".csv",
           detail::field_csv_text(at_time.variance));
    }
  }
  return written;
}

// Human-readable rendering of a report.json document: run summary, fit
// table, per-round decisions, final per-level statistics.
inline std::string render_tables(const nlohmann::json& doc) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "stop: " << doc.at("stop_reason").get<std::string>()
      << "  max_level: " << doc.at("max_level").get<int>()
      << "  rounds: " << doc.at("rounds").size()
      << "  batches: " << doc.at("batch_log").size() << "\n";
  out << "time: consumed " << doc.at("time_consumed").get<double>() << " of "
      << doc.at("config").at("time_budget").get<double>() << " (left "
      << doc.at("time_left").get<double>() << ")\n";
  out << "error: epsilon " << doc.at("epsilon").get<double>() << "  sampling "
      << doc.at("err_sam").get<double>() << "  discretization "
      << doc.at("err_num").get<double>() << "  total "
      << doc.at("err_mse").get<double>() << "\n";
  out << "fits:";
  for (const char* name :
       {"alpha_u", "alpha_q", "beta_v", "beta_y", "gamma_ct", "gamma_mem"})
    out << "  " << name << " "
        << doc.at("fits").at(name).at("exponent").get<double>();
  out << "\n\n";
  out << std::left << std::setw(7) << "round" << std::setw(14) << "action"
      << std::setw(13) << "epsilon" << std::setw(13) << "err_sam"
      << std::setw(13) << "err_num" << std::setw(5) << "L"
      << "raised\n";
  for (const auto& rec : doc.at("rounds"))
    out << std::setw(7) << rec.at("round").get<std::int64_t>() << std::setw(14)
        << rec.at("action").get<std::string>() << std::setw(13)
        << rec.at("epsilon").get<double>() << std::setw(13)
        << rec.at("err_sam").get<double>() << std::setw(13)
        << rec.at("err_num").get<double>() << std::setw(5)
        << rec.at("max_level").get<int>()
        << (rec.at("raised_level").get<bool>() ? "yes" : "") << "\n";
  out << "\n"
      << std::setw(7) << "level" << std::setw(10) << "samples" << std::setw(13)
      << "z2_field" << std::setw(14) << "mean_v_norm" << std::setw(13)
      << "cost_ct"
      << "mem_mb\n";
  for (const auto& lv : doc.at("levels"))
    out << std::setw(7) << lv.at("level").get<int>() << std::setw(10)
        << lv.at("samples").get<std::int64_t>() << std::setw(13)
        << lv.at("z2_field").get<double>() << std::setw(14)
        << lv.at("mean_v_norm").get<double>() << std::setw(13)
        << lv.at("cost_ct").get<double>() << lv.at("cost_mem_mb").get<double>()
        << "\n";
  return out.str();
}

}  // namespace fieldmc
