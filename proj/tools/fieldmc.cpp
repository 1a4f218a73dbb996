#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fieldmc/fieldmc.hpp"

namespace {

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw fieldmc::structural_error("cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_run(const std::string& config_path, const std::string& mode,
            const std::string& cost, bool seed_set, std::uint64_t seed) {
  fieldmc::run_config cfg = fieldmc::parse_config(read_text_file(config_path));
  if (!mode.empty()) cfg.mode = mode;
  if (!cost.empty()) cfg.cost = cost;
  if (seed_set) cfg.seed = seed;
  if (auto problems = fieldmc::validate(cfg); !problems.empty())
    throw fieldmc::config_error(std::move(problems));
  fieldmc::apply_environment(cfg);

  const fieldmc::driver_result result = fieldmc::run_bmlmc(cfg);
  const auto written =
      fieldmc::write_run_artifacts(result, std::filesystem::path(cfg.out_dir));

  std::cout << fieldmc::render_tables(fieldmc::report_json(result));
  std::cout << "wrote " << written.size() << " files to " << cfg.out_dir << "\n";
  return 0;  // every driver stop reason is a normal end of a budgeted run
}

int cmd_verify(const std::string& suite) {
  int failures = 0;
  for (const auto& r : fieldmc::run_suite(suite, &std::cout))
    failures += r.passed ? 0 : 1;
  return failures;
}

int cmd_report(const std::string& run_dir) {
  const std::filesystem::path doc_path =
      std::filesystem::path(run_dir) / "report.json";
  const nlohmann::json doc = nlohmann::json::parse(read_text_file(doc_path));
  std::cout << fieldmc::render_tables(doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"budgeted multilevel Monte Carlo estimator for flow and transport fields"};
  app.require_subcommand(1);

  std::string config_path, mode, cost;
  std::uint64_t seed = 0;
  CLI::App* run = app.add_subcommand("run", "execute a budgeted estimation run");
  run->add_option("--config", config_path, "run configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "statistic track override")
      ->check(CLI::IsMember({"field", "qoi", "both"}));
  run->add_option("--cost", cost, "cost accounting override")
      ->check(CLI::IsMember({"virtual", "wallclock"}));
  CLI::Option* seed_opt = run->add_option("--seed", seed, "base seed override");

  std::string suite = "all";
  CLI::App* verify = app.add_subcommand("verify", "run an acceptance check suite");
  verify->add_option("suite", suite,
                     "moments, scheduler, pde, driver, covariance, or all");

  std::string run_dir;
  CLI::App* report = app.add_subcommand("report", "render tables from a run directory");
  report->add_option("dir", run_dir, "directory holding report.json")->required();

  try {
    app.parse(argc, argv);
    if (run->parsed())
      return cmd_run(config_path, mode, cost, seed_opt->count() > 0, seed);
    if (verify->parsed()) return cmd_verify(suite);
    return cmd_report(run_dir);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const fieldmc::config_error& e) {
    for (const std::string& p : e.violations)
      std::cerr << "config: " << p << "\n";
    return 2;
  } catch (const fieldmc::task_error& e) {
    std::cerr << "sample task failed: " << e.what() << "\n";
    return 1;
  } catch (const fieldmc::solver_error& e) {
    std::cerr << "solver failed: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "report document: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
