#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <string>

#include <fieldmc/config.hpp>

using namespace fieldmc;

TEST_CASE("empty document yields the desk defaults") {
  const run_config cfg = parse_config("");
  REQUIRE(cfg.dim == 2);
  REQUIRE(cfg.base_cells == 2);
  REQUIRE(cfg.initial_levels == 2);
  REQUIRE(cfg.initial_samples == std::vector<std::int64_t>{8, 4, 2});
  REQUIRE(cfg.time_budget == 60.0);
  REQUIRE(cfg.memory_budget == 2048.0);
  REQUIRE(cfg.units == 8);
  REQUIRE(cfg.theta == 0.5);
  REQUIRE(cfg.eta == 0.7);
  REQUIRE(cfg.corr_length == 0.3);
  REQUIRE(cfg.smoothness == 1.0);
  REQUIRE(cfg.sigma == 1.0);
  REQUIRE(cfg.final_time == 0.5);
  REQUIRE(cfg.base_steps == 8);
  REQUIRE(cfg.mode == "field");
  REQUIRE(cfg.cost == "wallclock");
  REQUIRE(cfg.seed == 42);
  REQUIRE(cfg.max_rounds == 500);
}

TEST_CASE("comments, spacing, and repeated keys parse leniently") {
  const run_config cfg = parse_config(
      "# full line comment\n"
      "\n"
      "  theta=0.4   # trailing comment\n"
      "eta =  0.9\n"
      "eta = 0.8\n"  // last assignment wins
      "snapshot_times = 0.25 0.5\n");
  REQUIRE(cfg.theta == 0.4);
  REQUIRE(cfg.eta == 0.8);
  REQUIRE(cfg.snapshot_times == std::vector<double>{0.25, 0.5});
}

TEST_CASE("emit and parse round-trip every field exactly") {
  run_config cfg;
  cfg.dim = 1;
  cfg.base_cells = 3;
  cfg.initial_levels = 3;
  cfg.initial_samples = {16, 8, 4, 2};
  cfg.time_budget = 12.75;
  cfg.memory_budget = 300.5;
  cfg.units = 4;
  cfg.theta = 0.30000000000000004;  // not exactly representable in decimal
  cfg.eta = 0.6123456789012345;
  cfg.corr_length = 0.27;
  cfg.smoothness = 1.5;  // zeta = 1 in one dimension
  cfg.sigma = 1.25;
  cfg.variance_scale = 0.031;
  cfg.final_time = 0.4;
  cfg.snapshot_times = {0.1, 0.30000000000000004, 0.4};
  cfg.base_steps = 4;
  cfg.mode = "both";
  cfg.cost = "virtual";
  cfg.virtual_base = 0.125;
  cfg.seed = 1234567890123456789ULL;
  cfg.out_dir = "runs/trip";
  cfg.max_rounds = 7;
  cfg.level_cap = 5;
  REQUIRE(validate(cfg).empty());
  const run_config back = parse_config(emit_config(cfg));
  REQUIRE(back == cfg);
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    parse_config("thetta = 0.5\n");
    FAIL("expected rejection");
  } catch (const config_error& e) {
    REQUIRE(e.violations.size() == 1);
    REQUIRE(e.violations[0].find("unknown key") != std::string::npos);
  }
}

TEST_CASE("violations aggregate into one rejection") {
  try {
    parse_config("dim = 5\ntheta = 1.5\nunits = 3\n");
    FAIL("expected rejection");
  } catch (const config_error& e) {
    REQUIRE(e.violations.size() == 3);
    bool saw_units = false;
    for (const std::string& v : e.violations)
      if (v.find("power of two") != std::string::npos) saw_units = true;
    REQUIRE(saw_units);
  }
}

TEST_CASE("field exponent restriction couples smoothness and dimension") {
  REQUIRE_THROWS_AS(parse_config("smoothness = 2\n"), config_error);  // d = 2
  REQUIRE_THROWS_AS(parse_config("dim = 1\n"), config_error);  // nu = 1, zeta 3/4
  const run_config line = parse_config("dim = 1\nsmoothness = 1.5\n");
  REQUIRE(line.smoothness == 1.5);
  const run_config plane = parse_config("smoothness = 1\n");
  REQUIRE(matern_kappa(to_chain_config(plane).matern, plane.dim) ==
          Catch::Approx(4.7140452079103168).epsilon(1e-14));
}

TEST_CASE("value parse failures name the key") {
  try {
    parse_config("theta = warm\nbase_steps = 1 2\n");
    FAIL("expected rejection");
  } catch (const config_error& e) {
    REQUIRE(e.violations.size() == 2);
    REQUIRE(e.violations[0].find("theta") != std::string::npos);
    REQUIRE(e.violations[1].find("base_steps") != std::string::npos);
  }
}

TEST_CASE("sample schedule must cover exactly the initial levels") {
  REQUIRE_THROWS_AS(parse_config("initial_samples = 8 4\n"), config_error);
  REQUIRE_THROWS_AS(parse_config("initial_samples = 8 4 1\n"), config_error);
  const run_config cfg = parse_config("initial_levels = 1\ninitial_samples = 6 3\n");
  REQUIRE(cfg.initial_samples == std::vector<std::int64_t>{6, 3});
}

TEST_CASE("snapshot times must increase inside the horizon") {
  REQUIRE_THROWS_AS(parse_config("snapshot_times = 0.2 0.1\n"), config_error);
  REQUIRE_THROWS_AS(parse_config("snapshot_times = 0.2 0.7\n"), config_error);
  REQUIRE_NOTHROW(parse_config("final_time = 0.7\nsnapshot_times = 0.2 0.7\n"));
}

TEST_CASE("chain settings project out of the run config") {
  run_config cfg;
  cfg.dim = 1;
  cfg.smoothness = 1.5;
  cfg.base_steps = 4;
  cfg.final_time = 0.25;
  cfg.variance_scale = 0.02;
  const chain_config chain = to_chain_config(cfg);
  REQUIRE(chain.dim == 1);
  REQUIRE(chain.base_cells == 2);
  REQUIRE(chain.base_steps == 4);
  REQUIRE(chain.final_time == 0.25);
  REQUIRE(chain.matern.corr_length == 0.3);
  REQUIRE(chain.matern.smoothness == 1.5);
  REQUIRE(chain.matern.variance_scale == 0.02);
  REQUIRE(chain.snapshot_times == cfg.snapshot_times);
}

TEST_CASE("environment override redirects the output directory") {
  run_config cfg;
  REQUIRE(setenv("FIELDMC_OUT", "/tmp/fieldmc-env-test", 1) == 0);
  apply_environment(cfg);
  REQUIRE(cfg.out_dir == "/tmp/fieldmc-env-test");
  REQUIRE(unsetenv("FIELDMC_OUT") == 0);
  apply_environment(cfg);
  REQUIRE(cfg.out_dir == "/tmp/fieldmc-env-test");  // absent leaves it alone
}
