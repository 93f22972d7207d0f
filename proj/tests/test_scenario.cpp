#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "liqlab/scenario.hpp"
#include "liqlab/units.hpp"

using namespace liqlab;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(LIQLAB_SOURCE_DIR) / "scenarios";

nlohmann::json minimal() {
  return nlohmann::json::parse(R"({
    "name": "tiny",
    "cluster": {"nodes": 12, "node_capacity_pb": 0.001, "code": {"n": 12, "k": 8, "r": 4},
                "object_size_bytes": 1048576, "queue_cells": 50, "t_rit_hours": 24},
    "policy": {"kind": "fixed", "r_peak_bps": 2e9},
    "failure": {"node": {"mean_life_years": 0.5}},
    "run": {"max_years": 20, "max_losses": 50, "seeds": [3]}
  })");
}

std::string error_of(const nlohmann::json& j) {
  try {
    parse_scenario(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("bundled scenarios parse and round-trip") {
  int count = 0;
  for (const char* scale : {"full", "desk"}) {
    for (const auto& entry : fs::directory_iterator(kScenarios / scale)) {
      if (entry.path().extension() != ".json") continue;
      CAPTURE(entry.path().string());
      const Scenario s = load_scenario(entry.path());
      CHECK(s.name == entry.path().stem().string());
      const ordered_json once = scenario_to_json(s);
      const ordered_json twice = scenario_to_json(parse_scenario(once));
      CHECK(once == twice);
      CHECK_NOTHROW(build_cluster(s));
      CHECK_NOTHROW(build_models(s));
      ++count;
    }
  }
  CHECK(count == 24);
}

TEST_CASE("file units map to engine units") {
  const Scenario s = parse_scenario(minimal());
  const ClusterConfig c = build_cluster(s);
  CHECK(c.node_capacity_bytes == doctest::Approx(0.001 * kPiB));
  CHECK(c.t_rit_years == doctest::Approx(24.0 * 3600.0 / kSecondsPerYear));
  CHECK(c.policy.kind == PolicyKind::FixedLiquid);
  const FailureModels m = build_models(s);
  CHECK(m.node.rate_at(0.0) == doctest::Approx(2.0));
  const RunLimits l = build_limits(s, 9);
  CHECK(l.seed == 9u);
  CHECK(l.max_years == 20.0);
}

TEST_CASE("unknown and missing keys name their path") {
  auto j = minimal();
  j["cluster"]["code"]["m"] = 3;
  CHECK(error_of(j).rfind("cluster.code.m:", 0) == 0);

  j = minimal();
  j["cluster"]["code"].erase("k");
  CHECK(error_of(j).rfind("cluster.code.k:", 0) == 0);

  j = minimal();
  j["cluster"].erase("code");
  CHECK(error_of(j).rfind("cluster.code:", 0) == 0);

  j = minimal();
  j["extra"] = true;
  CHECK(error_of(j).rfind("extra:", 0) == 0);

  j = minimal();
  j["cluster"]["nodes"] = "twelve";
  CHECK(error_of(j).rfind("cluster.nodes:", 0) == 0);

  j = minimal();
  j["policy"]["kind"] = "regulated";
  CHECK(error_of(j).rfind("policy.r_peak_bps:", 0) == 0);
  j["policy"].erase("r_peak_bps");
  CHECK(error_of(j).rfind("regulator:", 0) == 0);
}

TEST_CASE("invariant violations are configuration errors") {
  auto j = minimal();
  j["cluster"]["code"]["r"] = 3;
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);
  j = minimal();
  j["cluster"]["nodes"] = 10;
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);
  j = minimal();
  j["run"]["max_years"] = 0;
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);
  j = minimal();
  j["failure"]["node"]["mean_life_years"] = -1;
  CHECK_THROWS_AS(parse_scenario(j), ConfigError);
  CHECK_THROWS_AS(load_scenario(kScenarios / "does_not_exist.json"), ConfigError);
}

TEST_CASE("report and summary documents") {
  const Scenario s = parse_scenario(minimal());
  const auto cfg = build_cluster(s);
  const auto models = build_models(s);
  const auto a = run_simulation(cfg, models, build_limits(s, 3));
  const auto b = run_simulation(cfg, models, build_limits(s, 4));

  const auto rep = report_to_json(s, 3, a, std::nullopt);
  const char* keys[] = {"scenario", "seed",  "simulated_years", "loss_events",     "mttdl_years",
                        "r_avg",    "r_99",  "r_9999",          "r_peak_observed", "trace"};
  for (const char* key : keys) CHECK(rep.contains(key));
  CHECK(rep["trace"].is_null());
  CHECK(report_to_json(s, 3, a, std::string("tiny.trace.csv"))["trace"] == "tiny.trace.csv");

  const auto sum = summary_to_json(s, {3, 4}, {a, b});
  const double years = a.simulated_years + b.simulated_years;
  const auto losses = a.loss_events + b.loss_events;
  CHECK(sum["loss_events"] == losses);
  CHECK(sum["mttdl_years"].get<double>() == doctest::Approx(years / (losses + 2)));
  CHECK(sum["r_peak_observed"].get<double>() ==
        doctest::Approx(std::max(a.r_peak_observed, b.r_peak_observed)));
}

TEST_CASE("trace CSV and number formatting") {
  std::ostringstream out;
  write_trace_csv(out, {{0.0, 0.0, TraceEvent::RateChange}, {0.1, 1.5e11, TraceEvent::NodeFail}});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "time_years,read_rate_bps,event");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
  for (double v : {0.1, 1.0 / 3.0, 110.149e9, 1e-300, 0.0})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("atomic writes leave no temporary file") {
  const fs::path dir = fs::temp_directory_path() / "liqlab_scenario_test";
  fs::create_directories(dir);
  const fs::path file = dir / "out.json";
  write_file_atomic(file, "{}\n");
  write_file_atomic(file, "{\"a\": 1}\n");
  std::ifstream in(file);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "{\"a\": 1}\n");
  CHECK_FALSE(fs::exists(dir / "out.json.tmp"));
  fs::remove_all(dir);
}
