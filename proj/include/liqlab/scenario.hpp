#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "liqlab/cluster_sim.hpp"

namespace liqlab {

using ordered_json = nlohmann::ordered_json;

/// Invalid scenario content. The message starts with the offending key path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scenario files keep their own units (hours, PB, mean lifetimes) so that a
// parse/serialize round trip reproduces the file values exactly. The engine
// inputs are derived from them by build_cluster() and build_models().

struct NodeFailureSpec {
  struct Segment {
    double duration_years;
    double mean_life_years;
  };
  double mean_life_years = 3.0;  // used when `segments` is empty
  std::vector<Segment> segments;
  bool cyclic = false;
};

struct TransientSpec {
  double mean_interval_years = 0.0;  // 0 disables transients
  double duration_median_seconds = 60.0;
  double duration_shape = 1.1;
};

struct SectorSpec {
  double mean_life_years = 0.0;  // per sector; 0 disables sector failures
  double sector_size_bytes = 4096.0;
};

struct RegulatorSpec {
  std::optional<double> f_tar;  // default (2/3)·r/n
  std::optional<double> f_T;    // default r/n
  double gamma = 1.0 / 3.0;
  double window_coeff = 7.0 / 6.0;
  double rate_cap_bps = 0.0;
  bool use_estimator = true;
};

struct Scenario {
  std::string name;

  int nodes = 0;
  double node_capacity_pb = 1.0;  // binary petabytes (2^50 bytes)
  int n = 0, k = 0, r = 0;
  int placement_groups = 0;
  double object_size_bytes = 1073741824.0;
  int queue_cells = 10000;
  double t_rit_hours = 0.0;

  std::string policy = "fixed";  // reactive | fixed | regulated
  double r_peak_bps = 0.0;       // reactive and fixed
  int active_groups = 100;
  std::optional<RegulatorSpec> regulator;
  double design_mean_life_years = 0.0;  // estimator priming; 0 = failure schedule

  NodeFailureSpec node_failures;
  TransientSpec transient;
  SectorSpec sector;

  double capacity_factor = 1.0;
  double time_factor = 1.0;

  double max_years = 1.0;
  std::int64_t max_losses = 200;
  std::vector<std::uint64_t> seeds{1};
  bool trace = false;
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);
ordered_json scenario_to_json(const Scenario& s);

/// Engine inputs; both throw ConfigError when a module invariant fails.
ClusterConfig build_cluster(const Scenario& s);
FailureModels build_models(const Scenario& s);
RunLimits build_limits(const Scenario& s, std::uint64_t seed);

ordered_json report_to_json(const Scenario& s, std::uint64_t seed, const SimReport& rep,
                            const std::optional<std::string>& trace_file);

/// Pools independent runs: MTTDL is total years over (total losses + runs).
ordered_json summary_to_json(const Scenario& s, const std::vector<std::uint64_t>& seeds,
                             const std::vector<SimReport>& reports);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace liqlab
