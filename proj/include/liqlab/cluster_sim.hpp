#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <string>
#include <vector>

#include "liqlab/failure_model.hpp"
#include "liqlab/rate_stats.hpp"
#include "liqlab/regulator.hpp"

namespace liqlab {

struct CodeParams {
  int n = 0;
  int k = 0;
  int r = 0;

  double beta() const { return static_cast<double>(r) / n; }
  void validate() const;
};

enum class PolicyKind { Reactive, FixedLiquid, Regulated };

struct RepairPolicy {
  PolicyKind kind = PolicyKind::FixedLiquid;
  double r_peak_bps = 0.0;   // burst rate, fixed rate, or regulator cap
  RegulatorParams regulator;  // Regulated only
  bool use_estimator = true;  // Regulated: false uses the true current rate
  int active_groups = 100;    // Reactive: groups repaired concurrently
};

const char* to_string(PolicyKind k);

/// Cluster description. Values are stored unscaled; `capacity_scale` and
/// `time_scale` are applied by the engine so that scaled runs stay coupled
/// to the unscaled run with the same seed.
struct ClusterConfig {
  int nodes = 0;                    // M
  double node_capacity_bytes = 0;   // S
  CodeParams code;
  int placement_groups = 0;         // P; 0 picks 1 (liquid) or round(100·M/n) (reactive)
  double object_size_bytes = 0;
  int queue_cells = 10000;          // frontier quantization over the whole system
  double t_rit_years = 0;
  RepairPolicy policy;
  double design_rate = 0;           // per-node rate for estimator priming; 0 = schedule
  double capacity_scale = 1.0;
  double time_scale = 1.0;

  void validate() const;
  int groups() const;
  int cells_per_group() const;
  double d_src_bytes() const;          // with capacity scaling
  double effective_capacity() const { return node_capacity_bytes * capacity_scale; }
  double effective_rate_bps() const { return policy.r_peak_bps * capacity_scale; }
};

/// S (and with it every rate) is multiplied by `s_factor`; failure rates are
/// multiplied and T_RIT divided by `lambda_factor` through a clock rescale.
ClusterConfig apply_scaling(const ClusterConfig& cfg, double s_factor, double lambda_factor);

struct FailureModels {
  RateSchedule node = RateSchedule::constant(1.0 / 3.0);
  TransientModel transient;
  SectorModel sector;
  /// Extra events injected at fixed times on top of the random streams.
  /// A scripted transient has no sampled duration: it lasts until a scripted
  /// TransientEnd for the same node (or its declaration). A scripted sector
  /// failure picks its fragment at random like a sampled one.
  std::vector<FailureEvent> scripted;

  void validate() const;
};

struct RunLimits {
  double max_years = 1.0;
  std::int64_t max_losses = 200;
  std::uint64_t seed = 1;
  bool trace = false;
};

enum class TraceEvent : std::uint8_t {
  NodeFail,
  TransientStart,
  TransientEnd,
  SectorFail,
  Repair,
  Loss,
  RateChange
};

const char* to_string(TraceEvent e);

struct TraceRow {
  double time_years;
  double rate_bps;
  TraceEvent event;
};

struct SimReport {
  double simulated_years = 0;
  std::int64_t loss_events = 0;
  double mttdl_years = 0;
  double r_avg = 0;
  double r_99 = 0;
  double r_9999 = 0;
  double r_peak_observed = 0;
  bool has_trace = false;
  std::vector<TraceRow> trace;

  // Diagnostics beyond the report file.
  std::vector<double> loss_times;
  std::vector<double> missing_at_repair;  // repaired-object mass by erased count
  double read_bytes = 0;
  double regenerated_fragments = 0;       // per-object average
  std::int64_t node_failures = 0;
  std::int64_t transient_starts = 0;
  std::int64_t sector_failures = 0;
  std::int64_t corruptions_found = 0;
  std::int64_t stall_episodes = 0;
  RateStats rates;  // engine clock; multiply rates by time_scale for physical units
};

/// Runs one seeded simulation from a perfect state of repair.
SimReport run_simulation(const ClusterConfig& cfg, const FailureModels& models,
                         const RunLimits& limits);

/// Balanced random placement of P groups of n distinct nodes.
std::vector<std::vector<std::uint32_t>> balanced_placement(int nodes, int groups, int n, Rng& rng);

/// Indices of the `limit` best groups: fewest available fragments, then
/// oldest pending failure, then lowest index.
struct PendingGroup {
  int available;
  double oldest;
  int index;
  bool operator<(const PendingGroup& o) const {
    if (available != o.available) return available < o.available;
    if (oldest != o.oldest) return oldest < o.oldest;
    return index < o.index;
  }
};
std::vector<int> reactive_selection(std::vector<PendingGroup> pending, int limit);

/// Incrementally maintained version of reactive_selection: the first `limit`
/// pending groups in priority order are active.
class ActiveSet {
 public:
  using Changes = std::vector<std::pair<int, bool>>;  // (group, now active)

  explicit ActiveSet(int limit) : limit_(limit) {}
  void insert(const PendingGroup& g, Changes& changes);
  void erase(const PendingGroup& g, Changes& changes);
  void clear() {
    active_.clear();
    waiting_.clear();
  }
  std::size_t active_count() const { return active_.size(); }
  std::vector<int> active() const;

 private:
  int limit_;
  std::set<PendingGroup> active_;
  std::set<PendingGroup> waiting_;
};

}  // namespace liqlab
