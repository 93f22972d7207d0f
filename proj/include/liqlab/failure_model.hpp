#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "liqlab/rng.hpp"

namespace liqlab {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

/// Piecewise-constant per-node failure rate (1/years). When `cyclic` is false
/// the final segment extends forever.
struct RateSchedule {
  struct Segment {
    double duration_years;
    double lambda;
  };
  std::vector<Segment> segments;
  bool cyclic = false;

  static RateSchedule constant(double lambda);

  void validate() const;
  bool is_constant() const { return segments.size() == 1; }
  double period() const;
  double rate_at(double t) const;
  double mean_rate() const;  // long-run average rate (cyclic) or first-segment rate
  double cumulative(double t) const;       // integrated hazard on [0, t]
  double inverse_cumulative(double h) const;  // smallest t with cumulative(t) >= h
  RateSchedule scaled(double factor) const;  // rates * factor, durations / factor
};

struct TransientModel {
  double occurrence_rate = 0.0;  // per node, 1/years
  double duration_median_s = 60.0;
  double duration_shape = 1.1;

  void validate() const;
  bool enabled() const { return occurrence_rate > 0.0; }
};

struct SectorModel {
  double sector_rate = 0.0;  // per sector, 1/years
  double sector_size = 4096.0;  // bytes

  void validate() const;
  bool enabled() const { return sector_rate > 0.0; }
  double node_rate(double node_capacity) const {
    return node_capacity / sector_size * sector_rate;
  }
};

enum class FailureKind : std::uint8_t { Permanent, TransientStart, TransientEnd, Sector };

struct FailureEvent {
  double time;
  std::uint32_t node;
  FailureKind kind;
  std::uint64_t sector = 0;
};

/// First failure time strictly after `now` for one node under `schedule`.
/// Returns kNever when the remaining hazard is zero.
double sample_next_node_failure(const RateSchedule& schedule, double now, Rng& rng);

/// Next arrival of a homogeneous Poisson process after `now`.
double sample_next_poisson(double rate, double now, Rng& rng);

double loglogistic_quantile(double median, double shape, double u);
double sample_loglogistic(double median, double shape, Rng& rng);

std::vector<std::pair<double, double>> sample_transient_events(const TransientModel& model,
                                                               std::uint32_t node,
                                                               double horizon, Rng& rng);

std::vector<FailureEvent> sample_sector_failures(const SectorModel& model, double node_capacity,
                                                 double horizon, Rng& rng,
                                                 std::uint32_t node = 0);

}  // namespace liqlab
