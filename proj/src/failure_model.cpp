#include "liqlab/failure_model.hpp"

#include <cmath>
#include <stdexcept>

#include "liqlab/units.hpp"

namespace liqlab {

RateSchedule RateSchedule::constant(double lambda) {
  RateSchedule s;
  s.segments.push_back({1.0, lambda});
  return s;
}

void RateSchedule::validate() const {
  if (segments.empty()) throw std::invalid_argument("rate schedule has no segments");
  for (const auto& seg : segments) {
    if (!(seg.duration_years > 0.0) || !std::isfinite(seg.duration_years))
      throw std::invalid_argument("rate schedule segment duration must be positive");
    if (!(seg.lambda >= 0.0) || !std::isfinite(seg.lambda))
      throw std::invalid_argument("rate schedule lambda must be finite and non-negative");
  }
}

double RateSchedule::period() const {
  double p = 0.0;
  for (const auto& seg : segments) p += seg.duration_years;
  return p;
}

double RateSchedule::rate_at(double t) const {
  if (is_constant()) return segments[0].lambda;
  if (cyclic) t = std::fmod(t, period());
  for (const auto& seg : segments) {
    if (t < seg.duration_years) return seg.lambda;
    t -= seg.duration_years;
  }
  return segments.back().lambda;
}

double RateSchedule::mean_rate() const {
  if (!cyclic) return segments.front().lambda;
  double h = 0.0;
  for (const auto& seg : segments) h += seg.duration_years * seg.lambda;
  return h / period();
}

namespace {

// Hazard accumulated over [0, t) within one pass through the segment list,
// with the last segment extended when `extend_last` is set.
double partial_hazard(const std::vector<RateSchedule::Segment>& segs, double t,
                      bool extend_last) {
  double h = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const bool last = i + 1 == segs.size();
    if (t <= segs[i].duration_years || (last && extend_last)) return h + t * segs[i].lambda;
    h += segs[i].duration_years * segs[i].lambda;
    t -= segs[i].duration_years;
  }
  return h;
}

double partial_inverse(const std::vector<RateSchedule::Segment>& segs, double h,
                       bool extend_last) {
  double t = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const bool last = i + 1 == segs.size();
    const double seg_h = segs[i].duration_years * segs[i].lambda;
    if ((last && extend_last) || h <= seg_h) {
      if (segs[i].lambda > 0.0) return t + h / segs[i].lambda;
      if (h <= 0.0) return t;
      if (last && extend_last) return kNever;
    }
    h -= seg_h;
    t += segs[i].duration_years;
  }
  return t;
}

}  // namespace

double RateSchedule::cumulative(double t) const {
  if (is_constant()) return t * segments[0].lambda;
  if (!cyclic) return partial_hazard(segments, t, true);
  const double p = period();
  const double cycles = std::floor(t / p);
  const double per_cycle = partial_hazard(segments, p, false);
  return cycles * per_cycle + partial_hazard(segments, t - cycles * p, false);
}

double RateSchedule::inverse_cumulative(double h) const {
  if (is_constant()) return segments[0].lambda > 0.0 ? h / segments[0].lambda : kNever;
  if (!cyclic) return partial_inverse(segments, h, true);
  const double p = period();
  const double per_cycle = partial_hazard(segments, p, false);
  if (per_cycle <= 0.0) return kNever;
  double cycles = std::floor(h / per_cycle);
  double rest = h - cycles * per_cycle;
  if (rest < 0.0) rest = 0.0;
  return cycles * p + partial_inverse(segments, rest, false);
}

RateSchedule RateSchedule::scaled(double factor) const {
  RateSchedule out = *this;
  for (auto& seg : out.segments) {
    seg.lambda *= factor;
    seg.duration_years /= factor;
  }
  return out;
}

void TransientModel::validate() const {
  if (!(occurrence_rate >= 0.0)) throw std::invalid_argument("transient rate must be >= 0");
  if (!(duration_median_s > 0.0)) throw std::invalid_argument("transient median must be > 0");
  if (!(duration_shape > 0.0)) throw std::invalid_argument("transient shape must be > 0");
}

void SectorModel::validate() const {
  if (!(sector_rate >= 0.0)) throw std::invalid_argument("sector rate must be >= 0");
  if (!(sector_size > 0.0)) throw std::invalid_argument("sector size must be > 0");
}

double sample_next_node_failure(const RateSchedule& schedule, double now, Rng& rng) {
  if (now < 0.0) throw std::invalid_argument("now must be non-negative");
  const double e = rng.exponential();
  double t;
  if (schedule.is_constant()) {
    const double lambda = schedule.segments[0].lambda;
    if (!(lambda > 0.0)) return kNever;
    t = now + e / lambda;
  } else {
    t = schedule.inverse_cumulative(schedule.cumulative(now) + e);
  }
  // Guard against tiny increments rounding back onto `now`.
  return t > now ? t : std::nextafter(now, kNever);
}

double sample_next_poisson(double rate, double now, Rng& rng) {
  if (!(rate > 0.0)) return kNever;
  return now + rng.exponential() / rate;
}

double loglogistic_quantile(double median, double shape, double u) {
  return median * std::pow(u / (1.0 - u), 1.0 / shape);
}

double sample_loglogistic(double median, double shape, Rng& rng) {
  if (!(median > 0.0) || !(shape > 0.0))
    throw std::invalid_argument("log-logistic parameters must be positive");
  return loglogistic_quantile(median, shape, rng.uniform_open());
}

std::vector<std::pair<double, double>> sample_transient_events(const TransientModel& model,
                                                               std::uint32_t /*node*/,
                                                               double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  std::vector<std::pair<double, double>> out;
  if (!model.enabled()) return out;
  double t = 0.0;
  for (;;) {
    t = sample_next_poisson(model.occurrence_rate, t, rng);
    if (t >= horizon) break;
    const double dur = sample_loglogistic(model.duration_median_s, model.duration_shape, rng);
    out.emplace_back(t, t + seconds_to_years(dur));
  }
  return out;
}

std::vector<FailureEvent> sample_sector_failures(const SectorModel& model, double node_capacity,
                                                 double horizon, Rng& rng, std::uint32_t node) {
  std::vector<FailureEvent> out;
  if (!model.enabled()) return out;
  const double sectors = std::floor(node_capacity / model.sector_size);
  if (sectors * model.sector_size != node_capacity)
    throw std::invalid_argument("node capacity must be a multiple of the sector size");
  const double rate = sectors * model.sector_rate;
  double t = 0.0;
  for (;;) {
    t = sample_next_poisson(rate, t, rng);
    if (t >= horizon) break;
    out.push_back({t, node, FailureKind::Sector, rng.below(static_cast<std::uint64_t>(sectors))});
  }
  return out;
}

}  // namespace liqlab
