#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

namespace liqlab {

struct RateSummary {
  double r_avg = 0.0;
  double r_99 = 0.0;
  double r_9999 = 0.0;
  double r_peak = 0.0;
};

/// Time-weighted statistics of a piecewise-constant rate.
///
/// Values are binned by log with a relative width of 1e-4 and each bin keeps
/// its largest value, so quantiles are exact whenever distinct rate levels
/// are more than 0.01% apart.
class RateStats {
 public:
  void add(double rate, double duration);
  bool empty() const { return total_time_ == 0.0; }
  double total_time() const { return total_time_; }
  double mean() const;
  double peak() const { return peak_; }
  /// Smallest observed level v with time fraction(rate <= v) >= p.
  double quantile(double p) const;
  RateSummary summary() const;
  void merge(const RateStats& other);

 private:
  struct Bin {
    double time = 0.0;
    double max_value = 0.0;
  };
  std::unordered_map<std::int64_t, Bin> bins_;
  double zero_time_ = 0.0;
  double total_time_ = 0.0;
  double weighted_ = 0.0;
  double peak_ = 0.0;
};

/// Statistics of an explicit trace of (start time, rate) steps; the last
/// step lasts until `end_time`.
RateSummary rate_statistics(const std::vector<std::pair<double, double>>& steps, double end_time);

}  // namespace liqlab
