#include "liqlab/rate_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace liqlab {

namespace {
constexpr double kBinsPerUnitLog = 1e4;
}

void RateStats::add(double rate, double duration) {
  if (!(duration > 0.0)) return;
  total_time_ += duration;
  weighted_ += rate * duration;
  if (rate <= 0.0) {
    zero_time_ += duration;
    return;
  }
  peak_ = std::max(peak_, rate);
  auto& bin = bins_[std::llround(std::log(rate) * kBinsPerUnitLog)];
  bin.time += duration;
  bin.max_value = std::max(bin.max_value, rate);
}

double RateStats::mean() const {
  if (empty()) throw std::runtime_error("rate statistics of an empty trace");
  return weighted_ / total_time_;
}

double RateStats::quantile(double p) const {
  if (empty()) throw std::runtime_error("rate statistics of an empty trace");
  const double need = p * total_time_;
  if (zero_time_ >= need) return 0.0;
  std::vector<std::pair<std::int64_t, Bin>> sorted(bins_.begin(), bins_.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double acc = zero_time_;
  for (const auto& [key, bin] : sorted) {
    acc += bin.time;
    // Relative slack absorbs summation rounding of the time totals.
    if (acc >= need * (1.0 - 1e-12)) return bin.max_value;
  }
  return peak_;
}

RateSummary RateStats::summary() const {
  return {mean(), quantile(0.99), quantile(0.9999), peak_};
}

void RateStats::merge(const RateStats& other) {
  for (const auto& [key, bin] : other.bins_) {
    auto& mine = bins_[key];
    mine.time += bin.time;
    mine.max_value = std::max(mine.max_value, bin.max_value);
  }
  zero_time_ += other.zero_time_;
  total_time_ += other.total_time_;
  weighted_ += other.weighted_;
  peak_ = std::max(peak_, other.peak_);
}

RateSummary rate_statistics(const std::vector<std::pair<double, double>>& steps, double end_time) {
  if (steps.empty()) throw std::invalid_argument("rate statistics of an empty trace");
  RateStats st;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double until = i + 1 < steps.size() ? steps[i + 1].first : end_time;
    st.add(steps[i].second, until - steps[i].first);
  }
  return st.summary();
}

}  // namespace liqlab
