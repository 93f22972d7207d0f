#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "liqlab/failure_model.hpp"
#include "liqlab/units.hpp"

using namespace liqlab;

namespace {

double poisson_cdf(int k, double mu) {
  double s = 0.0;
  for (int i = 0; i <= k; ++i) s += std::exp(i * std::log(mu) - mu - std::lgamma(i + 1.0));
  return s;
}

// Kolmogorov-Smirnov distance against Exp(rate).
double ks_exponential(std::vector<double> xs, double rate) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = -std::expm1(-rate * xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

}  // namespace

TEST_CASE("node lifetimes under a constant rate average 1/lambda") {
  const auto sched = RateSchedule::constant(1.0 / 3.0);
  Rng rng(42);
  double sum = 0.0;
  const int samples = 1000000;
  for (int i = 0; i < samples; ++i) sum += sample_next_node_failure(sched, 0.0, rng);
  CHECK(sum / samples == doctest::Approx(3.0).epsilon(0.01));
}

TEST_CASE("a huge failure rate fails almost immediately") {
  Rng rng(1);
  const double t = sample_next_node_failure(RateSchedule::constant(1e9), 0.0, rng);
  CHECK(t > 0.0);
  CHECK(t < 1e-6);
}

TEST_CASE("failure times are strictly after now") {
  Rng rng(5);
  const auto sched = RateSchedule::constant(1e12);
  for (int i = 0; i < 1000; ++i) CHECK(sample_next_node_failure(sched, 7.5, rng) > 7.5);
}

TEST_CASE("an all-zero schedule never fails") {
  Rng rng(3);
  RateSchedule s;
  s.segments = {{2.0, 0.0}, {3.0, 0.0}};
  s.cyclic = true;
  CHECK(sample_next_node_failure(s, 0.0, rng) == kNever);
  CHECK(sample_next_node_failure(RateSchedule::constant(0.0), 1.0, rng) == kNever);
}

TEST_CASE("periodic schedule yields four failures per ten-year period") {
  RateSchedule s;
  s.segments = {{9.0, 1.0 / 3.0}, {1.0, 1.0}};
  s.cyclic = true;
  CHECK(s.cumulative(10.0) == doctest::Approx(4.0));
  CHECK(s.mean_rate() == doctest::Approx(0.4));
  Rng rng(2024);
  const double periods = 1e5;
  const double horizon = 10.0 * periods;
  long count = 0;
  for (double t = sample_next_node_failure(s, 0.0, rng); t <= horizon;
       t = sample_next_node_failure(s, t, rng))
    ++count;
  CHECK(count / periods == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("integrated hazard inverts exactly across segments") {
  RateSchedule s;
  s.segments = {{9.0, 1.0 / 3.0}, {1.0, 1.0}};
  s.cyclic = true;
  for (double t : {0.0, 0.5, 8.999, 9.0, 9.5, 10.0, 27.3, 1234.56}) {
    CHECK(s.inverse_cumulative(s.cumulative(t)) == doctest::Approx(t).epsilon(1e-12));
  }
  RateSchedule once;
  once.segments = {{5.0, 1.0}, {1.0, 2.0}};
  CHECK(once.rate_at(100.0) == 2.0);
  CHECK(once.cumulative(10.0) == doctest::Approx(5.0 + 2.0 * 5.0));
}

TEST_CASE("schedule validation rejects bad segments") {
  RateSchedule s;
  CHECK_THROWS(s.validate());
  s.segments = {{0.0, 1.0}};
  CHECK_THROWS(s.validate());
  s.segments = {{1.0, -1.0}};
  CHECK_THROWS(s.validate());
  s.segments = {{1.0, 1.0}};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("inter-arrivals inside one constant segment are exponential") {
  RateSchedule s;
  s.segments = {{1e6, 1.0 / 3.0}, {1.0, 5.0}};
  Rng rng(99);
  std::vector<double> gaps;
  double prev = 0.0;
  for (double t = sample_next_node_failure(s, 0.0, rng); t < 1e6 && gaps.size() < 200000;
       t = sample_next_node_failure(s, t, rng)) {
    gaps.push_back(t - prev);
    prev = t;
  }
  const double crit = 1.628 / std::sqrt(static_cast<double>(gaps.size()));  // 1% level
  CHECK(ks_exponential(gaps, 1.0 / 3.0) < crit);
}

TEST_CASE("merged node stream has mean inter-arrival 1/(lambda M)") {
  const int nodes = 402;
  const double lambda = 1.0 / 3.0;
  const auto sched = RateSchedule::constant(lambda);
  Rng rng(7);
  std::vector<double> times;
  const double horizon = 1e6 / (lambda * nodes);
  for (int v = 0; v < nodes; ++v)
    for (double t = sample_next_node_failure(sched, 0.0, rng); t <= horizon;
         t = sample_next_node_failure(sched, t, rng))
      times.push_back(t);
  std::sort(times.begin(), times.end());
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double g = times[i] - times[i - 1];
    sum += g;
    sq += g * g;
  }
  const double m = static_cast<double>(times.size() - 1);
  const double mean = sum / m;
  const double sd = std::sqrt(sq / m - mean * mean);
  CHECK(std::abs(mean - 1.0 / (lambda * nodes)) < 3.0 * sd / std::sqrt(m));
}

TEST_CASE("same seed reproduces the same stream") {
  const auto sched = RateSchedule::constant(0.5);
  Rng a(11), b(11);
  for (int i = 0; i < 1000; ++i)
    CHECK(sample_next_node_failure(sched, i * 0.1, a) == sample_next_node_failure(sched, i * 0.1, b));
  TransientModel tm{3.0, 60.0, 1.1};
  Rng c(4), d(4);
  CHECK(sample_transient_events(tm, 0, 50.0, c) == sample_transient_events(tm, 0, 50.0, d));
}

TEST_CASE("log-logistic quantiles") {
  CHECK(loglogistic_quantile(60.0, 1.1, 0.5) == 60.0);
  // 60 * 9^(1/1.1), evaluated independently at 40 digits.
  CHECK(loglogistic_quantile(60.0, 1.1, 0.9) == doctest::Approx(442.22617118139708).epsilon(1e-12));
}

TEST_CASE("log-logistic sampler matches the transient duration model") {
  Rng rng(123);
  const int samples = 1000000;
  int over_15min = 0, below_median = 0;
  for (int i = 0; i < samples; ++i) {
    const double d = sample_loglogistic(60.0, 1.1, rng);
    over_15min += d > 900.0;
    below_median += d <= 60.0;
  }
  CHECK(over_15min < samples / 10);
  CHECK(static_cast<double>(below_median) / samples == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("transient events") {
  Rng rng(8);
  CHECK(sample_transient_events(TransientModel{}, 0, 100.0, rng).empty());

  TransientModel tm{1.0 / 0.33, 60.0, 1.1};
  const auto ev = sample_transient_events(tm, 3, 33.0, rng);
  for (const auto& [start, end] : ev) {
    CHECK(start <= 33.0);
    CHECK(end > start);
  }

  double total = 0.0;
  const int runs = 10000;
  // Bins over the count with df = 7; chi-square critical value at 1% is 18.475.
  const int edges[] = {85, 90, 95, 100, 105, 110, 115};
  std::vector<double> observed(8, 0.0);
  for (int i = 0; i < runs; ++i) {
    Rng r(1000 + i);
    const int c = static_cast<int>(sample_transient_events(tm, 0, 33.0, r).size());
    total += c;
    int bin = 0;
    while (bin < 7 && c >= edges[bin]) ++bin;
    observed[bin] += 1.0;
  }
  CHECK(total / runs == doctest::Approx(100.0).epsilon(0.1));
  const double mu = 33.0 / 0.33;
  double chi2 = 0.0, prev = 0.0;
  for (int bin = 0; bin < 8; ++bin) {
    const double cdf = bin < 7 ? poisson_cdf(edges[bin] - 1, mu) : 1.0;
    const double expected = runs * (cdf - prev);
    chi2 += (observed[bin] - expected) * (observed[bin] - expected) / expected;
    prev = cdf;
  }
  CHECK(chi2 < 18.475);
}

TEST_CASE("sector failure rate per node") {
  SectorModel sm{1.0 / 5e8, 4096.0};
  CHECK(sm.node_rate(kPiB) == doctest::Approx(549.755813888).epsilon(1e-12));
  Rng rng(17);
  const auto ev = sample_sector_failures(sm, kPiB, 100.0, rng, 5);
  CHECK(ev.size() / 100.0 == doctest::Approx(549.755813888).epsilon(0.02));
  for (const auto& e : ev) {
    CHECK(e.node == 5u);
    CHECK(e.kind == FailureKind::Sector);
    CHECK(e.sector < static_cast<std::uint64_t>(kPiB / 4096.0));
  }
  CHECK(sample_sector_failures(SectorModel{}, kPiB, 100.0, rng).empty());
  CHECK_THROWS(sample_sector_failures(sm, 4097.0, 1.0, rng));

  // Bytes lost per year: a whole node every 3 years versus single sectors.
  const double node_bytes_per_year = kPiB / 3.0;
  const double sector_bytes_per_year = sm.node_rate(kPiB) * 4096.0;
  CHECK(node_bytes_per_year / sector_bytes_per_year > 1e8);
}
