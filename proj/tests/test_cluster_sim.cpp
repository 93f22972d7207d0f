#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "liqlab/cluster_sim.hpp"
#include "liqlab/units.hpp"

using namespace liqlab;

namespace {

constexpr double kMinute = 60.0 / kSecondsPerYear;
constexpr double kHour = 3600.0 / kSecondsPerYear;

ClusterConfig liquid_402(PolicyKind kind = PolicyKind::FixedLiquid) {
  ClusterConfig c;
  c.nodes = 402;
  c.node_capacity_bytes = kPiB;
  c.code = {402, 268, 134};
  c.object_size_bytes = kGiB;
  c.queue_cells = 1000;
  c.t_rit_years = 24 * kHour;
  c.policy.kind = kind;
  c.policy.r_peak_bps = 110.149e9;
  if (kind == PolicyKind::Regulated) {
    c.policy.regulator = RegulatorParams::defaults(402, 134);
    c.policy.r_peak_bps = 311e9;
  }
  return c;
}

ClusterConfig small_reactive(int nodes) {
  ClusterConfig c;
  c.nodes = nodes;
  c.node_capacity_bytes = kPiB;
  c.code = {9, 6, 3};
  c.object_size_bytes = kGiB;
  c.t_rit_years = 30 * kMinute;
  c.policy.kind = PolicyKind::Reactive;
  c.policy.r_peak_bps = 6.4e12;
  return c;
}

FailureModels quiet() {
  FailureModels m;
  m.node = RateSchedule::constant(0.0);
  return m;
}

RunLimits limits(double years, bool trace = true, std::uint64_t seed = 1) {
  RunLimits l;
  l.max_years = years;
  l.max_losses = 1000;
  l.seed = seed;
  l.trace = trace;
  return l;
}

std::vector<TraceRow> rows_of(const SimReport& rep, TraceEvent ev) {
  std::vector<TraceRow> out;
  for (const auto& row : rep.trace)
    if (row.event == ev) out.push_back(row);
  return out;
}

}  // namespace

TEST_CASE("configuration validation") {
  auto c = liquid_402();
  CHECK_NOTHROW(c.validate());
  c.code.r = 130;
  CHECK_THROWS(c.validate());
  c = liquid_402();
  c.nodes = 300;
  CHECK_THROWS(c.validate());
  c = liquid_402();
  c.policy.r_peak_bps = 0.0;
  CHECK_THROWS(c.validate());
  c = liquid_402();
  c.queue_cells = 0;
  CHECK_THROWS(c.validate());
  c = liquid_402();
  c.placement_groups = 3;
  CHECK_THROWS(c.validate());
  c = small_reactive(402);
  c.policy.active_groups = 0;
  CHECK_THROWS(c.validate());
  c = small_reactive(402);
  c.object_size_bytes = 1e30;
  CHECK_THROWS(c.validate());

  FailureModels m;
  m.scripted.push_back({-1.0, 0, FailureKind::Permanent});
  CHECK_THROWS(m.validate());
  m.scripted = {{1.0, 9999, FailureKind::Permanent}};
  CHECK_THROWS(run_simulation(liquid_402(), m, limits(2.0)));
}

TEST_CASE("placement groups and cell counts") {
  const auto r = small_reactive(3010);
  CHECK(r.groups() == 33444);
  const auto l = liquid_402();
  CHECK(l.groups() == 1);
  CHECK(l.cells_per_group() == 1000);
  // 268 PiB of source data repaired at 104 Gbps takes 0.7355 years.
  CHECK(l.d_src_bytes() == doctest::Approx(268.0 * kPiB));
  const double t = 8.0 * l.d_src_bytes() / 104e9 / kSecondsPerYear;
  CHECK(t == doctest::Approx(0.73550775781).epsilon(1e-10));
  CHECK(t / 3.0 == doctest::Approx(0.24516925).epsilon(1e-7));
}

TEST_CASE("balanced placement") {
  Rng rng(3);
  const auto groups = balanced_placement(3010, 33444, 9, rng);
  std::vector<int> load(3010, 0);
  for (const auto& g : groups) {
    CHECK(std::set<std::uint32_t>(g.begin(), g.end()).size() == 9u);
    for (auto v : g) ++load[v];
  }
  const auto [lo, hi] = std::minmax_element(load.begin(), load.end());
  CHECK(*hi - *lo <= 1);
  CHECK(*hi == 100);
}

TEST_CASE("active set agrees with a brute-force selection") {
  Rng rng(9);
  const int limit = 7;
  ActiveSet set(limit);
  std::map<int, PendingGroup> pending;
  for (int step = 0; step < 3000; ++step) {
    ActiveSet::Changes changes;
    const int idx = static_cast<int>(rng.below(40));
    if (auto it = pending.find(idx); it != pending.end()) {
      set.erase(it->second, changes);
      pending.erase(it);
    } else {
      const PendingGroup g{static_cast<int>(rng.below(4)) + 5, std::floor(rng.uniform() * 5.0), idx};
      set.insert(g, changes);
      pending[idx] = g;
    }
    std::vector<PendingGroup> all;
    for (const auto& [i, g] : pending) all.push_back(g);
    auto want = reactive_selection(all, limit);
    auto got = set.active();
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    CHECK(got == want);
  }
}

TEST_CASE("no failures means no repair") {
  for (auto kind : {PolicyKind::FixedLiquid, PolicyKind::Regulated}) {
    const auto rep = run_simulation(liquid_402(kind), quiet(), limits(10.0));
    CHECK(rep.loss_events == 0);
    CHECK(rep.read_bytes == 0.0);
    CHECK(rep.r_avg == 0.0);
    CHECK(rep.simulated_years == doctest::Approx(10.0));
  }
  const auto rep = run_simulation(small_reactive(90), quiet(), limits(10.0));
  CHECK(rep.read_bytes == 0.0);
  CHECK(rep.r_peak_observed == 0.0);
}

TEST_CASE("a transient shorter than the timer is not a node failure") {
  auto m = quiet();
  m.scripted = {{1.0, 5, FailureKind::TransientStart}, {1.0 + 29 * kMinute, 5, FailureKind::TransientEnd}};
  auto c = liquid_402();
  c.t_rit_years = 30 * kMinute;
  const auto rep = run_simulation(c, m, limits(2.0));
  CHECK(rep.node_failures == 0);
  CHECK(rows_of(rep, TraceEvent::NodeFail).empty());
  CHECK(rows_of(rep, TraceEvent::TransientStart).size() == 1u);
  CHECK(rows_of(rep, TraceEvent::TransientEnd).size() == 1u);
  CHECK(rep.read_bytes == 0.0);
}

TEST_CASE("a permanent failure is declared after the timer") {
  auto m = quiet();
  m.scripted = {{1.0, 5, FailureKind::Permanent}};
  const auto rep = run_simulation(liquid_402(), m, limits(2.0));
  const auto fails = rows_of(rep, TraceEvent::NodeFail);
  REQUIRE(fails.size() == 1u);
  CHECK(fails[0].time_years == doctest::Approx(1.0 + 24 * kHour).epsilon(1e-12));
  CHECK(rep.node_failures == 1);
  // Repair runs at the fixed rate once the failure is queued.
  CHECK(rep.r_peak_observed == doctest::Approx(110.149e9));
}

TEST_CASE("a long transient is declared at the timer and its end is ignored") {
  auto m = quiet();
  m.scripted = {{1.0, 7, FailureKind::TransientStart}, {1.0 + 36 * kHour, 7, FailureKind::TransientEnd}};
  const auto rep = run_simulation(liquid_402(), m, limits(2.0));
  const auto fails = rows_of(rep, TraceEvent::NodeFail);
  REQUIRE(fails.size() == 1u);
  CHECK(fails[0].time_years == doctest::Approx(1.0 + 24 * kHour).epsilon(1e-12));
  CHECK(rows_of(rep, TraceEvent::TransientEnd).empty());
}

TEST_CASE("one reactive failure drives every group on the node") {
  for (int n : {9, 10}) {
    auto c = small_reactive(3010);
    c.code = {n, n - 3, 3};
    auto m = quiet();
    m.scripted = {{0.5, 11, FailureKind::Permanent}};
    const auto rep = run_simulation(c, m, limits(1.0));
    double first = 0.0;
    for (const auto& row : rows_of(rep, TraceEvent::RateChange))
      if (row.time_years >= 0.5) {
        first = row.rate_bps;
        break;
      }
    if (n == 10) {
      CHECK(first == doctest::Approx(6.4e12));
    } else {
      CHECK(first >= 0.99 * 6.4e12);
      CHECK(first <= 6.4e12 * (1 + 1e-12));
    }
    // Every lost fragment is rebuilt from k reads. With n = 9 the groups do
    // not divide evenly, so a slot holds slightly more than S/100.
    CHECK(rep.read_bytes == doctest::Approx(kPiB * (n - 3)).epsilon(n == 10 ? 1e-9 : 1e-4));
    CHECK(rep.r_peak_observed <= 6.4e12 * (1 + 1e-12));
  }
}

TEST_CASE("rate statistics") {
  const auto flat = rate_statistics({{0.0, 5.0}}, 3.0);
  CHECK(flat.r_avg == doctest::Approx(5.0));
  CHECK(flat.r_99 == 5.0);
  CHECK(flat.r_peak == 5.0);
  const auto two = rate_statistics({{0.0, 0.0}, {9.0, 300.0}}, 10.0);
  CHECK(two.r_avg == doctest::Approx(30.0));
  CHECK(two.r_99 == 300.0);
  CHECK(two.r_9999 == 300.0);
  const auto mostly_low = rate_statistics({{0.0, 10.0}, {99.5, 300.0}}, 100.0);
  CHECK(mostly_low.r_99 == 10.0);
  CHECK_THROWS(rate_statistics({}, 1.0));
}

TEST_CASE("scaling is exact") {
  auto c = liquid_402();
  c.code = {40, 30, 10};
  c.nodes = 40;
  c.policy.r_peak_bps = 12e9;
  FailureModels m;
  m.node = RateSchedule::constant(2.0);
  const auto lim = limits(200.0, false, 4);
  const auto base = run_simulation(c, m, lim);
  REQUIRE(base.loss_events > 0);

  const auto same = run_simulation(apply_scaling(c, 1.0, 1.0), m, lim);
  CHECK(same.mttdl_years == base.mttdl_years);
  CHECK(same.r_avg == base.r_avg);

  const auto bigger = run_simulation(apply_scaling(c, 2.0, 1.0), m, lim);
  CHECK(bigger.loss_events == base.loss_events);
  CHECK(bigger.mttdl_years == doctest::Approx(base.mttdl_years).epsilon(1e-12));
  CHECK(bigger.r_avg == doctest::Approx(2.0 * base.r_avg).epsilon(1e-12));

  for (double f : {2.0, 3.0}) {
    auto lim_f = lim;
    lim_f.max_years = lim.max_years / f;
    const auto faster = run_simulation(apply_scaling(c, 1.0, f), m, lim_f);
    CHECK(faster.loss_events == base.loss_events);
    CHECK(faster.mttdl_years == doctest::Approx(base.mttdl_years / f).epsilon(1e-12));
    CHECK(faster.r_avg == doctest::Approx(f * base.r_avg).epsilon(1e-12));
  }
}

TEST_CASE("regulated rate never exceeds the cap") {
  const auto c = liquid_402(PolicyKind::Regulated);
  FailureModels m;
  const auto rep = run_simulation(c, m, limits(50.0, false));
  CHECK(rep.node_failures > 0);
  CHECK(rep.r_peak_observed <= 311e9 * (1 + 1e-12));
  CHECK(rep.r_avg > 0.0);
  CHECK(rep.r_avg < rep.r_peak_observed);
}

TEST_CASE("same seed, same run") {
  const auto c = liquid_402(PolicyKind::Regulated);
  FailureModels m;
  m.transient = TransientModel{1.0 / 0.33, 60.0, 1.1};
  const auto a = run_simulation(c, m, limits(5.0, true, 7));
  const auto b = run_simulation(c, m, limits(5.0, true, 7));
  const auto d = run_simulation(c, m, limits(5.0, true, 8));
  CHECK(a.r_avg == b.r_avg);
  CHECK(a.r_9999 == b.r_9999);
  CHECK(a.node_failures == b.node_failures);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].time_years == b.trace[i].time_years);
    CHECK(a.trace[i].rate_bps == b.trace[i].rate_bps);
    CHECK(a.trace[i].event == b.trace[i].event);
  }
  CHECK(a.r_avg != d.r_avg);
}

TEST_CASE("a latent sector error turns a survivable queue into a loss") {
  ClusterConfig c;
  c.nodes = 6;
  c.node_capacity_bytes = kGiB;
  c.code = {6, 4, 2};
  c.object_size_bytes = 4.0 * kGiB;  // one object per cell
  c.queue_cells = 1;
  c.t_rit_years = 0.0;
  c.policy.kind = PolicyKind::FixedLiquid;
  // One full pass over the 4 GiB of source data per year.
  c.policy.r_peak_bps = 8.0 * 4.0 * kGiB / kSecondsPerYear;
  auto m = quiet();
  m.scripted = {{0.1, 0, FailureKind::Sector},
                {0.2, 1, FailureKind::Permanent},
                {0.3, 2, FailureKind::Permanent}};
  RunLimits lim = limits(5.0);
  lim.max_losses = 1;
  const auto rep = run_simulation(c, m, lim);
  CHECK(rep.sector_failures == 1);
  REQUIRE(rep.loss_events == 1);
  // The counter idles until the first failure is queued at 0.2, and the only
  // cell completes one pass later.
  CHECK(rep.loss_times[0] == doctest::Approx(1.2).epsilon(1e-9));

  // Without the sector error the same two node failures are repaired.
  m.scripted.erase(m.scripted.begin());
  const auto clean = run_simulation(c, m, lim);
  CHECK(clean.loss_events == 0);
  CHECK(rows_of(clean, TraceEvent::Repair).size() >= 1u);
}

TEST_CASE("fixed-rate loss times match a sliding-window count model") {
  // With T_RIT = 0 an object is lost exactly when r + 1 distinct nodes fail
  // within one repair cycle, so the first such window is the loss time.
  const int n = 30, r = 10;
  const double lambda = 2.0, cycle = 0.15;
  Rng rng(77);
  const int runs = 3000;
  double total = 0.0, sq = 0.0;
  for (int i = 0; i < runs; ++i) {
    std::vector<std::pair<double, int>> window;
    std::vector<int> count(n, 0);
    int distinct = 0;
    double t = 0.0;
    std::size_t head = 0;
    while (true) {
      t += rng.exponential() / (n * lambda);
      const int v = static_cast<int>(rng.below(n));
      while (head < window.size() && window[head].first <= t - cycle)
        if (--count[window[head++].second] == 0) --distinct;
      window.emplace_back(t, v);
      if (count[v]++ == 0) ++distinct;
      if (distinct > r) break;
    }
    total += t;
    sq += t * t;
  }
  const double oracle = total / runs;
  const double oracle_se = std::sqrt((sq / runs - oracle * oracle) / runs);

  ClusterConfig c;
  c.nodes = n;
  c.node_capacity_bytes = kGiB;
  c.code = {n, n - r, r};
  c.object_size_bytes = kMiB;
  c.queue_cells = 1000;
  c.policy.kind = PolicyKind::FixedLiquid;
  c.policy.r_peak_bps = bytes_per_years_to_bps(c.d_src_bytes(), cycle);
  FailureModels m;
  m.node = RateSchedule::constant(lambda);
  RunLimits lim = limits(1e6, false, 3);
  lim.max_losses = 3000;
  const auto rep = run_simulation(c, m, lim);
  // Loss-to-loss times are roughly exponential, so the SE is about mean/sqrt(L).
  const double sim_se = rep.mttdl_years / std::sqrt(static_cast<double>(rep.loss_events));
  CHECK(std::abs(rep.mttdl_years - oracle) < 4.0 * std::hypot(oracle_se, sim_se));
}
