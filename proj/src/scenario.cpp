#include "liqlab/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "liqlab/units.hpp"

namespace liqlab {

namespace {

using nlohmann::json;

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  T get(const char* key) {
    if (!j_.contains(key)) fail(at(key), "missing required key");
    return convert<T>(key);
  }

  template <class T>
  T get_or(const char* key, T fallback) {
    return j_.contains(key) ? convert<T>(key) : fallback;
  }

  Fields child(const char* key) {
    if (!j_.contains(key)) fail(at(key), "missing required key");
    seen_.insert(key);
    return Fields(j_.at(key), at(key));
  }

  const json& array(const char* key) {
    if (!j_.contains(key)) fail(at(key), "missing required key");
    seen_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_array()) fail(at(key), "expected an array");
    return v;
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(at(key), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

 private:
  template <class T>
  T convert(const char* key) {
    seen_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(at(key), "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(at(key), "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(at(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) fail(at(key), "expected a non-negative integer");
      }
      return v.get<T>();
    } else {
      if (!v.is_number()) fail(at(key), "expected a number");
      return v.get<T>();
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double mean_to_rate(double mean_years) { return mean_years > 0.0 ? 1.0 / mean_years : 0.0; }

}  // namespace

Scenario parse_scenario(const json& j) {
  Scenario s;
  Fields root(j, "");
  s.name = root.get<std::string>("name");
  if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos)
    Fields::fail("name", "must be a non-empty file-name-safe string");

  {
    Fields c = root.child("cluster");
    s.nodes = c.get<int>("nodes");
    s.node_capacity_pb = c.get_or("node_capacity_pb", s.node_capacity_pb);
    Fields code = c.child("code");
    s.n = code.get<int>("n");
    s.k = code.get<int>("k");
    s.r = code.get_or("r", s.n - s.k);
    code.finish();
    s.placement_groups = c.get_or("placement_groups", s.placement_groups);
    s.object_size_bytes = c.get_or("object_size_bytes", s.object_size_bytes);
    s.queue_cells = c.get_or("queue_cells", s.queue_cells);
    s.t_rit_hours = c.get_or("t_rit_hours", s.t_rit_hours);
    c.finish();
  }
  {
    Fields p = root.child("policy");
    s.policy = p.get<std::string>("kind");
    if (s.policy != "reactive" && s.policy != "fixed" && s.policy != "regulated")
      Fields::fail("policy.kind", "expected reactive, fixed or regulated");
    if (s.policy != "regulated") s.r_peak_bps = p.get<double>("r_peak_bps");
    if (s.policy == "reactive") s.active_groups = p.get_or("active_groups", s.active_groups);
    s.design_mean_life_years = p.get_or("design_mean_life_years", s.design_mean_life_years);
    p.finish();
  }
  if (root.has("regulator")) {
    if (s.policy != "regulated") Fields::fail("regulator", "only valid with policy.kind regulated");
    Fields g = root.child("regulator");
    RegulatorSpec reg;
    if (g.has("f_tar")) reg.f_tar = g.get<double>("f_tar");
    if (g.has("f_T")) reg.f_T = g.get<double>("f_T");
    reg.gamma = g.get_or("gamma", reg.gamma);
    reg.window_coeff = g.get_or("window_coeff", reg.window_coeff);
    reg.rate_cap_bps = g.get<double>("rate_cap_bps");
    reg.use_estimator = g.get_or("use_estimator", reg.use_estimator);
    g.finish();
    s.regulator = reg;
  } else if (s.policy == "regulated") {
    Fields::fail("regulator", "required for policy.kind regulated");
  }
  if (root.has("failure")) {
    Fields f = root.child("failure");
    if (f.has("node")) {
      Fields nd = f.child("node");
      if (nd.has("segments")) {
        if (nd.has("mean_life_years"))
          Fields::fail(nd.at("mean_life_years"), "give either mean_life_years or segments");
        const json& segs = nd.array("segments");
        for (std::size_t i = 0; i < segs.size(); ++i) {
          Fields seg(segs[i], nd.at("segments[" + std::to_string(i) + "]"));
          s.node_failures.segments.push_back(
              {seg.get<double>("duration_years"), seg.get<double>("mean_life_years")});
          seg.finish();
        }
        s.node_failures.cyclic = nd.get_or("cyclic", false);
      } else {
        s.node_failures.mean_life_years = nd.get<double>("mean_life_years");
      }
      nd.finish();
    }
    if (f.has("transient")) {
      Fields t = f.child("transient");
      s.transient.mean_interval_years = t.get<double>("mean_interval_years");
      s.transient.duration_median_seconds =
          t.get_or("duration_median_seconds", s.transient.duration_median_seconds);
      s.transient.duration_shape = t.get_or("duration_shape", s.transient.duration_shape);
      t.finish();
    }
    if (f.has("sector")) {
      Fields t = f.child("sector");
      s.sector.mean_life_years = t.get<double>("mean_life_years");
      s.sector.sector_size_bytes = t.get_or("sector_size_bytes", s.sector.sector_size_bytes);
      t.finish();
    }
    f.finish();
  }
  if (root.has("scaling")) {
    Fields sc = root.child("scaling");
    s.capacity_factor = sc.get_or("capacity_factor", 1.0);
    s.time_factor = sc.get_or("time_factor", 1.0);
    sc.finish();
  }
  {
    Fields run = root.child("run");
    s.max_years = run.get<double>("max_years");
    s.max_losses = run.get_or<std::int64_t>("max_losses", s.max_losses);
    if (run.has("seeds")) {
      s.seeds.clear();
      const json& seeds = run.array("seeds");
      for (const auto& v : seeds) {
        if (!v.is_number_unsigned()) Fields::fail(run.at("seeds"), "expected non-negative integers");
        s.seeds.push_back(v.get<std::uint64_t>());
      }
      if (s.seeds.empty()) Fields::fail(run.at("seeds"), "must not be empty");
    }
    s.trace = run.get_or("trace", s.trace);
    run.finish();
  }
  root.finish();

  // Surface module-level invariant violations as configuration errors.
  build_cluster(s);
  build_models(s);
  build_limits(s, s.seeds.front());
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_scenario(j);
}

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["name"] = s.name;
  j["cluster"] = {{"nodes", s.nodes},
                  {"node_capacity_pb", s.node_capacity_pb},
                  {"code", {{"n", s.n}, {"k", s.k}, {"r", s.r}}},
                  {"placement_groups", s.placement_groups},
                  {"object_size_bytes", s.object_size_bytes},
                  {"queue_cells", s.queue_cells},
                  {"t_rit_hours", s.t_rit_hours}};
  ordered_json policy = {{"kind", s.policy}};
  if (s.policy != "regulated") policy["r_peak_bps"] = s.r_peak_bps;
  if (s.policy == "reactive") policy["active_groups"] = s.active_groups;
  policy["design_mean_life_years"] = s.design_mean_life_years;
  j["policy"] = policy;
  if (s.regulator) {
    ordered_json g;
    if (s.regulator->f_tar) g["f_tar"] = *s.regulator->f_tar;
    if (s.regulator->f_T) g["f_T"] = *s.regulator->f_T;
    g["gamma"] = s.regulator->gamma;
    g["window_coeff"] = s.regulator->window_coeff;
    g["rate_cap_bps"] = s.regulator->rate_cap_bps;
    g["use_estimator"] = s.regulator->use_estimator;
    j["regulator"] = g;
  }
  ordered_json node;
  if (s.node_failures.segments.empty()) {
    node["mean_life_years"] = s.node_failures.mean_life_years;
  } else {
    node["segments"] = ordered_json::array();
    for (const auto& seg : s.node_failures.segments)
      node["segments"].push_back(
          {{"duration_years", seg.duration_years}, {"mean_life_years", seg.mean_life_years}});
    node["cyclic"] = s.node_failures.cyclic;
  }
  j["failure"] = {{"node", node},
                  {"transient",
                   {{"mean_interval_years", s.transient.mean_interval_years},
                    {"duration_median_seconds", s.transient.duration_median_seconds},
                    {"duration_shape", s.transient.duration_shape}}},
                  {"sector",
                   {{"mean_life_years", s.sector.mean_life_years},
                    {"sector_size_bytes", s.sector.sector_size_bytes}}}};
  j["scaling"] = {{"capacity_factor", s.capacity_factor}, {"time_factor", s.time_factor}};
  j["run"] = {{"max_years", s.max_years},
              {"max_losses", s.max_losses},
              {"seeds", s.seeds},
              {"trace", s.trace}};
  return j;
}

ClusterConfig build_cluster(const Scenario& s) {
  ClusterConfig c;
  c.nodes = s.nodes;
  c.node_capacity_bytes = s.node_capacity_pb * kPiB;
  c.code = {s.n, s.k, s.r};
  c.placement_groups = s.placement_groups;
  c.object_size_bytes = s.object_size_bytes;
  c.queue_cells = s.queue_cells;
  c.t_rit_years = s.t_rit_hours / kHoursPerYear;
  if (s.policy == "reactive") {
    c.policy.kind = PolicyKind::Reactive;
    c.policy.r_peak_bps = s.r_peak_bps;
    c.policy.active_groups = s.active_groups;
  } else if (s.policy == "fixed") {
    c.policy.kind = PolicyKind::FixedLiquid;
    c.policy.r_peak_bps = s.r_peak_bps;
  } else {
    c.policy.kind = PolicyKind::Regulated;
    const RegulatorSpec& g = *s.regulator;
    if (s.n <= 0) throw ConfigError("cluster.code.n: must be positive");
    RegulatorParams p = RegulatorParams::defaults(s.n, s.r);
    if (g.f_tar) p.f_tar = *g.f_tar;
    if (g.f_T) p.f_T = *g.f_T;
    p.gamma = g.gamma;
    p.window_coeff = g.window_coeff;
    c.policy.regulator = p;
    c.policy.r_peak_bps = g.rate_cap_bps;
    c.policy.use_estimator = g.use_estimator;
  }
  c.design_rate = mean_to_rate(s.design_mean_life_years);
  c.capacity_scale = s.capacity_factor;
  c.time_scale = s.time_factor;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

FailureModels build_models(const Scenario& s) {
  FailureModels m;
  if (s.node_failures.segments.empty()) {
    if (!(s.node_failures.mean_life_years > 0.0))
      throw ConfigError("failure.node.mean_life_years: must be positive");
    m.node = RateSchedule::constant(1.0 / s.node_failures.mean_life_years);
  } else {
    m.node.segments.clear();
    for (const auto& seg : s.node_failures.segments) {
      if (!(seg.mean_life_years > 0.0))
        throw ConfigError("failure.node.segments: mean_life_years must be positive");
      m.node.segments.push_back({seg.duration_years, 1.0 / seg.mean_life_years});
    }
    m.node.cyclic = s.node_failures.cyclic;
  }
  m.transient.occurrence_rate = mean_to_rate(s.transient.mean_interval_years);
  m.transient.duration_median_s = s.transient.duration_median_seconds;
  m.transient.duration_shape = s.transient.duration_shape;
  m.sector.sector_rate = mean_to_rate(s.sector.mean_life_years);
  m.sector.sector_size = s.sector.sector_size_bytes;
  if (s.transient.mean_interval_years < 0.0)
    throw ConfigError("failure.transient.mean_interval_years: must be non-negative");
  if (s.sector.mean_life_years < 0.0)
    throw ConfigError("failure.sector.mean_life_years: must be non-negative");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("failure: ") + e.what());
  }
  return m;
}

RunLimits build_limits(const Scenario& s, std::uint64_t seed) {
  if (!(s.max_years > 0.0)) throw ConfigError("run.max_years: must be positive");
  if (s.max_losses < 1) throw ConfigError("run.max_losses: must be at least 1");
  RunLimits l;
  l.max_years = s.max_years;
  l.max_losses = s.max_losses;
  l.seed = seed;
  l.trace = s.trace;
  return l;
}

ordered_json report_to_json(const Scenario& s, std::uint64_t seed, const SimReport& rep,
                            const std::optional<std::string>& trace_file) {
  ordered_json j;
  j["scenario"] = s.name;
  j["seed"] = seed;
  j["simulated_years"] = rep.simulated_years;
  j["loss_events"] = rep.loss_events;
  j["mttdl_years"] = rep.mttdl_years;
  j["r_avg"] = rep.r_avg;
  j["r_99"] = rep.r_99;
  j["r_9999"] = rep.r_9999;
  j["r_peak_observed"] = rep.r_peak_observed;
  j["trace"] = trace_file ? ordered_json(*trace_file) : ordered_json(nullptr);
  j["diagnostics"] = {{"node_failures", rep.node_failures},
                      {"transient_starts", rep.transient_starts},
                      {"sector_failures", rep.sector_failures},
                      {"corruptions_found", rep.corruptions_found},
                      {"stall_episodes", rep.stall_episodes},
                      {"read_bytes", rep.read_bytes},
                      {"regenerated_fragments", rep.regenerated_fragments},
                      {"missing_at_repair", rep.missing_at_repair},
                      {"loss_times", rep.loss_times}};
  return j;
}

ordered_json summary_to_json(const Scenario& s, const std::vector<std::uint64_t>& seeds,
                             const std::vector<SimReport>& reports) {
  double years = 0.0;
  std::int64_t losses = 0;
  RateStats pooled;
  for (const auto& r : reports) {
    years += r.simulated_years;
    losses += r.loss_events;
    pooled.merge(r.rates);
  }
  const double ts = s.time_factor;
  ordered_json j;
  j["scenario"] = s.name;
  j["runs"] = reports.size();
  j["seeds"] = seeds;
  j["simulated_years"] = years;
  j["loss_events"] = losses;
  j["mttdl_years"] = years / static_cast<double>(losses + static_cast<std::int64_t>(reports.size()));
  RateSummary rs;
  if (!pooled.empty()) rs = pooled.summary();
  j["r_avg"] = rs.r_avg * ts;
  j["r_99"] = rs.r_99 * ts;
  j["r_9999"] = rs.r_9999 * ts;
  j["r_peak_observed"] = rs.r_peak * ts;
  return j;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "time_years,read_rate_bps,event\n";
  for (const auto& row : rows)
    out << format_double(row.time_years) << ',' << format_double(row.rate_bps) << ','
        << to_string(row.event) << '\n';
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace liqlab
