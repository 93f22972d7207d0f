// liqlab: scenario simulation, analytic bounds and codec utilities.

#include <openssl/evp.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "liqlab/bounds.hpp"
#include "liqlab/flow_codec.hpp"
#include "liqlab/regulator.hpp"
#include "liqlab/scenario.hpp"
#include "liqlab/units.hpp"

namespace fs = std::filesystem;
using namespace liqlab;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- simulate

std::vector<std::uint64_t> seeds_from_env(std::vector<std::uint64_t> seeds) {
  const char* env = std::getenv("LIQLAB_SEED");
  if (!env || !*env) return seeds;
  std::vector<std::uint64_t> out;
  std::stringstream ss(env);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("LIQLAB_SEED: expected integers");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("LIQLAB_SEED: expected integers");
  return out;
}

int cmd_simulate(const std::string& config, const std::string& out_dir, int jobs) {
  Scenario sc = load_scenario(config);
  sc.seeds = seeds_from_env(sc.seeds);
  const ClusterConfig cluster = build_cluster(sc);
  const FailureModels models = build_models(sc);

  std::vector<SimReport> reports(sc.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < sc.seeds.size(); i = next++) {
      try {
        reports[i] = run_simulation(cluster, models, build_limits(sc, sc.seeds[i]));
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(sc.seeds.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);

  fs::create_directories(out_dir);
  const bool single = sc.seeds.size() == 1;
  for (std::size_t i = 0; i < sc.seeds.size(); ++i) {
    const std::string stem =
        single ? sc.name : sc.name + ".seed" + std::to_string(sc.seeds[i]);
    std::optional<std::string> trace_file;
    if (sc.trace) {
      trace_file = stem + ".trace.csv";
      std::ostringstream csv;
      write_trace_csv(csv, reports[i].trace);
      write_file_atomic(fs::path(out_dir) / *trace_file, csv.str());
    }
    write_file_atomic(fs::path(out_dir) / (stem + ".report.json"),
                      report_to_json(sc, sc.seeds[i], reports[i], trace_file).dump(2) + "\n");
  }
  const ordered_json summary = summary_to_json(sc, sc.seeds, reports);
  write_file_atomic(fs::path(out_dir) / (sc.name + ".summary.json"), summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------- bound

struct BoundArgs {
  bool estimate = false, sandwich = false, greedy = false, estimated = false, invert = false;
  int n = 0, r = -1;
  double lambda = 0.0;
  std::optional<double> lambda_t, t_years, rate_bps, dsrc_pb, target;
  int cells = 2000;
  std::optional<double> f_tar, f_T;
  double gamma = 1.0 / 3.0;
  double window_coeff = 7.0 / 6.0;
  int grid_points = 64;
  double grid_span = 4.0;
};

ordered_json years_json(const Mttdl& m) {
  ordered_json j;
  if (std::isinf(m.years))
    j["mttdl_years"] = "inf";
  else
    j["mttdl_years"] = m.years;
  if (std::isinf(m.log10_years))
    j["log10_mttdl"] = m.log10_years > 0 ? "inf" : "-inf";
  else
    j["log10_mttdl"] = m.log10_years;
  return j;
}

int cmd_bound(const BoundArgs& a) {
  const int modes = a.estimate + a.sandwich + a.greedy + a.estimated + a.invert;
  if (modes != 1) throw UsageError("choose exactly one of --estimate, --sandwich, "
                                   "--regulated-greedy, --regulated-estimated, --invert");
  if (a.n <= 0 || a.r < 1 || a.r >= a.n) throw UsageError("need 0 < r < n");
  if (!(a.lambda > 0.0)) throw UsageError("--lambda must be positive");

  ordered_json inputs = {{"n", a.n}, {"r", a.r}, {"lambda_per_year", a.lambda}};
  ordered_json out;

  if (a.invert) {
    if (!a.target || !a.dsrc_pb) throw UsageError("--invert needs --target and --dsrc-pb");
    if (!(*a.target > 0.0) || !(*a.dsrc_pb > 0.0)) throw UsageError("--target and --dsrc-pb must be positive");
    const double dsrc = *a.dsrc_pb * kPiB;
    const double lt = invert_lambda_t_for_mttdl(a.n, a.r, a.lambda, *a.target);
    const double T = lt / a.lambda;
    inputs["dsrc_pb"] = *a.dsrc_pb;
    inputs["target_years"] = *a.target;
    out["rate_bps"] = bytes_per_years_to_bps(dsrc, T);
    out["rate_gbps"] = bytes_per_years_to_bps(dsrc, T) / kGbps;
    out["lambdaT"] = lt;
    out["T_years"] = T;
    out.update(years_json(mttdl_estimate_fixed(a.n, a.r, a.lambda, T)));
    out["inputs"] = inputs;
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (a.estimate || a.sandwich) {
    const int given = a.lambda_t.has_value() + a.t_years.has_value() + a.rate_bps.has_value();
    if (given != 1) throw UsageError("give exactly one of --lambdaT, --T-years, --rate-bps");
    double T = 0.0;
    if (a.lambda_t) {
      if (*a.lambda_t < 0.0) throw UsageError("--lambdaT must be non-negative");
      T = *a.lambda_t / a.lambda;
      inputs["lambdaT"] = *a.lambda_t;
    } else if (a.t_years) {
      if (*a.t_years < 0.0) throw UsageError("--T-years must be non-negative");
      T = *a.t_years;
      inputs["T_years"] = T;
    } else {
      if (!a.dsrc_pb) throw UsageError("--rate-bps needs --dsrc-pb");
      if (!(*a.rate_bps > 0.0)) throw UsageError("--rate-bps must be positive");
      T = transfer_years(*a.dsrc_pb * kPiB, *a.rate_bps);
      inputs["rate_bps"] = *a.rate_bps;
      inputs["dsrc_pb"] = *a.dsrc_pb;
    }
    if (T == 0.0) {
      out["mttdl_years"] = "inf";
      out["log10_mttdl"] = "inf";
      out["q_tail"] = 0.0;
    } else {
      out.update(years_json(a.estimate ? mttdl_estimate_fixed(a.n, a.r, a.lambda, T)
                                       : mttdl_sandwich_lower(a.n, a.r, a.lambda, T)));
      out["q_tail"] = std::exp(log_upper_tail(a.n, a.r, a.lambda * T));
    }
    out["T_years"] = T;
    out["inputs"] = inputs;
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  RegulatorParams p = RegulatorParams::defaults(a.n, a.r);
  if (a.f_tar) p.f_tar = *a.f_tar;
  if (a.f_T) p.f_T = *a.f_T;
  p.gamma = a.gamma;
  p.window_coeff = a.window_coeff;
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.cells < 10) throw UsageError("--cells must be at least 10");
  const PhiFn phi_fn = [p](double f, double x) { return phi(f, x, p); };
  const double t_max = p.phi_nom() / a.lambda;
  inputs["f_tar"] = p.f_tar;
  inputs["f_T"] = p.f_T;
  inputs["gamma"] = p.gamma;
  inputs["cells"] = a.cells;

  FragmentDistribution dist;
  if (a.greedy) {
    dist = greedy_repair_dist(a.n, phi_fn, a.cells);
  } else {
    if (a.grid_points < 2 || !(a.grid_span > 1.0)) throw UsageError("invalid estimate grid");
    GreedyGrid grid;
    grid.delta = 1.0 / a.cells;
    grid.lambda_grid = GreedyGrid::log_grid(a.lambda, a.grid_points, a.grid_span);
    grid.alpha = GreedyGrid::window_alpha(a.r, p.window_coeff);
    grid.lump_above = a.r + 1;
    std::vector<double> init(grid.lambda_grid.size(), 0.0);
    const auto nearest = std::min_element(
        grid.lambda_grid.begin(), grid.lambda_grid.end(), [&](double x, double y) {
          return std::abs(std::log(x / a.lambda)) < std::abs(std::log(y / a.lambda));
        });
    init[nearest - grid.lambda_grid.begin()] = 1.0;
    dist = greedy_dist_with_estimation(a.n, phi_fn, grid, a.lambda, init).dist;
    inputs["grid_points"] = a.grid_points;
    inputs["grid_span"] = a.grid_span;
  }
  out.update(years_json(mttdl_regulated_lower(a.n, a.r, a.lambda, dist, t_max)));
  out["q_tail"] = dist.tail(a.r);
  out["T_years"] = t_max;
  out["inputs"] = inputs;
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------- codec

std::string sha256_hex(const Bytes& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

Bytes read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

std::string as_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

int cmd_encode(const std::string& input, const std::string& dir, int n, int k, std::uint32_t ssize) {
  if (!(0 < k && k < n && n <= 65535)) throw UsageError("need 0 < k < n <= 65535");
  if (ssize == 0 || ssize % 2 != 0) throw UsageError("--ssize must be a positive even byte count");
  const Bytes object = read_bytes(input);
  if (object.empty()) throw UsageError("input object is empty");
  const ObjectLayout layout = ObjectLayout::make(object.size(), k, ssize);
  const CauchyCode code(n, k);
  std::vector<int> efis(n);
  for (int i = 0; i < n; ++i) efis[i] = i;
  const auto frags = make_fragments(object, layout, code, efis);
  fs::create_directories(dir);
  for (const auto& [efi, data] : frags) {
    const std::string stem = "fragment-" + std::to_string(efi);
    write_file_atomic(fs::path(dir) / (stem + ".bin"), as_string(data));
    const ordered_json meta = {{"osize", layout.object_size}, {"k", k}, {"n", n},
                               {"ssize", ssize}, {"efi", efi}};
    write_file_atomic(fs::path(dir) / (stem + ".json"), meta.dump(2) + "\n");
  }
  write_file_atomic(fs::path(dir) / "object.sha256", sha256_hex(object) + "\n");
  std::cout << ordered_json{{"fragments", n},
                            {"fragment_size", layout.fragment_size()},
                            {"block_count", layout.block_count},
                            {"sha256", sha256_hex(object)}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_decode(const std::string& dir, const std::string& output) {
  std::map<int, Bytes> frags;
  std::optional<ordered_json> meta0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path p = entry.path();
    if (p.extension() != ".json" || p.stem().string().rfind("fragment-", 0) != 0) continue;
    fs::path bin = p;
    bin.replace_extension(".bin");
    if (!fs::exists(bin)) continue;
    std::ifstream in(p);
    ordered_json meta = ordered_json::parse(in);
    for (const char* key : {"osize", "k", "n", "ssize"})
      if (meta0 && meta[key] != (*meta0)[key]) throw std::runtime_error("inconsistent fragment metadata");
    if (!meta0) meta0 = meta;
    frags[meta["efi"].get<int>()] = read_bytes(bin);
  }
  if (!meta0) throw std::runtime_error("no fragments found in " + dir);
  const int k = (*meta0)["k"].get<int>();
  const int n = (*meta0)["n"].get<int>();
  const ObjectLayout layout = ObjectLayout::make((*meta0)["osize"].get<std::uint64_t>(), k,
                                                 (*meta0)["ssize"].get<std::uint32_t>());
  for (const auto& [efi, data] : frags)
    if (data.size() != layout.fragment_size())
      throw std::runtime_error("fragment " + std::to_string(efi) + " has the wrong size");
  const CauchyCode code(n, k);
  const Bytes object = reconstruct_object(frags, layout, code);
  std::ifstream dig(fs::path(dir) / "object.sha256");
  std::string expected;
  dig >> expected;
  const std::string actual = sha256_hex(object);
  write_file_atomic(output, as_string(object));
  std::cout << ordered_json{{"fragments_used", frags.size()}, {"sha256", actual},
                            {"verified", actual == expected}}
                   .dump(2)
            << "\n";
  if (actual != expected) {
    std::cerr << "liqlab: digest mismatch, reconstructed object is corrupt\n";
    return kExitRuntime;
  }
  return 0;
}

struct PlanArgs {
  std::uint64_t osize = 0, offset = 0, length = 0;
  int k = 0, n = 0, extra = 0, block_k = 0, block_n = 0;
  std::uint32_t ssize = 64;
  std::string mode = "all";
  std::vector<int> unavailable;
};

ordered_json plan_json(const AccessPlan& plan) {
  ordered_json j;
  j["mode"] = to_string(plan.mode);
  if (plan.mode == AccessMode::Liq) {
    j["first_block"] = plan.first_block;
    j["last_block"] = plan.first_block + plan.block_count - 1;
    j["block_count"] = plan.block_count;
  }
  j["request_count"] = plan.requests.size();
  j["requests"] = ordered_json::array();
  for (const auto& r : plan.requests)
    j["requests"].push_back({{"efi", r.efi}, {"offset", r.offset}, {"length", r.length}});
  j["total_read"] = plan.total_read;
  j["amplification"] = plan.amplification;
  return j;
}

int cmd_plan(const PlanArgs& a) {
  if (a.k <= 0 || a.osize == 0 || a.length == 0) throw UsageError("need --osize, -k and --length");
  const ObjectLayout layout = ObjectLayout::make(a.osize, a.k, a.ssize);
  std::vector<std::string> modes;
  if (a.mode == "all")
    modes = {"liq", "sc", "scdeg"};
  else
    modes = {a.mode};
  ordered_json out;
  out["layout"] = {{"object_size", layout.object_size},
                   {"block_size", layout.block_size()},
                   {"block_count", layout.block_count},
                   {"fragment_size", layout.fragment_size()}};
  out["chunk"] = {{"offset", a.offset}, {"length", a.length}};
  out["plans"] = ordered_json::array();
  for (const auto& m : modes) {
    AccessConfig cfg;
    cfg.n = a.n;
    cfg.extra = a.extra;
    cfg.block_k = a.block_k;
    cfg.block_n = a.block_n;
    if (m == "liq") {
      cfg.mode = AccessMode::Liq;
      if (a.n <= a.k) throw UsageError("liq planning needs -n > -k");
    } else if (m == "sc" || m == "scdeg") {
      cfg.mode = m == "sc" ? AccessMode::SC : AccessMode::SCDeg;
      if (a.block_k <= 0 || a.block_n <= a.block_k)
        throw UsageError("block planning needs --block-k and --block-n");
    } else {
      throw UsageError("--mode must be liq, sc, scdeg or all");
    }
    const int width = cfg.mode == AccessMode::Liq ? a.n : a.block_n;
    if (!a.unavailable.empty()) {
      cfg.available.assign(width, true);
      for (int efi : a.unavailable)
        if (efi >= 0 && efi < width) cfg.available[efi] = false;
    }
    try {
      out["plans"].push_back(plan_json(plan_chunk_access(a.offset, a.length, layout, cfg)));
    } catch (const OwnerUnavailable& e) {
      out["plans"].push_back({{"mode", to_string(cfg.mode)}, {"error", e.what()}});
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"liqlab: erasure-coded storage reliability laboratory"};
  app.require_subcommand(1);

  std::string config, out_dir = ".";
  int jobs = 1;
  auto* sim = app.add_subcommand("simulate", "run a scenario file");
  sim->add_option("config", config, "scenario JSON")->required();
  sim->add_option("-o,--output", out_dir, "output directory");
  sim->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);

  BoundArgs ba;
  auto* bound = app.add_subcommand("bound", "analytic MTTDL bounds");
  bound->add_flag("--estimate", ba.estimate, "fixed-rate MTTDL estimate");
  bound->add_flag("--sandwich", ba.sandwich, "fixed-rate lower bound");
  bound->add_flag("--regulated-greedy", ba.greedy, "regulated lower bound, known rate");
  bound->add_flag("--regulated-estimated", ba.estimated, "regulated lower bound, estimated rate");
  bound->add_flag("--invert", ba.invert, "fixed repair rate for a target MTTDL");
  bound->add_option("-n", ba.n, "fragments per object")->required();
  bound->add_option("-r", ba.r, "repair fragments per object")->required();
  bound->add_option("--lambda", ba.lambda, "per-node failure rate, 1/years")->required();
  bound->add_option("--lambdaT", ba.lambda_t, "lambda times the repair cycle time");
  bound->add_option("--T-years", ba.t_years, "repair cycle time in years");
  bound->add_option("--rate-bps", ba.rate_bps, "repair rate, bits/s (with --dsrc-pb)");
  bound->add_option("--dsrc-pb", ba.dsrc_pb, "source data, binary PB");
  bound->add_option("--target", ba.target, "target MTTDL in years (--invert)");
  bound->add_option("--cells", ba.cells, "queue quantization for regulated bounds");
  bound->add_option("--f-tar", ba.f_tar, "regulator target fraction");
  bound->add_option("--f-T", ba.f_T, "regulator hard threshold fraction");
  bound->add_option("--gamma", ba.gamma, "regulator floor factor");
  bound->add_option("--window-coeff", ba.window_coeff, "estimator window coefficient");
  bound->add_option("--grid-points", ba.grid_points, "rate grid size (--regulated-estimated)");
  bound->add_option("--grid-span", ba.grid_span, "rate grid half-width factor");

  auto* codec = app.add_subcommand("codec", "flow-organization codec");
  codec->require_subcommand(1);
  std::string input, dir, output;
  int n = 0, k = 0;
  std::uint32_t ssize = 64;
  auto* enc = codec->add_subcommand("encode", "split an object into n fragment files");
  enc->add_option("--input", input, "object file")->required();
  enc->add_option("--dir", dir, "fragment directory")->required();
  enc->add_option("-n", n, "fragments")->required();
  enc->add_option("-k", k, "source fragments")->required();
  enc->add_option("--ssize", ssize, "symbol size in bytes");
  auto* dec = codec->add_subcommand("decode", "rebuild an object from surviving fragments");
  dec->add_option("--dir", dir, "fragment directory")->required();
  dec->add_option("--output", output, "reconstructed object file")->required();
  PlanArgs pa;
  auto* plan = codec->add_subcommand("plan", "chunk access plan");
  plan->add_option("--osize", pa.osize, "object size in bytes")->required();
  plan->add_option("-k", pa.k, "flow code source fragments")->required();
  plan->add_option("-n", pa.n, "flow code fragments");
  plan->add_option("--ssize", pa.ssize, "symbol size in bytes");
  plan->add_option("--offset", pa.offset, "chunk offset in bytes");
  plan->add_option("--length", pa.length, "chunk length in bytes")->required();
  plan->add_option("--extra", pa.extra, "additional fragment portions (E)");
  plan->add_option("--block-k", pa.block_k, "block organization k");
  plan->add_option("--block-n", pa.block_n, "block organization n");
  plan->add_option("--mode", pa.mode, "liq, sc, scdeg or all");
  plan->add_option("--unavailable", pa.unavailable, "unavailable EFIs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(config, out_dir, jobs);
    if (*bound) return cmd_bound(ba);
    if (*enc) return cmd_encode(input, dir, n, k, ssize);
    if (*dec) return cmd_decode(dir, output);
    if (*plan) return cmd_plan(pa);
  } catch (const ConfigError& e) {
    std::cerr << "liqlab: invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "liqlab: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "liqlab: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
