#include "liqlab/cluster_sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "liqlab/units.hpp"

namespace liqlab {

void CodeParams::validate() const {
  if (!(0 < k && k < n)) throw std::invalid_argument("code: requires 0 < k < n");
  if (n != k + r) throw std::invalid_argument("code: requires n = k + r");
}

const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Reactive: return "reactive";
    case PolicyKind::FixedLiquid: return "fixed";
    case PolicyKind::Regulated: return "regulated";
  }
  return "?";
}

const char* to_string(TraceEvent e) {
  switch (e) {
    case TraceEvent::NodeFail: return "node_fail";
    case TraceEvent::TransientStart: return "transient_start";
    case TraceEvent::TransientEnd: return "transient_end";
    case TraceEvent::SectorFail: return "sector_fail";
    case TraceEvent::Repair: return "repair";
    case TraceEvent::Loss: return "loss";
    case TraceEvent::RateChange: return "rate_change";
  }
  return "?";
}

int ClusterConfig::groups() const {
  if (placement_groups > 0) return placement_groups;
  if (policy.kind == PolicyKind::Reactive)
    return std::max(1, static_cast<int>(std::lround(100.0 * nodes / code.n)));
  return 1;
}

int ClusterConfig::cells_per_group() const {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(queue_cells) / groups())));
}

double ClusterConfig::d_src_bytes() const {
  return nodes * effective_capacity() * (1.0 - code.beta());
}

void ClusterConfig::validate() const {
  code.validate();
  if (nodes < 1) throw std::invalid_argument("cluster: node count must be positive");
  if (code.n > nodes) throw std::invalid_argument("cluster: n must not exceed the node count");
  if (!(node_capacity_bytes > 0.0)) throw std::invalid_argument("cluster: node capacity must be positive");
  if (!(object_size_bytes > 0.0)) throw std::invalid_argument("cluster: object size must be positive");
  if (queue_cells < 1) throw std::invalid_argument("cluster: queue_cells must be at least 1");
  if (!(t_rit_years >= 0.0)) throw std::invalid_argument("cluster: T_RIT must be non-negative");
  if (!(policy.r_peak_bps > 0.0)) throw std::invalid_argument("policy: repair rate must be positive");
  if (!(capacity_scale > 0.0) || !(time_scale > 0.0))
    throw std::invalid_argument("cluster: scale factors must be positive");
  if (design_rate < 0.0) throw std::invalid_argument("cluster: design rate must be non-negative");
  if (policy.kind != PolicyKind::Reactive) {
    if (code.n != nodes) throw std::invalid_argument("cluster: liquid policies require n = M");
    if (groups() != 1) throw std::invalid_argument("cluster: liquid policies use one placement group");
  }
  if (policy.kind == PolicyKind::Reactive && policy.active_groups < 1)
    throw std::invalid_argument("policy: active group limit must be positive");
  if (policy.kind == PolicyKind::Regulated) policy.regulator.validate();
  if (d_src_bytes() / groups() < object_size_bytes)
    throw std::invalid_argument("cluster: object size exceeds the data held by a placement group");
}

ClusterConfig apply_scaling(const ClusterConfig& cfg, double s_factor, double lambda_factor) {
  if (!(s_factor > 0.0) || !(lambda_factor > 0.0))
    throw std::invalid_argument("scaling factors must be positive");
  ClusterConfig out = cfg;
  out.capacity_scale *= s_factor;
  out.time_scale *= lambda_factor;
  return out;
}

void FailureModels::validate() const {
  node.validate();
  transient.validate();
  sector.validate();
  for (const auto& e : scripted)
    if (!(e.time >= 0.0) || !std::isfinite(e.time))
      throw std::invalid_argument("scripted event times must be finite and non-negative");
}

std::vector<std::vector<std::uint32_t>> balanced_placement(int nodes, int groups, int n, Rng& rng) {
  if (n > nodes) throw std::invalid_argument("placement: n exceeds the node count");
  const std::size_t total = static_cast<std::size_t>(groups) * n;
  std::vector<std::uint32_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = static_cast<std::uint32_t>(i % nodes);
  rng.shuffle(pool.begin(), pool.end());
  auto in_group = [&](std::size_t g, std::uint32_t v, std::size_t skip) {
    for (std::size_t s = g * n; s < (g + 1) * n; ++s)
      if (s != skip && pool[s] == v) return true;
    return false;
  };
  for (std::size_t pos = 0; pos < total; ++pos) {
    const std::size_t g = pos / n;
    int guard = 0;
    while (in_group(g, pool[pos], pos)) {
      if (++guard > 1000000) throw std::runtime_error("placement: cannot separate duplicates");
      const std::size_t other = rng.below(total);
      const std::size_t h = other / n;
      if (h == g) continue;
      if (in_group(h, pool[pos], other) || in_group(g, pool[other], pos)) continue;
      std::swap(pool[pos], pool[other]);
    }
  }
  std::vector<std::vector<std::uint32_t>> out(groups);
  for (int g = 0; g < groups; ++g)
    out[g].assign(pool.begin() + static_cast<std::ptrdiff_t>(g) * n,
                  pool.begin() + static_cast<std::ptrdiff_t>(g + 1) * n);
  return out;
}

std::vector<int> reactive_selection(std::vector<PendingGroup> pending, int limit) {
  std::sort(pending.begin(), pending.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < pending.size() && static_cast<int>(i) < limit; ++i)
    out.push_back(pending[i].index);
  return out;
}

void ActiveSet::insert(const PendingGroup& g, Changes& changes) {
  if (static_cast<int>(active_.size()) < limit_) {
    active_.insert(g);
    changes.emplace_back(g.index, true);
    return;
  }
  auto last = std::prev(active_.end());
  if (g < *last) {
    const PendingGroup bumped = *last;
    active_.erase(last);
    waiting_.insert(bumped);
    changes.emplace_back(bumped.index, false);
    active_.insert(g);
    changes.emplace_back(g.index, true);
  } else {
    waiting_.insert(g);
  }
}

void ActiveSet::erase(const PendingGroup& g, Changes& changes) {
  if (active_.erase(g)) {
    changes.emplace_back(g.index, false);
    if (!waiting_.empty()) {
      const PendingGroup next = *waiting_.begin();
      waiting_.erase(waiting_.begin());
      active_.insert(next);
      changes.emplace_back(next.index, true);
    }
  } else {
    waiting_.erase(g);
  }
}

std::vector<int> ActiveSet::active() const {
  std::vector<int> out;
  for (const auto& g : active_) out.push_back(g.index);
  return out;
}

namespace {

enum EventKind : std::uint8_t {
  kTransientEnd = 0,
  kTransientStart = 1,
  kPermanent = 2,
  kDeclare = 3,
  kSector = 4,
  kGroup = 5,
};

constexpr std::uint32_t kScripted = 0xFFFFFFFFu;

struct Event {
  double t;
  std::uint8_t kind;
  std::uint32_t idx;
  std::uint32_t tag;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.kind != b.kind) return a.kind > b.kind;
    if (a.idx != b.idx) return a.idx > b.idx;
    return a.tag > b.tag;
  }
};

struct Node {
  std::uint32_t life_gen = 0;
  std::uint32_t episode = 0;
  bool unresponsive = false;
  bool dead = false;
};

struct Corrupt {
  std::uint64_t object;
  int slot;
};

struct Group {
  explicit Group(int n, double cells) : q(n, cells) {}
  EpochQueue q;
  double a = 0.0;        // queue counter, in cells
  double t0 = 0.0;       // clock value at which `a` is current
  double rate = 0.0;     // bits/s
  double speed = 0.0;    // cells/year
  double target = 0.0;   // counter value of the scheduled event
  bool target_tick = false;
  std::uint32_t version = 0;
  int unresponsive = 0;  // member slots on unresponsive nodes
  bool stalled = false;
  bool in_set = false;
  bool active = false;
  PendingGroup key{};
  std::vector<std::uint32_t> nodes;
  std::unordered_map<std::int64_t, std::vector<Corrupt>> ledger;
};

class Engine {
 public:
  Engine(const ClusterConfig& cfg, const FailureModels& models, const RunLimits& limits)
      : cfg_(cfg),
        models_(models),
        limits_(limits),
        n_(cfg.code.n),
        k_(cfg.code.k),
        r_(cfg.code.r),
        m_(cfg.nodes),
        p_(cfg.groups()),
        cells_(cfg.cells_per_group()),
        reactive_(cfg.policy.kind == PolicyKind::Reactive),
        regulated_(cfg.policy.kind == PolicyKind::Regulated),
        active_(cfg.policy.active_groups),
        rng_life_(derive_seed(limits.seed, 1)),
        rng_trans_(derive_seed(limits.seed, 2)),
        rng_sector_(derive_seed(limits.seed, 3)),
        rng_read_(derive_seed(limits.seed, 5)) {
    d_src_ = cfg.d_src_bytes();
    cell_bytes_ = d_src_ / (static_cast<double>(p_) * cells_);
    speed_per_bps_ = kSecondsPerYear / (8.0 * cell_bytes_);
    const double objects_per_group = std::max(1.0, std::round(d_src_ / p_ / cfg.object_size_bytes));
    objects_per_cell_ = static_cast<std::uint64_t>(std::max(1.0, std::floor(objects_per_group / cells_)));
    group_rate_ = reactive_ ? cfg.effective_rate_bps() / cfg.policy.active_groups
                            : cfg.effective_rate_bps();
    design_rate_ = cfg.design_rate > 0.0 ? cfg.design_rate : models.node.segments.front().lambda;
    window_ = regulated_ ? std::max(1, static_cast<int>(std::lround(
                                           cfg.policy.regulator.window_coeff * r_)))
                         : 1;
    history_.assign(window_, 0.0);
    suffix_.assign(window_ + 1, 0.0);
    horizon_ = limits.max_years * cfg.time_scale;
    report_.missing_at_repair.assign(n_ + 1, 0.0);
    report_.has_trace = limits.trace;
    node_rate_sector_ = models.sector.enabled()
                            ? models.sector.node_rate(cfg.effective_capacity())
                            : 0.0;
  }

  SimReport run() {
    build_layout();
    nodes_.assign(m_, Node{});
    start_streams();
    for (const auto& e : models_.scripted) {
      if (e.node >= static_cast<std::uint32_t>(m_))
        throw std::invalid_argument("scripted event names a node outside the cluster");
      std::uint8_t kind = kPermanent;
      switch (e.kind) {
        case FailureKind::Permanent: kind = kPermanent; break;
        case FailureKind::TransientStart: kind = kTransientStart; break;
        case FailureKind::TransientEnd: kind = kTransientEnd; break;
        case FailureKind::Sector: kind = kSector; break;
      }
      heap_.push({e.time, kind, e.node, kScripted});
    }
    trace(TraceEvent::RateChange);
    while (!heap_.empty() && !stopped_) {
      const Event e = heap_.top();
      if (e.t > horizon_) break;
      heap_.pop();
      if (e.t > now_) advance_clock(e.t);
      dispatch(e);
    }
    if (!stopped_) advance_clock(horizon_);
    return finish();
  }

 private:
  // ---- setup ------------------------------------------------------------

  void build_layout() {
    std::vector<std::vector<std::uint32_t>> placement;
    if (reactive_) {
      Rng rng_place(derive_seed(limits_.seed, 4));
      placement = balanced_placement(m_, p_, n_, rng_place);
    } else {
      placement.assign(1, std::vector<std::uint32_t>(n_));
      for (int i = 0; i < n_; ++i) placement[0][i] = static_cast<std::uint32_t>(i);
    }
    groups_.reserve(p_);
    node_slots_.assign(m_, {});
    for (int g = 0; g < p_; ++g) {
      groups_.emplace_back(n_, static_cast<double>(cells_));
      groups_.back().nodes = std::move(placement[g]);
      for (int s = 0; s < n_; ++s) node_slots_[groups_[g].nodes[s]].emplace_back(g, s);
    }
  }

  void start_streams() {
    for (int v = 0; v < m_; ++v) {
      auto& nd = nodes_[v];
      push(sample_next_node_failure(models_.node, now_, rng_life_), kPermanent, v, nd.life_gen);
      if (models_.transient.enabled())
        push(sample_next_poisson(models_.transient.occurrence_rate, now_, rng_trans_),
             kTransientStart, v, resets_);
      if (node_rate_sector_ > 0.0)
        push(sample_next_poisson(node_rate_sector_, now_, rng_sector_), kSector, v, resets_);
    }
    std::fill(history_.begin(), history_.end(), 1.0 / (m_ * design_rate_));
    last_declare_ = now_;
  }

  void push(double t, std::uint8_t kind, int idx, std::uint32_t tag) {
    if (std::isinf(t)) return;
    heap_.push({t, kind, static_cast<std::uint32_t>(idx), tag});
  }

  // ---- clock and accounting ---------------------------------------------

  void advance_clock(double t) {
    if (limits_.trace && global_rate_ != traced_rate_) trace(TraceEvent::RateChange);
    stats_.add(global_rate_, t - now_);
    now_ = t;
  }

  void trace(TraceEvent ev) {
    if (!limits_.trace) return;
    report_.trace.push_back({now_ / cfg_.time_scale, global_rate_ * cfg_.time_scale, ev});
    traced_rate_ = global_rate_;
  }

  void advance(Group& g) {
    if (g.speed > 0.0 && now_ > g.t0) {
      const double da = g.speed * (now_ - g.t0);
      report_.missing_at_repair[g.q.head_erased()] += da;
      report_.read_bytes += da * cell_bytes_;
      g.a += da;
    }
    g.t0 = now_;
  }

  // ---- dispatch -----------------------------------------------------------

  void dispatch(const Event& e) {
    switch (e.kind) {
      case kTransientEnd: on_transient_end(e.idx, e.tag); break;
      case kTransientStart: on_transient_start(e.idx, e.tag); break;
      case kPermanent: on_permanent(e.idx, e.tag); break;
      case kDeclare: on_declare(e.idx, e.tag); break;
      case kSector: on_sector(e.idx, e.tag); break;
      case kGroup: on_group(e.idx, e.tag); break;
      default: break;
    }
  }

  void make_unresponsive(int v) {
    auto& nd = nodes_[v];
    nd.unresponsive = true;
    ++nd.episode;
    push(now_ + cfg_.t_rit_years, kDeclare, v, nd.episode);
    for (const auto& [g, s] : node_slots_[v]) {
      ++groups_[g].unresponsive;
      refresh(g);
    }
  }

  void on_permanent(int v, std::uint32_t tag) {
    auto& nd = nodes_[v];
    if ((tag != nd.life_gen && tag != kScripted) || nd.dead) return;
    nd.dead = true;
    // A node already unresponsive keeps the declaration time of that episode.
    if (!nd.unresponsive) make_unresponsive(v);
  }

  void on_transient_start(int v, std::uint32_t tag) {
    if (tag == kScripted) {
      ++report_.transient_starts;
      if (nodes_[v].unresponsive) return;
      trace(TraceEvent::TransientStart);
      make_unresponsive(v);
      return;
    }
    if (tag != resets_) return;
    push(sample_next_poisson(models_.transient.occurrence_rate, now_, rng_trans_), kTransientStart,
         v, resets_);
    ++report_.transient_starts;
    const double dur = seconds_to_years(sample_loglogistic(
        models_.transient.duration_median_s, models_.transient.duration_shape, rng_trans_));
    auto& nd = nodes_[v];
    if (nd.unresponsive) return;
    trace(TraceEvent::TransientStart);
    make_unresponsive(v);
    push(now_ + dur, kTransientEnd, v, nd.episode);
  }

  void on_transient_end(int v, std::uint32_t tag) {
    auto& nd = nodes_[v];
    if ((tag != nd.episode && tag != kScripted) || nd.dead || !nd.unresponsive) return;
    nd.unresponsive = false;
    ++nd.episode;
    trace(TraceEvent::TransientEnd);
    for (const auto& [g, s] : node_slots_[v]) {
      --groups_[g].unresponsive;
      refresh(g);
    }
  }

  void on_declare(int v, std::uint32_t tag) {
    auto& nd = nodes_[v];
    if (tag != nd.episode || !nd.unresponsive) return;
    // The node is decommissioned and an empty replacement takes its slots.
    nd.unresponsive = false;
    nd.dead = false;
    ++nd.episode;
    ++nd.life_gen;
    push(sample_next_node_failure(models_.node, now_, rng_life_), kPermanent, v, nd.life_gen);
    ++report_.node_failures;
    trace(TraceEvent::NodeFail);
    record_interarrival();
    for (const auto& [g, s] : node_slots_[v]) {
      Group& grp = groups_[g];
      advance(grp);
      --grp.unresponsive;
      grp.q.fail(s, grp.a, now_);
      if (grp.q.head_erased() > r_) {
        on_loss();
        return;
      }
    }
    if (regulated_) refresh_estimates();
    for (const auto& [g, s] : node_slots_[v]) refresh(g);
  }

  void on_sector(int v, std::uint32_t tag) {
    if (tag != resets_ && tag != kScripted) return;
    if (tag != kScripted)
      push(sample_next_poisson(node_rate_sector_, now_, rng_sector_), kSector, v, resets_);
    ++report_.sector_failures;
    const auto& slots = node_slots_[v];
    const auto [g, s] = slots[rng_sector_.below(slots.size())];
    const auto cell = static_cast<std::int64_t>(rng_sector_.below(cells_));
    const std::uint64_t object = rng_sector_.below(objects_per_cell_);
    Group& grp = groups_[g];
    advance(grp);
    const double repaired_at = last_repair_of(grp, cell);
    const EpochQueue::Epoch* ep = covering(grp.q, repaired_at);
    if (ep && grp.q.erased_in(s, *ep)) return;  // fragment is already missing
    trace(TraceEvent::SectorFail);
    auto& entries = grp.ledger[cell];
    int corrupt = 0;
    bool present = false;
    for (const auto& c : entries) {
      if (c.object != object) continue;
      if (c.slot == s) present = true;
      if (!(ep && grp.q.erased_in(c.slot, *ep))) ++corrupt;
    }
    if (!present) {
      entries.push_back({object, s});
      ++corrupt;
    }
    const int erased = ep ? ep->erased : 0;
    if (erased + corrupt > r_) {
      on_loss();
      return;
    }
    if (present) return;
    // Ledger cells need crossing events, which may change the schedule.
    if (grp.ledger.size() == 1 && entries.size() == 1) reschedule(g);
  }

  void on_group(int g, std::uint32_t tag) {
    Group& grp = groups_[g];
    if (tag != grp.version) return;
    advance(grp);
    grp.a = grp.target;
    if (grp.target_tick && !grp.ledger.empty()) {
      const auto cell = static_cast<std::int64_t>(std::llround(grp.target) - 1) % cells_;
      if (!resolve_cell(grp, cell)) return;
    }
    if (grp.q.drop_completed(grp.a) > 0 && grp.q.empty()) trace(TraceEvent::Repair);
    refresh(g);
  }

  // ---- latent sector corruption -------------------------------------------

  double last_repair_of(const Group& grp, std::int64_t cell) const {
    // Cell c completes whenever the counter crosses an integer m = c + 1 (mod cells).
    const double off = static_cast<double>(cell + 1);
    return std::floor((grp.a - off) / cells_) * cells_ + off;
  }

  static const EpochQueue::Epoch* covering(const EpochQueue& q, double repaired_at) {
    const auto& eps = q.epochs();
    auto it = std::lower_bound(eps.begin(), eps.end(), repaired_at,
                               [](const EpochQueue::Epoch& e, double v) { return e.start < v; });
    return it == eps.end() ? nullptr : &*it;
  }

  // Returns false when the repair hits an unrecoverable object.
  bool resolve_cell(Group& grp, std::int64_t cell) {
    auto it = grp.ledger.find(cell);
    if (it == grp.ledger.end()) return true;
    const EpochQueue::Epoch* ep = covering(grp.q, grp.a - cells_);
    const int erased = ep ? ep->erased : 0;
    auto& entries = it->second;
    std::erase_if(entries, [&](const Corrupt& c) { return ep && grp.q.erased_in(c.slot, *ep); });
    std::sort(entries.begin(), entries.end(), [](const Corrupt& x, const Corrupt& y) {
      return x.object != y.object ? x.object < y.object : x.slot < y.slot;
    });
    std::vector<Corrupt> kept;
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      while (j < entries.size() && entries[j].object == entries[i].object) ++j;
      const int corrupt = static_cast<int>(j - i);
      if (n_ - erased - corrupt < k_) {
        on_loss();
        return false;
      }
      // Read stored fragments in random order until k intact ones are in hand;
      // every corrupt fragment read on the way is found and regenerated.
      std::vector<Corrupt> pending(entries.begin() + i, entries.begin() + j);
      rng_read_.shuffle(pending.begin(), pending.end());
      int left_total = n_ - erased;
      int left_corrupt = corrupt;
      int need = k_;
      std::size_t found = 0;
      while (need > 0 && left_corrupt > 0) {
        if (static_cast<int>(rng_read_.below(left_total)) < left_corrupt) {
          ++found;
          --left_corrupt;
        } else {
          --need;
        }
        --left_total;
      }
      report_.corruptions_found += static_cast<std::int64_t>(found);
      kept.insert(kept.end(), pending.begin() + found, pending.end());
      i = j;
    }
    if (kept.empty())
      grp.ledger.erase(it);
    else
      entries = std::move(kept);
    return true;
  }

  // ---- scheduling ----------------------------------------------------------

  bool stalled(const Group& grp) const {
    if (grp.unresponsive == 0 || grp.q.empty()) return false;
    const int erased = grp.q.head_erased();
    if (grp.unresponsive < n_ - erased - k_ + 1) return false;
    int unreadable = 0;
    for (int s = 0; s < n_; ++s)
      if (nodes_[grp.nodes[s]].unresponsive && !grp.q.erased_at_head(s)) ++unreadable;
    return n_ - erased - unreadable < k_;
  }

  void refresh(int g) {
    Group& grp = groups_[g];
    advance(grp);
    const bool pending = !grp.q.empty();
    const bool stall = pending && stalled(grp);
    if (stall && !grp.stalled) ++report_.stall_episodes;
    grp.stalled = stall;
    if (reactive_) {
      changes_.clear();
      if (grp.in_set) {
        active_.erase(grp.key, changes_);
        grp.in_set = false;
      }
      if (pending && !stall) {
        grp.key = {n_ - grp.q.head_erased(), grp.q.head().time, g};
        active_.insert(grp.key, changes_);
        grp.in_set = true;
      }
      for (const auto& [idx, on] : changes_) groups_[idx].active = on;
      for (const auto& [idx, on] : changes_)
        if (idx != g) set_rate(idx, groups_[idx].active ? group_rate_ : 0.0);
      set_rate(g, grp.active ? group_rate_ : 0.0);
    } else {
      set_rate(g, pending && !stall ? liquid_rate(grp) : 0.0);
    }
  }

  void set_rate(int g, double bps) {
    Group& grp = groups_[g];
    advance(grp);
    if (reactive_) {
      running_ += (bps > 0.0) - (grp.rate > 0.0);
      global_rate_ = running_ * group_rate_;
    } else {
      global_rate_ = bps;
    }
    grp.rate = bps;
    grp.speed = bps * speed_per_bps_;
    reschedule(g);
  }

  void reschedule(int g) {
    Group& grp = groups_[g];
    ++grp.version;
    if (!(grp.speed > 0.0)) return;
    advance(grp);
    double target = grp.q.head_close();
    grp.target_tick = false;
    if (regulated_ || !grp.ledger.empty()) {
      const double tick = std::floor(grp.a) + 1.0;
      if (tick <= target) {
        target = tick;
        grp.target_tick = true;
      }
    }
    grp.target = target;
    const double t = now_ + std::max(0.0, target - grp.a) / grp.speed;
    push(t, kGroup, g, grp.version);
  }

  // ---- liquid rates ------------------------------------------------------

  double liquid_rate(Group& grp) {
    if (!regulated_) return cfg_.effective_rate_bps();
    const double t_req = min_requested_time(grp);
    return std::min(cfg_.effective_rate_bps(), bytes_per_years_to_bps(d_src_, t_req));
  }

  double epoch_request(const Group& grp, const EpochQueue::Epoch& e) const {
    const double x = std::min((grp.a - e.start) / cells_, 1.0 - 1e-12);
    const double lam = cfg_.policy.use_estimator ? e.lambda_hat : models_.node.rate_at(now_);
    return phi(static_cast<double>(e.erased) / n_, std::max(0.0, x), cfg_.policy.regulator) / lam;
  }

  // Requests only grow between failures, so stale heap keys are lower bounds
  // and only the top needs to be re-evaluated.
  double min_requested_time(const Group& grp) {
    const auto& eps = grp.q.epochs();
    const bool rebuild = reg_dirty_ || (!cfg_.policy.use_estimator && !models_.node.is_constant());
    if (rebuild) {
      reg_heap_.clear();
      for (const auto& e : eps) reg_heap_.push_back({epoch_request(grp, e), e.seq});
      std::make_heap(reg_heap_.begin(), reg_heap_.end(), std::greater<>());
      reg_dirty_ = false;
    }
    const std::uint64_t head_seq = eps.front().seq;
    for (;;) {
      if (reg_heap_.empty()) throw std::logic_error("regulator heap lost its epochs");
      std::pop_heap(reg_heap_.begin(), reg_heap_.end(), std::greater<>());
      auto top = reg_heap_.back();
      reg_heap_.pop_back();
      if (top.second < head_seq) continue;
      const double v = epoch_request(grp, eps[top.second - head_seq]);
      const bool best = reg_heap_.empty() || v <= reg_heap_.front().first;
      reg_heap_.push_back({v, top.second});
      std::push_heap(reg_heap_.begin(), reg_heap_.end(), std::greater<>());
      if (best) return v;
    }
  }

  void record_interarrival() {
    history_[hist_pos_] = now_ - last_declare_;
    hist_pos_ = (hist_pos_ + 1) % window_;
    last_declare_ = now_;
  }

  void refresh_estimates() {
    reg_dirty_ = true;
    if (!cfg_.policy.use_estimator) return;
    std::size_t pos = hist_pos_;
    for (int w = 1; w <= window_; ++w) {
      pos = pos == 0 ? window_ - 1 : pos - 1;
      suffix_[w] = suffix_[w - 1] + history_[pos];
    }
    const auto& reg = cfg_.policy.regulator;
    for (auto& e : groups_[0].q.epochs()) {
      const int w = std::min(estimator_window(r_, e.erased, reg.window_coeff), window_);
      e.lambda_hat = w / (m_ * suffix_[w]);
    }
  }

  // ---- loss and reset -------------------------------------------------------

  void on_loss() {
    ++report_.loss_events;
    report_.loss_times.push_back(now_ / cfg_.time_scale);
    reset();
    trace(TraceEvent::Loss);
    if (report_.loss_events >= limits_.max_losses) stopped_ = true;
  }

  void reset() {
    ++resets_;
    for (auto& grp : groups_) {
      grp.q.reset();
      grp.a = 0.0;
      grp.t0 = now_;
      grp.rate = 0.0;
      grp.speed = 0.0;
      ++grp.version;
      grp.unresponsive = 0;
      grp.stalled = grp.in_set = grp.active = false;
      grp.ledger.clear();
    }
    active_.clear();
    running_ = 0;
    global_rate_ = 0.0;
    reg_heap_.clear();
    reg_dirty_ = true;
    for (auto& nd : nodes_) {
      nd.unresponsive = nd.dead = false;
      ++nd.episode;
      ++nd.life_gen;
    }
    start_streams();
  }

  SimReport finish() {
    const double ts = cfg_.time_scale;
    report_.simulated_years = now_ / ts;
    report_.mttdl_years = now_ / static_cast<double>(report_.loss_events + 1) / ts;
    if (!stats_.empty()) {
      const RateSummary s = stats_.summary();
      report_.r_avg = s.r_avg * ts;
      report_.r_99 = s.r_99 * ts;
      report_.r_9999 = s.r_9999 * ts;
      report_.r_peak_observed = s.r_peak * ts;
    }
    report_.read_bytes *= 1.0;  // already in scaled capacity units
    double mass = 0.0, weighted = 0.0;
    for (int f = 0; f <= n_; ++f) {
      mass += report_.missing_at_repair[f];
      weighted += f * report_.missing_at_repair[f];
    }
    if (mass > 0.0) {
      for (double& v : report_.missing_at_repair) v /= mass;
      report_.regenerated_fragments = weighted / mass;
    }
    report_.rates = stats_;
    return std::move(report_);
  }

  const ClusterConfig& cfg_;
  const FailureModels& models_;
  const RunLimits& limits_;
  const int n_, k_, r_, m_, p_, cells_;
  const bool reactive_, regulated_;

  double d_src_ = 0, cell_bytes_ = 0, speed_per_bps_ = 0, group_rate_ = 0, design_rate_ = 0;
  double node_rate_sector_ = 0;
  std::uint64_t objects_per_cell_ = 1;
  double horizon_ = 0;

  std::vector<Node> nodes_;
  std::vector<std::vector<std::pair<int, int>>> node_slots_;
  std::vector<Group> groups_;
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  ActiveSet active_;
  ActiveSet::Changes changes_;
  int running_ = 0;

  Rng rng_life_, rng_trans_, rng_sector_, rng_read_;
  double now_ = 0.0;
  double global_rate_ = 0.0;
  double traced_rate_ = -1.0;
  std::uint32_t resets_ = 0;
  bool stopped_ = false;

  int window_ = 1;
  std::vector<double> history_;
  std::vector<double> suffix_;
  std::size_t hist_pos_ = 0;
  double last_declare_ = 0.0;
  std::vector<std::pair<double, std::uint64_t>> reg_heap_;
  bool reg_dirty_ = true;

  RateStats stats_;
  SimReport report_;
};

}  // namespace

SimReport run_simulation(const ClusterConfig& cfg, const FailureModels& models,
                         const RunLimits& limits) {
  cfg.validate();
  models.validate();
  if (!(limits.max_years > 0.0)) throw std::invalid_argument("run: max_years must be positive");
  if (limits.max_losses < 1) throw std::invalid_argument("run: max_losses must be at least 1");
  Engine engine(cfg, models, limits);
  return engine.run();
}

}  // namespace liqlab
