#include "liqlab/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "liqlab/units.hpp"

namespace liqlab {

RegulatorParams RegulatorParams::defaults(int n, int r) {
  RegulatorParams p;
  p.f_T = static_cast<double>(r) / n;
  p.f_tar = 2.0 / 3.0 * p.f_T;
  return p;
}

void RegulatorParams::validate() const {
  if (!(f_tar > 0.0 && f_tar < f_T && f_T <= 1.0))
    throw std::invalid_argument("regulator requires 0 < f_tar < f_T <= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("regulator gamma must be in (0, 1]");
  if (!(window_coeff > 0.0)) throw std::invalid_argument("regulator window_coeff must be positive");
}

double RegulatorParams::phi_nom() const { return -std::log1p(-f_tar); }

double nominal_fraction(double x, double lambda, double T) { return -std::expm1(-lambda * T * x); }

std::optional<double> phi_unclamped(double f, double x, const RegulatorParams& p) {
  if (f >= p.f_T || x >= 1.0) return std::nullopt;
  const double a = 1.0 - f;
  const double b = 1.0 - p.f_T;
  const double c = 1.0 - p.f_tar;
  const double d = -std::expm1((1.0 - x) * std::log(c));  // 1 - c^(1-x)
  const double kk = c / ((c - b) * (c - b));
  const double qa = kk + 1.0 / (a * d);
  const double qb = 2.0 * kk * b + 1.0 / d;
  const double qc = kk * b * b;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) return std::nullopt;
  // Larger root via the cancellation-free pair.
  const double big = (qb + std::sqrt(disc)) / (2.0 * qa);
  if (!(big > b && big <= a * (1.0 + 1e-15))) return std::nullopt;
  const double e = std::min(big, a);
  return std::log(a / e) / (1.0 - x);
}

double phi(double f, double x, const RegulatorParams& p) {
  const double nom = p.phi_nom();
  const double lo = p.gamma * nom;
  if (f >= p.f_T) return lo;
  // At or below the nominal trajectory the request is at least phi_nom.
  if (f <= -std::expm1(x * std::log1p(-p.f_tar))) return nom;
  const auto raw = phi_unclamped(f, x, p);
  if (!raw) return lo;
  return std::clamp(*raw, lo, nom);
}

int estimator_window(int r, int erased, double window_coeff) {
  const int full = static_cast<int>(std::lround(window_coeff * r));
  return std::max(1, full - erased);
}

double estimate_failure_rate(const std::vector<double>& interarrivals, int erased,
                             const RegulatorParams& p, int r, int nodes) {
  if (interarrivals.empty()) throw std::invalid_argument("estimator history is empty");
  const auto w = std::min<std::size_t>(estimator_window(r, erased, p.window_coeff),
                                       interarrivals.size());
  double sum = 0.0;
  for (std::size_t i = interarrivals.size() - w; i < interarrivals.size(); ++i)
    sum += interarrivals[i];
  return static_cast<double>(w) / (nodes * sum);
}

double requested_time(const CriticalEpoch& e, const RegulatorParams& p) {
  return phi(e.f, e.x, p) / e.lambda_hat;
}

double select_repair_rate(const std::vector<CriticalEpoch>& epochs, double d_src_bytes,
                          double cap_bps, const RegulatorParams& p, double fallback_lambda) {
  double t_req = std::numeric_limits<double>::infinity();
  if (epochs.empty()) {
    t_req = p.phi_nom() / fallback_lambda;
  } else {
    for (const auto& e : epochs) t_req = std::min(t_req, requested_time(e, p));
  }
  return std::min(cap_bps, bytes_per_years_to_bps(d_src_bytes, t_req));
}

EpochQueue::EpochQueue(int n, double cycle) : n_(n), cycle_(cycle), last_fail_(n, 0) {}

void EpochQueue::fail(int slot, double advance, double time) {
  const std::uint64_t prev = last_fail_[slot];
  for (auto it = q_.rbegin(); it != q_.rend() && it->seq > prev; ++it) ++it->erased;
  if (q_.empty() || q_.back().start != advance) {
    q_.push_back({next_seq_++, advance, 1, time, 0.0});
  }
  last_fail_[slot] = q_.back().seq;
}

int EpochQueue::drop_completed(double advance) {
  int dropped = 0;
  while (!q_.empty() && advance >= q_.front().start + cycle_) {
    q_.pop_front();
    ++dropped;
  }
  return dropped;
}

int EpochQueue::erased_since(double repaired_at) const {
  // Oldest epoch opened at or after the repair.
  auto it = std::lower_bound(q_.begin(), q_.end(), repaired_at,
                             [](const Epoch& e, double v) { return e.start < v; });
  return it == q_.end() ? 0 : it->erased;
}

void EpochQueue::reset() {
  q_.clear();
  std::fill(last_fail_.begin(), last_fail_.end(), 0);
}

}  // namespace liqlab
