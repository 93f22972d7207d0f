#include "liqlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "liqlab/units.hpp"

namespace liqlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn10 = 2.302585092994045684;

double log_choose(int n, int m) {
  return std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0);
}

Mttdl from_log(double ln_years) {
  return {std::exp(ln_years), ln_years / kLn10};
}

// Adds weight·Binomial(m, pf) into out[0..m], walking outward from the mode
// until terms fall below a relative cutoff.
void spread_binomial(int m, double pf, double weight, double* out) {
  if (pf <= 0.0 || m == 0) {
    out[0] += weight;
    return;
  }
  if (pf >= 1.0) {
    out[m] += weight;
    return;
  }
  const int mode = std::min(m, static_cast<int>(std::floor((m + 1) * pf)));
  const double lp = std::log(pf);
  const double lq = std::log1p(-pf);
  const double peak = std::exp(log_choose(m, mode) + mode * lp + (m - mode) * lq);
  const double ratio = pf / (1.0 - pf);
  const double cutoff = peak * 1e-18;
  out[mode] += weight * peak;
  double t = peak;
  for (int j = mode + 1; j <= m; ++j) {
    t *= static_cast<double>(m - j + 1) / j * ratio;
    if (t < cutoff) break;
    out[j] += weight * t;
  }
  t = peak;
  for (int j = mode - 1; j >= 0; --j) {
    t *= static_cast<double>(j + 1) / (m - j) / ratio;
    if (t < cutoff) break;
    out[j] += weight * t;
  }
}

}  // namespace

double FragmentDistribution::sum() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

double FragmentDistribution::tail(int s) const {
  double t = 0.0;
  for (int i = static_cast<int>(probs.size()) - 1; i > s; --i) t += probs[i];
  return t;
}

double FragmentDistribution::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) m += i * probs[i];
  return m;
}

void FragmentDistribution::validate(double tol) const {
  for (double p : probs)
    if (!(p >= 0.0)) throw std::runtime_error("distribution has a negative or NaN entry");
  if (std::abs(sum() - 1.0) > tol)
    throw std::runtime_error("distribution does not sum to one: " + std::to_string(sum()));
}

double binom_log_pmf(int n, int m, double q) {
  if (m < 0 || m > n) throw std::invalid_argument("binom_log_pmf requires 0 <= m <= n");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("binom_log_pmf requires q in [0,1]");
  if (q == 1.0) return m == 0 ? 0.0 : -kInf;
  if (q == 0.0) return m == n ? 0.0 : -kInf;
  return log_choose(n, m) + (n - m) * std::log(q) + m * std::log1p(-q);
}

double binom_log_pmf_exp(int n, int m, double a) {
  if (m < 0 || m > n) throw std::invalid_argument("binom_log_pmf requires 0 <= m <= n");
  if (a <= 0.0) return m == 0 ? 0.0 : -kInf;
  if (std::isinf(a)) return m == n ? 0.0 : -kInf;
  return log_choose(n, m) - (n - m) * a + m * std::log(-std::expm1(-a));
}

double log_upper_tail(int n, int r, double a) {
  if (r >= n) return -kInf;
  double hi = -kInf;
  std::vector<double> terms;
  terms.reserve(n - r);
  for (int s = r + 1; s <= n; ++s) {
    terms.push_back(binom_log_pmf_exp(n, s, a));
    hi = std::max(hi, terms.back());
  }
  if (hi == -kInf) return -kInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

FragmentDistribution head_of_queue_dist(int n, double lambda, double T) {
  if (lambda < 0.0 || T < 0.0) throw std::invalid_argument("lambda and T must be non-negative");
  FragmentDistribution d;
  d.probs.resize(n + 1);
  const double a = lambda * T;
  for (int s = 0; s <= n; ++s) d.probs[s] = std::exp(binom_log_pmf_exp(n, s, a));
  return d;
}

Mttdl mttdl_estimate_fixed(int n, int r, double lambda, double T) {
  if (!(r < n) || r < 0) throw std::invalid_argument("requires 0 <= r < n");
  if (!(lambda > 0.0) || T < 0.0) throw std::invalid_argument("requires lambda > 0, T >= 0");
  const double lq = binom_log_pmf_exp(n, r, lambda * T);
  if (lq == -kInf) return {kInf, kInf};
  return from_log(-std::log(lambda) - std::log(static_cast<double>(n - r)) - lq);
}

Mttdl mttdl_sandwich_lower(int n, int r, double lambda, double T) {
  const Mttdl est = mttdl_estimate_fixed(n, r, lambda, T);
  if (std::isinf(est.years)) return est;
  // 1 - q(>r) summed directly; the complement cancels when the tail is near one.
  double hi = -kInf;
  std::vector<double> terms(r + 1);
  for (int s = 0; s <= r; ++s) hi = std::max(hi, terms[s] = binom_log_pmf_exp(n, s, lambda * T));
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  const double v = est.years - T * std::exp(-(hi + std::log(acc)));
  if (!(v > 0.0)) return {0.0, -kInf};
  return {v, std::log10(v)};
}

double queue_transition(int n, int s_count, int t_count, double delta_x, double lambda, double T) {
  if (!(0 <= s_count && s_count <= t_count && t_count <= n))
    throw std::invalid_argument("queue_transition requires 0 <= s <= t <= n");
  if (delta_x < 0.0 || delta_x > 1.0) throw std::invalid_argument("delta_x must be in [0,1]");
  return std::exp(binom_log_pmf_exp(n - s_count, t_count - s_count, lambda * T * delta_x));
}

double deviation_exponent(double f, double a) {
  if (!(f > 0.0 && f < 1.0) || !(a > 0.0))
    throw std::invalid_argument("deviation_exponent requires f in (0,1), a > 0");
  const double h = -f * std::log(f) - (1.0 - f) * std::log1p(-f);
  return -h + (1.0 - f) * a - f * std::log(-std::expm1(-a));
}

FragmentDistribution greedy_recursion(int n, const PhiFn& phi_fn, int cells, int start_erased) {
  if (cells < 1) throw std::invalid_argument("greedy recursion needs at least one cell");
  const double delta = 1.0 / cells;
  std::vector<double> cur(n + 1, 0.0), next(n + 1, 0.0);
  cur[start_erased] = 1.0;
  for (int k = 0; k < cells; ++k) {
    const double x = k * delta;
    std::fill(next.begin(), next.end(), 0.0);
    for (int f = 0; f <= n; ++f) {
      if (cur[f] == 0.0) continue;
      const double pf = -std::expm1(-delta * phi_fn(static_cast<double>(f) / n, x));
      spread_binomial(n - f, pf, cur[f], next.data() + f);
    }
    cur.swap(next);
  }
  FragmentDistribution d{std::move(cur)};
  // Renormalize the truncation loss, which is below 1e-15 per step.
  const double s = d.sum();
  for (double& p : d.probs) p /= s;
  return d;
}

FragmentDistribution greedy_repair_dist(int n, const PhiFn& phi_fn, int cells) {
  return greedy_recursion(n, phi_fn, cells, 1);
}

Mttdl mttdl_regulated_lower(int n, int r, double lambda, const FragmentDistribution& greedy,
                            double t_max) {
  const double tail = greedy.tail(r);
  if (tail <= 0.0) return {kInf, kInf};
  const double base = 1.0 / (lambda * n * tail);
  const double v = base - t_max;
  if (std::isinf(base)) return {kInf, -std::log10(lambda * n) - std::log10(tail)};
  if (!(v > 0.0)) return {0.0, -kInf};
  return {v, std::log10(v)};
}

double repair_efficiency_bound(int n, const PhiFn& phi_fn, int cells) {
  const FragmentDistribution d = greedy_recursion(n, phi_fn, cells, 0);
  double acc = 0.0;
  for (int s = 0; s < n; ++s) acc += d.tail(s);
  return acc;
}

std::vector<double> GreedyGrid::log_grid(double lambda, int points, double span) {
  std::vector<double> g(points);
  const double lo = std::log(lambda / span);
  const double hi = std::log(lambda * span);
  for (int i = 0; i < points; ++i)
    g[i] = points == 1 ? lambda : std::exp(lo + (hi - lo) * i / (points - 1));
  return g;
}

std::function<double(int)> GreedyGrid::window_alpha(int r, double window_coeff) {
  const int full = static_cast<int>(std::lround(window_coeff * r));
  return [full](int erased) { return 1.0 - 1.0 / std::max(2, full - erased); };
}

namespace {

struct GridMap {
  const std::vector<double>& g;
  std::vector<double> logs;

  explicit GridMap(const std::vector<double>& grid) : g(grid), logs(grid.size()) {
    for (std::size_t i = 0; i < grid.size(); ++i) logs[i] = std::log(grid[i]);
  }

  // Linear interpolation in log space, clamped at the ends.
  void locate(double value, int& lo, double& w_hi) const {
    const int size = static_cast<int>(g.size());
    if (size == 1 || value <= g.front()) {
      lo = 0;
      w_hi = 0.0;
      return;
    }
    if (value >= g.back()) {
      lo = size - 2;
      w_hi = 1.0;
      return;
    }
    const auto it = std::upper_bound(g.begin(), g.end(), value);
    lo = static_cast<int>(it - g.begin()) - 1;
    w_hi = (std::log(value) - logs[lo]) / (logs[lo + 1] - logs[lo]);
  }
};

}  // namespace

EstimatedGreedyResult greedy_dist_with_estimation(int n, const PhiFn& phi_fn,
                                                  const GreedyGrid& grid, double lambda_true,
                                                  const std::vector<double>& init) {
  if (grid.lambda_grid.empty()) throw std::invalid_argument("empty lambda grid");
  if (init.size() != grid.lambda_grid.size())
    throw std::invalid_argument("initial estimate distribution does not match the grid");
  if (!(grid.delta > 0.0 && grid.delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  if (!std::is_sorted(grid.lambda_grid.begin(), grid.lambda_grid.end()))
    throw std::invalid_argument("lambda grid must be ascending");
  const int cells = static_cast<int>(std::lround(1.0 / grid.delta));
  const double delta = 1.0 / cells;
  const int lump = grid.lump_above < 0 ? n : std::min(n, grid.lump_above);
  const int nl = static_cast<int>(grid.lambda_grid.size());
  const double kappa = lambda_true * n;  // aggregate failure rate
  const double t_min =
      grid.cap_factor > 0.0 ? grid.phi_nom / (grid.cap_factor * lambda_true) : 0.0;
  const GridMap map(grid.lambda_grid);

  // Rows are indexed densely by erased * nl + lambda index and allocated lazily.
  struct Row {
    std::vector<double> tau;    // cumulative time to reach cell i
    std::vector<double> decay;  // survival factor across cell i
  };
  std::vector<Row> rows(static_cast<std::size_t>(lump) * nl);
  auto row_for = [&](int f, int l) -> const Row& {
    Row& row = rows[static_cast<std::size_t>(f) * nl + l];
    if (!row.tau.empty()) return row;
    row.tau.resize(cells + 1);
    row.decay.resize(cells);
    const double lam = grid.lambda_grid[l];
    const double fr = static_cast<double>(f) / n;
    row.tau[0] = 0.0;
    for (int i = 0; i < cells; ++i) {
      const double step = delta * std::max(phi_fn(fr, (i + 0.5) * delta) / lam, t_min);
      row.tau[i + 1] = row.tau[i] + step;
      row.decay[i] = std::exp(-kappa * step);
    }
    return row;
  };

  using Slab = std::vector<std::vector<double>>;
  Slab cur(static_cast<std::size_t>(lump) * nl), next(cur.size());
  if (grid.start_erased >= lump) throw std::invalid_argument("start_erased beyond the lump");
  for (int l = 0; l < nl; ++l)
    if (init[l] > 0.0) {
      auto& v = cur[static_cast<std::size_t>(grid.start_erased) * nl + l];
      v.assign(cells, 0.0);
      v[0] = init[l];
    }

  EstimatedGreedyResult res;
  res.dist.probs.assign(n + 1, 0.0);
  res.lambda_marginal.assign(nl, 0.0);

  // Destination rows for the two branches out of the current key; null
  // means the mass is absorbed into the lump.
  std::vector<double*> dest[2] = {std::vector<double*>(nl), std::vector<double*>(nl)};
  std::vector<double> lumped[2] = {std::vector<double>(nl), std::vector<double>(nl)};
  auto bind = [&](int branch, int f_new) {
    std::fill(lumped[branch].begin(), lumped[branch].end(), 0.0);
    for (int l = 0; l < nl; ++l) {
      if (f_new >= lump) {
        dest[branch][l] = nullptr;
        continue;
      }
      auto& v = next[static_cast<std::size_t>(f_new) * nl + l];
      if (v.empty()) v.assign(cells, 0.0);
      dest[branch][l] = v.data();
    }
  };
  auto flush = [&](int branch) {
    for (int l = 0; l < nl; ++l) {
      res.dist.probs[lump] += lumped[branch][l];
      res.lambda_marginal[l] += lumped[branch][l];
    }
  };

  double remaining = 1.0;
  int step = 0;
  while (remaining >= grid.tolerance) {
    if (step >= grid.max_failures)
      throw std::runtime_error("estimation recursion did not converge; residual mass " +
                               std::to_string(remaining));
    ++step;
    for (auto& v : next) std::fill(v.begin(), v.end(), 0.0);
    for (int f = 0; f < lump; ++f) {
      for (int l = 0; l < nl; ++l) {
        const auto& mass = cur[static_cast<std::size_t>(f) * nl + l];
        if (mass.empty()) continue;
        const Row& row = row_for(f, l);
        const double t_hat = 1.0 / (n * grid.lambda_grid[l]);
        const double p_inc = 1.0 - static_cast<double>(f) / n;
        const double alpha[2] = {grid.alpha(f + 1), grid.alpha(f)};
        const double bp[2] = {p_inc, 1.0 - p_inc};
        bind(0, f + 1);
        bind(1, f);
        for (int j = 0; j < cells; ++j) {
          const double m = mass[j];
          if (m == 0.0) continue;
          double surv = 1.0;
          int i = j;
          for (; i < cells; ++i) {
            const double s_next = surv * row.decay[i];
            const double p = surv - s_next;
            if (p > 0.0) {
              const double u = row.tau[i] - row.tau[j];
              const double w = row.tau[i + 1] - row.tau[i];
              // Mean of the exponential failure time conditioned on this cell.
              const double kw = kappa * w;
              const double frac =
                  kw < 1e-8 ? 0.5 : (1.0 / kw - row.decay[i] / (1.0 - row.decay[i]));
              const double elapsed = u + frac * w;
              const int y_lo = i;
              const int y_hi = i + 1 < cells ? i + 1 : i;
              const double pm = p * m;
              for (int b = 0; b < 2; ++b) {
                if (bp[b] <= 0.0) continue;
                const double t_new = alpha[b] * t_hat + (1.0 - alpha[b]) * elapsed;
                int lo;
                double wh;
                map.locate(1.0 / (n * t_new), lo, wh);
                const double base = pm * bp[b];
                const double parts[2] = {base * (1.0 - wh), base * wh};
                for (int side = 0; side < 2; ++side) {
                  const double v = parts[side];
                  if (v <= 0.0) continue;
                  const int li = lo + side;
                  if (double* d = dest[b][li]) {
                    d[y_lo] += v * (1.0 - frac);
                    d[y_hi] += v * frac;
                  } else {
                    lumped[b][li] += v;
                  }
                }
              }
            }
            surv = s_next;
            if (surv < 1e-18) break;
          }
          if (i == cells) {
            // Reached the head before the next failure.
            res.dist.probs[f] += m * surv;
            res.lambda_marginal[l] += m * surv;
          }
        }
        flush(0);
        flush(1);
      }
    }
    cur.swap(next);
    remaining = 0.0;
    for (const auto& v : cur)
      for (double x : v) remaining += x;
  }
  res.failures = step;
  res.residual = remaining;
  return res;
}

double invert_lambda_t_for_mttdl(int n, int r, double lambda, double target_years) {
  if (!(target_years > 0.0)) throw std::invalid_argument("target MTTDL must be positive");
  if (!(r < n) || r < 1) throw std::invalid_argument("requires 1 <= r < n");
  const double log_target = std::log(target_years);
  auto log_est = [&](double a) {
    return -std::log(lambda) - std::log(static_cast<double>(n - r)) -
           binom_log_pmf_exp(n, r, a);
  };
  // The estimate decreases in a up to the mode of B(n, r, e^-a).
  double hi = -std::log1p(-static_cast<double>(r) / n);
  double lo = hi * 1e-12;
  if (log_est(hi) > log_target)
    throw std::runtime_error("target MTTDL is below what any repair rate yields");
  if (log_est(lo) < log_target)
    throw std::runtime_error("target MTTDL is unreachable within the rate bounds");
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    (log_est(mid) > log_target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double invert_rate_for_mttdl(int n, int r, double lambda, double d_src_bytes,
                             double target_years) {
  const double a = invert_lambda_t_for_mttdl(n, r, lambda, target_years);
  return bytes_per_years_to_bps(d_src_bytes, a / lambda);
}

}  // namespace liqlab
