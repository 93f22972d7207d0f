#pragma once

#include <functional>
#include <vector>

namespace liqlab {

/// Probability vector over the number of erased fragments, indexed 0..n.
struct FragmentDistribution {
  std::vector<double> probs;

  int n() const { return static_cast<int>(probs.size()) - 1; }
  double sum() const;
  double tail(int s) const;  // P(erased > s)
  double mean() const;
  void validate(double tol = 1e-9) const;
};

/// A duration in years that may exceed double range; `log10_years` is always
/// meaningful and `years` is +inf on overflow.
struct Mttdl {
  double years;
  double log10_years;
};

/// log B(n, m, q) where B is the binomial mass with survival probability q:
/// C(n,m) q^(n-m) (1-q)^m.
double binom_log_pmf(int n, int m, double q);

/// Same with q = e^(-a) given through a = lambda·T, avoiding cancellation.
double binom_log_pmf_exp(int n, int m, double a);

/// log of sum_{s > r} B(n, s, e^(-a)).
double log_upper_tail(int n, int r, double a);

FragmentDistribution head_of_queue_dist(int n, double lambda, double T);

Mttdl mttdl_estimate_fixed(int n, int r, double lambda, double T);
Mttdl mttdl_sandwich_lower(int n, int r, double lambda, double T);

double queue_transition(int n, int s_count, int t_count, double delta_x, double lambda, double T);

/// E(f, a) = -H(f) + (1-f)·a - f·ln(1 - e^(-a)), natural-log entropy.
double deviation_exponent(double f, double a);

/// phi(f, x): requested lambda·T for an object with erased fraction f at
/// queue position x.
using PhiFn = std::function<double(double f, double x)>;

/// Greedy recursion over `cells` queue steps starting from `start_erased`
/// erasures at the tail.
FragmentDistribution greedy_recursion(int n, const PhiFn& phi_fn, int cells, int start_erased);

/// Distribution at repair of a critical object (one erasure at the tail).
FragmentDistribution greedy_repair_dist(int n, const PhiFn& phi_fn, int cells);

Mttdl mttdl_regulated_lower(int n, int r, double lambda, const FragmentDistribution& greedy,
                            double t_max);

/// Upper bound on the expected number of repaired fragments per object.
double repair_efficiency_bound(int n, const PhiFn& phi_fn, int cells);

struct GreedyGrid {
  double delta = 1.0 / 2000.0;          // queue quantization
  std::vector<double> lambda_grid;      // ascending, per-node rates
  std::function<double(int)> alpha;     // filter coefficient by erased count
  double cap_factor = 0.0;              // rate cap as a multiple of nominal; 0 = none
  double phi_nom = 0.0;                 // needed only with a cap
  int start_erased = 1;
  int lump_above = -1;                  // stop tracking beyond this count (-1: n)
  int max_failures = 100000;
  double tolerance = 1e-12;

  /// 128 log-spaced points over [lambda/8, 8·lambda] by default.
  static std::vector<double> log_grid(double lambda, int points = 128, double span = 8.0);
  /// alpha(F) = 1 - 1/max(2, round(c·r) - F).
  static std::function<double(int)> window_alpha(int r, double window_coeff);
};

struct EstimatedGreedyResult {
  FragmentDistribution dist;           // marginal over F at absorption
  std::vector<double> lambda_marginal; // marginal over the lambda grid at absorption
  int failures = 0;                    // node-failure steps taken
  double residual = 0.0;
};

/// Joint (F, queue position, rate estimate) recursion. `init` is the
/// distribution of the estimate over grid.lambda_grid at the start.
EstimatedGreedyResult greedy_dist_with_estimation(int n, const PhiFn& phi_fn,
                                                  const GreedyGrid& grid, double lambda_true,
                                                  const std::vector<double>& init);

/// Fixed repair rate (bits/s) whose MTTDL estimate equals `target_years`.
double invert_rate_for_mttdl(int n, int r, double lambda, double d_src_bytes,
                             double target_years);

/// lambda·T at which the estimate reaches `target_years` (bisection).
double invert_lambda_t_for_mttdl(int n, int r, double lambda, double target_years);

}  // namespace liqlab
