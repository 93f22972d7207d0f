#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

namespace liqlab {

struct RegulatorParams {
  double f_tar = 0.0;
  double f_T = 0.0;
  double gamma = 1.0 / 3.0;
  double window_coeff = 7.0 / 6.0;

  /// f_tar = (2/3)·r/n, f_T = r/n.
  static RegulatorParams defaults(int n, int r);

  void validate() const;
  double phi_nom() const;
  double phi_floor() const { return gamma * phi_nom(); }
};

/// Expected erased fraction at queue position x on the nominal trajectory.
double nominal_fraction(double x, double lambda, double T);

/// Root of the balance equation before clamping. Empty when f >= f_T or no
/// admissible root exists.
std::optional<double> phi_unclamped(double f, double x, const RegulatorParams& p);

/// Requested system repair time in units of 1/lambda_hat, clamped to
/// [gamma·phi_nom, phi_nom].
double phi(double f, double x, const RegulatorParams& p);

/// Sliding-window length for an object with F erased fragments.
int estimator_window(int r, int erased, double window_coeff);

/// Per-node rate estimate from the newest inter-arrival times of the
/// aggregate failure process (newest last). The window is clamped to the
/// history length.
double estimate_failure_rate(const std::vector<double>& interarrivals, int erased,
                             const RegulatorParams& p, int r, int nodes);

struct CriticalEpoch {
  double x;           // queue position in [0, 1)
  double f;           // erased fraction
  double lambda_hat;  // per-node rate estimate, 1/years
};

/// Requested full-cycle time (years) for one epoch.
double requested_time(const CriticalEpoch& e, const RegulatorParams& p);

/// Repair read rate in bits/s. An empty list yields the nominal rate for
/// `fallback_lambda`.
double select_repair_rate(const std::vector<CriticalEpoch>& epochs, double d_src_bytes,
                          double cap_bps, const RegulatorParams& p, double fallback_lambda);

/// Repair queue of one placement group as a chain of critical epochs.
///
/// Queue progress is a continuous counter measured in objects. An epoch is
/// opened at the counter value of a node failure and closes once the counter
/// has moved a full cycle past it. Slot s belongs to the erased set of epoch e
/// exactly when last_fail[s] >= e.seq, which keeps the sets nested.
class EpochQueue {
 public:
  struct Epoch {
    std::uint64_t seq;
    double start;
    int erased;
    double time;        // clock value when the epoch opened
    double lambda_hat;  // estimator output, maintained by the owner
  };

  EpochQueue(int n, double cycle);

  int n() const { return n_; }
  double cycle() const { return cycle_; }
  bool empty() const { return q_.empty(); }
  std::size_t size() const { return q_.size(); }
  const std::deque<Epoch>& epochs() const { return q_; }
  std::deque<Epoch>& epochs() { return q_; }
  const Epoch& head() const { return q_.front(); }
  int head_erased() const { return q_.empty() ? 0 : q_.front().erased; }

  double position(const Epoch& e, double advance) const { return (advance - e.start) / cycle_; }
  bool erased_in(int slot, const Epoch& e) const { return last_fail_[slot] >= e.seq; }
  bool erased_at_head(int slot) const { return !q_.empty() && erased_in(slot, q_.front()); }

  /// Records the loss of the fragment in `slot` at counter value `advance`.
  void fail(int slot, double advance, double time);

  /// Counter value at which the head epoch closes.
  double head_close() const { return q_.front().start + cycle_; }

  /// Removes epochs that have completed a full cycle; returns how many.
  int drop_completed(double advance);

  /// Erased count of an object last repaired at counter value `repaired_at`.
  int erased_since(double repaired_at) const;

  void reset();

 private:
  int n_;
  double cycle_;
  std::deque<Epoch> q_;
  std::vector<std::uint64_t> last_fail_;
  std::uint64_t next_seq_ = 1;
};

}  // namespace liqlab
