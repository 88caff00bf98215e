#pragma once

// Online safety checking: roll the estimate forward K steps under the
// nominal closed loop, place the certified error ellipsoid at each predicted
// point and test it against the unsafe set.

#include <deque>
#include <optional>
#include <vector>

#include "reachmon/ellipsoid.hpp"
#include "reachmon/plant.hpp"
#include "reachmon/reachability.hpp"

namespace reachmon {

struct MonitorConfig {
  const LtiModel& model;
  const Controller& ctrl;
  const ReachCertificate& cert;
  UnsafeSetd unsafe;
  long K = 0;
  /// Stop at the first violating step. Benchmarks disable this to visit the
  /// whole horizon.
  bool early_exit = true;

  void validate() const;
};

struct MonitorVerdict {
  bool safe = true;
  bool center_unsafe = false;
  std::optional<long> k_f;
  std::optional<std::size_t> violated_constraint;
  std::optional<double> tc_seconds;
  double impact = 0.0;
  std::vector<double> per_step_min_distance;
  double baseline_du = 0.0;
  std::optional<double> baseline_tu;
};

/// One noise-free closed-loop prediction step from x_hat at time k:
/// u = control_law(C x_hat), x_hat+ = A x_hat + B u. Advances `state`.
VectorXd predict_control_flow(const LtiModel& model, const Controller& ctrl, const VectorXd& x_hat,
                              ControllerState& state, long k);

/// Monitor with per-constraint support widths sqrt(c Pi c^T) computed once.
class SafetyMonitor {
 public:
  explicit SafetyMonitor(MonitorConfig cfg);

  /// Checks offsets l = 0..K from the estimate x_hat at time k. The baseline
  /// fields are filled from `rate` (see baseline_metrics).
  MonitorVerdict check(const VectorXd& x_hat, const ControllerState& state, long k = 0,
                       double rate = 0.0) const;

  const MonitorConfig& config() const { return cfg_; }

 private:
  MonitorConfig cfg_;
  std::vector<double> widths_;
  std::vector<double> norms_;
};

/// Convenience wrapper: builds a SafetyMonitor and runs one check.
MonitorVerdict check_safety(const MonitorConfig& cfg, const VectorXd& x_hat, const ControllerState& state,
                            long k = 0, double rate = 0.0);

/// max_i det(Pi_i)/det(Pi) over the unsafe half-spaces, where Pi_i covers the
/// cap of Ellipsoid(x_hat, Pi) on the unsafe side of h_i.
double impact_metric(const ReachCertificate& cert, const VectorXd& x_hat, const UnsafeSetd& unsafe);

/// Tc = offset * dt.
double time_to_unsafe(long offset, double dt);

struct BaselineMetrics {
  double d_u = 0.0;
  std::optional<double> t_u;
};

/// d_u = min_i max(0, (b_i - c_i x_hat)/||c_i||); t_u = d_u / rate (none when
/// rate < 1e-12). d_u is +inf for an empty unsafe set.
BaselineMetrics baseline_metrics(const VectorXd& x_hat, const UnsafeSetd& unsafe, double rate);

/// Trailing average of ||x_hat(k) - x_hat(k-1)|| / dt over the last
/// `window` differences.
class TrailingRate {
 public:
  TrailingRate(double dt, std::size_t window = 100);

  void push(const VectorXd& x_hat);
  double rate() const;

 private:
  double dt_;
  std::size_t window_;
  std::deque<double> steps_;
  double sum_ = 0.0;
  std::optional<VectorXd> last_;
};

}  // namespace reachmon
