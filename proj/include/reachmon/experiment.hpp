#pragma once

// Monte Carlo evaluation: monitored closed-loop runs, trial classification,
// rate sweeps over the prediction horizon and the attacked-sensor count,
// the baseline comparison and latency benchmarks.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reachmon/io.hpp"
#include "reachmon/monitor.hpp"
#include "reachmon/stats.hpp"

namespace reachmon {

struct MonitoredRunOptions {
  long K = 100;
  std::size_t rate_window = 100;
  bool early_exit = true;
  bool keep_verdicts = false;
};

struct MonitoredRun {
  SimTrace trace;
  /// Offset of the first predicted violation at each step (none when safe
  /// through K).
  std::vector<std::optional<long>> k_f;
  std::vector<double> impact;
  std::vector<std::optional<double>> baseline_tu;
  std::vector<MonitorVerdict> verdicts;  // only with keep_verdicts
};

/// Co-simulation: at every step the monitor checks x_hat(k) with the live
/// controller state before the plant advances.
MonitoredRun run_monitored(const LtiModel& model, const Controller& ctrl, const EstimatorConfig& est,
                           const DetectorConfig& det, const AttackPlan& plan, const ReachCertificate& cert,
                           const UnsafeSetd& unsafe, long horizon, std::uint64_t seed,
                           const MonitoredRunOptions& opts, const VectorXd& x0 = {});

/// Monitor over a recorded trace. The controller state is replayed from the
/// recorded y_bar; records need x_hat and y_bar.
std::vector<MonitorVerdict> monitor_trace(const LtiModel& model, const Controller& ctrl, const ReachCertificate& cert,
                                          const UnsafeSetd& unsafe, const SimTrace& trace,
                                          const MonitoredRunOptions& opts);

/// First step at which the true state lies in the unsafe set.
std::optional<long> damage_step(const SimTrace& trace, const UnsafeSetd& unsafe);

/// First step k >= `from` at which the number of alarms in the trailing
/// window (k - W, k] restricted to [from, k] reaches the upper critical count
/// of Binomial(W, beta) at level alpha.
std::optional<long> detection_step(const SimTrace& trace, long from, const io::DetectionRule& rule, double beta);

enum class Classification { TP, TN, FP, FN, Other };
enum class OtherReason { None, DetectedWithoutDamage, NoDamageNoDetection, DamageWithoutAttack };

const char* to_string(Classification c);
const char* to_string(OtherReason r);

/// Everything classify_trial needs from one run.
struct TrialRecord {
  std::uint64_t seed = 0;
  bool attack_present = false;
  bool ground_truth = true;
  std::optional<long> damage;
  std::optional<long> detection;
  std::vector<std::optional<long>> k_f;  // per step, from a pass with horizon >= K
};

struct TrialOutcome {
  Classification classification = Classification::Other;
  OtherReason other = OtherReason::None;
  std::optional<long> warning_step;
  std::optional<long> detection_step;
  std::optional<long> damage_step;
  std::uint64_t seed = 0;
};

/// A step k warns at horizon K when its first predicted violation is at
/// offset <= K. With a warning in [damage - K, damage):
///   damage before detection  -> TP (FN without a warning)
///   detection before damage  -> FP (TN without a warning)
/// Trials without damage, or with damage but no attack, are Other.
TrialOutcome classify_trial(const TrialRecord& trial, long K);

struct RateRow {
  long key = 0;  // K or attacked-sensor count
  std::size_t trials = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0, other = 0;
  std::size_t detected_no_damage = 0, no_damage_no_detection = 0, damage_without_attack = 0;

  double tpr() const;
  double fpr() const;
  double tnr() const;
  double fnr() const;
  stats::Interval tpr_ci() const;
  stats::Interval fpr_ci() const;
  stats::Interval tnr_ci() const;
  stats::Interval fnr_ci() const;
};

RateRow tally(long key, const std::vector<TrialOutcome>& outcomes);

/// Estimator, detector and certificate shared by every trial of a scenario.
struct Calibration {
  EstimatorConfig est;
  DetectorConfig det;
  std::optional<ReachCertificate> cert;
};

Calibration calibrate_scenario(const io::Scenario& sc, std::uint64_t seed);

struct TrialSpec {
  std::uint64_t seed = 0;
  AttackPlan plan;
  bool stealthy = true;
};

/// Draws trial i of a sweep: attack type, start step and the attacked
/// sensors (uniform without replacement), all from derive_seed(seed, i).
TrialSpec draw_trial(const io::Scenario& sc, std::uint64_t seed, std::size_t index,
                     std::optional<int> sensor_count = std::nullopt);

/// Unsafe constraints associated with the attacked sensors; entries not
/// tied to an output always apply. The full set when no sensor is attacked.
UnsafeSetd constraints_for(const io::Scenario& sc, const std::vector<int>& sensors);

TrialRecord run_trial(const io::Scenario& sc, const Calibration& cal, const TrialSpec& spec, long K_max);

struct SweepResult {
  std::vector<RateRow> rows;
  std::vector<TrialSpec> specs;
  std::vector<TrialRecord> records;
};

/// One monitored pass per trial at the largest K serves every K.
SweepResult run_validation_sweep(const io::Scenario& sc, const Calibration& cal, const std::vector<long>& k_list,
                                 std::size_t trials, std::uint64_t seed, unsigned jobs = 1);

SweepResult run_attacked_sensor_sweep(const io::Scenario& sc, const Calibration& cal,
                                      const std::vector<int>& sensor_counts, std::size_t trials,
                                      std::uint64_t seed, long K, unsigned jobs = 1);

/// Single-run quantities compared between the monitor and the baseline over
/// the attack window [start, damage).
struct ComparisonRun {
  std::uint64_t seed = 0;
  std::optional<long> damage;
  std::optional<long> detection;
  bool damage_before_detection = false;
  std::optional<long> first_impact;   // first step with impact > 0
  double tu_slope = 0.0;              // least-squares slope of t_u over the window
  double monitor_error_early = 0.0;   // mean |Tc - truth|, first half of the window
  double monitor_error_late = 0.0;
  double baseline_error_early = 0.0;  // mean |t_u - truth|
  double baseline_error_late = 0.0;
};

/// Tc is taken as K dt at steps where the monitor reports safe.
ComparisonRun compare_with_baseline(const io::Scenario& sc, const Calibration& cal, std::uint64_t seed);

struct BenchRecord {
  Eigen::Index n = 0;
  long K = 0;
  std::size_t constraints = 0;
  std::size_t checks = 0;
  double mean_s = 0.0;
  double p50_s = 0.0;
  double p95_s = 0.0;
};

struct BenchConfig {
  std::vector<long> k_list;
  std::vector<std::size_t> constraint_counts;
  long K_for_constraints = 500;
  std::size_t constraints_for_k = 5;
  std::size_t checks = 1000;
  std::size_t warmup = 50;
  std::uint64_t seed = 1;
};

/// Worst-case latency of check_safety (early exit disabled) against random
/// half-spaces placed outside the reachable region.
std::vector<BenchRecord> run_benchmark(const LtiModel& model, const Controller& ctrl, const ReachCertificate& cert,
                                       const BenchConfig& cfg);

void write_rates_csv(std::ostream& os, const std::vector<RateRow>& rows, const char* key_name);
void write_roc_csv(std::ostream& os, const std::vector<RateRow>& rows);
void write_trials_csv(std::ostream& os, const SweepResult& res, const std::vector<long>& k_list);
void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records);

}  // namespace reachmon
