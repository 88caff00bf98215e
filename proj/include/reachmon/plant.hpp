#pragma once

// Closed-loop simulation of an LTI plant with output feedback, a one-step
// Kalman predictor, a chi-squared detector and an optional stealthy sensor
// attack.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "reachmon/estimation.hpp"
#include "reachmon/model.hpp"

namespace reachmon {

/// Seeded source of standard normal and uniform draws.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  /// factor * N(0, I).
  VectorXd gaussian(const MatrixXd& factor) {
    VectorXd z(factor.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal();
    return factor * z;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Mixes a base seed with a stream index (splitmix64), so sub-streams of one
/// run are independent of each other.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Piecewise-linear reference trajectory y_r(k); held constant outside the
/// breakpoints.
class ReferenceSchedule {
 public:
  ReferenceSchedule() = default;
  explicit ReferenceSchedule(VectorXd constant);
  ReferenceSchedule(std::vector<long> steps, std::vector<VectorXd> values);

  VectorXd at(long k) const;
  Eigen::Index size() const { return values_.empty() ? 0 : values_.front().size(); }
  const std::vector<long>& steps() const { return steps_; }
  const std::vector<VectorXd>& values() const { return values_; }

 private:
  std::vector<long> steps_;
  std::vector<VectorXd> values_;
};

/// Output feedback u = K (y_bar - y_r(k)), optionally with an integral term
/// Ki * s(k) where s(k+1) = s(k) + dt (y_bar - y_r(k)).
struct Controller {
  MatrixXd gain;                         // l x m
  ReferenceSchedule reference;
  std::optional<MatrixXd> integral_gain;  // l x m
  double dt = 1.0;

  void validate(const LtiModel& model) const;
};

struct ControllerState {
  VectorXd integral;  // empty for the static law
};

ControllerState initial_controller_state(const Controller& ctrl);

/// Advances the integrator (if any) and returns u(k).
VectorXd control_law(const Controller& ctrl, ControllerState& state, const VectorXd& y_bar, long k);

enum class AttackStrategy { GrowingBias, ResidualSteering };

struct AttackPlan {
  long start = 0;
  long end = -1;  // inclusive; end < start disables the attack
  std::vector<int> sensors;
  AttackStrategy strategy = AttackStrategy::ResidualSteering;
  double rate = 0.0;    // growing bias increment per step
  VectorXd direction;   // length m; defaults to +1 on every targeted sensor
  double alarm_mimic_rate = 0.05;
  /// Shape the residual to the detector's nominal alarm statistics. A
  /// non-stealthy plan injects the raw growing bias.
  bool stealthy = true;
  double epsilon = 0.01;      // nominal residual norm sqrt(tau) (1 - epsilon)
  double alarm_scale = 1.1;   // mimicked alarm residual norm sqrt(tau) * alarm_scale

  bool active(long k) const { return !sensors.empty() && start <= end && k >= start && k <= end; }
  void validate(Eigen::Index m) const;
};

/// Running counters the attacker uses to keep its alarm frequency at beta.
struct AttackerState {
  long steps = 0;
  long alarms = 0;
  long forced_alarms = 0;
};

/// Attack vector delta(k). Only targeted sensors are modified; the shaped
/// residual y - y_hat + delta keeps z(k) at (1 - eps)^2 tau on ordinary steps
/// and alarm_scale^2 tau on mimicked-alarm steps.
VectorXd synthesize_stealthy_delta(const AttackPlan& plan, AttackerState& state, long k,
                                   const VectorXd& y, const VectorXd& y_hat,
                                   const MatrixXd& sigma, double tau, NoiseSource& rng);

/// One noisy plant step.
struct PlantStep {
  VectorXd x_next;
  VectorXd y;
};

/// x+ = A x + B u + w, y = C x + v, with w and v drawn from rng (v first).
PlantStep step_plant(const LtiModel& model, const VectorXd& x, const VectorXd& u, NoiseSource& rng);

struct StepRecord {
  long k = 0;
  VectorXd x, u, y, y_bar, delta, x_hat, y_hat;
  double z = 0.0;
  bool alarm = false;
};

struct SimTrace {
  std::uint64_t seed = 0;
  std::string model_id;
  std::vector<StepRecord> records;
};

/// Stepwise closed loop. Each call to step() produces the record for the
/// current k and advances plant, estimator and controller to k + 1.
class ClosedLoop {
 public:
  ClosedLoop(const LtiModel& model, const Controller& ctrl, const EstimatorConfig& est,
             const DetectorConfig& det, AttackPlan plan, std::uint64_t seed,
             VectorXd x0 = {}, VectorXd x_hat0 = {});

  StepRecord step();

  long k() const { return k_; }
  const VectorXd& x() const { return x_; }
  const VectorXd& x_hat() const { return x_hat_; }
  const ControllerState& controller_state() const { return ctrl_state_; }

 private:
  const LtiModel& model_;
  const Controller& ctrl_;
  const EstimatorConfig& est_;
  const DetectorConfig& det_;
  AttackPlan plan_;
  NoiseSource noise_;
  NoiseSource attacker_rng_;
  AttackerState attacker_;
  ControllerState ctrl_state_;
  VectorXd x_, x_hat_;
  long k_ = 0;
};

/// Records k = 0..horizon. Deterministic in `seed`.
SimTrace run_closed_loop(const LtiModel& model, const Controller& ctrl, const EstimatorConfig& est,
                         const DetectorConfig& det, const AttackPlan& plan, long horizon,
                         std::uint64_t seed, const VectorXd& x0 = {}, const VectorXd& x_hat0 = {});

}  // namespace reachmon
