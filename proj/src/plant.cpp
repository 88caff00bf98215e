#include "reachmon/plant.hpp"

#include <algorithm>
#include <cmath>

namespace reachmon {

namespace {

VectorXd measure(const LtiModel& model, const VectorXd& x, NoiseSource& rng) {
  return model.C() * x + rng.gaussian(model.measurement_noise_factor());
}

VectorXd advance(const LtiModel& model, const VectorXd& x, const VectorXd& u, NoiseSource& rng) {
  return model.A() * x + model.B() * u + rng.gaussian(model.process_noise_factor());
}

std::vector<int> complement(const std::vector<int>& idx, Eigen::Index m) {
  std::vector<int> out;
  for (int i = 0; i < m; ++i) {
    if (std::find(idx.begin(), idx.end(), i) == idx.end()) out.push_back(i);
  }
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

ReferenceSchedule::ReferenceSchedule(VectorXd constant) : steps_{0}, values_{std::move(constant)} {}

ReferenceSchedule::ReferenceSchedule(std::vector<long> steps, std::vector<VectorXd> values)
    : steps_(std::move(steps)), values_(std::move(values)) {
  if (steps_.size() != values_.size() || steps_.empty()) {
    throw ValidationError("ReferenceSchedule: need matching, non-empty steps and values");
  }
  for (std::size_t i = 1; i < steps_.size(); ++i) {
    if (steps_[i] <= steps_[i - 1]) throw ValidationError("ReferenceSchedule: steps must increase");
    if (values_[i].size() != values_[0].size()) {
      throw DimensionError("ReferenceSchedule: values have mixed lengths");
    }
  }
}

VectorXd ReferenceSchedule::at(long k) const {
  if (values_.empty()) return {};
  if (k <= steps_.front()) return values_.front();
  if (k >= steps_.back()) return values_.back();
  const auto hi = std::upper_bound(steps_.begin(), steps_.end(), k) - steps_.begin();
  const auto lo = hi - 1;
  const double t = static_cast<double>(k - steps_[lo]) / static_cast<double>(steps_[hi] - steps_[lo]);
  return (1.0 - t) * values_[lo] + t * values_[hi];
}

void Controller::validate(const LtiModel& model) const {
  require_shape<double>(gain, model.l(), model.m(), "Controller gain");
  if (reference.size() != model.m()) throw DimensionError("Controller: reference must have length m");
  if (integral_gain) require_shape<double>(*integral_gain, model.l(), model.m(), "Controller integral gain");
  if (!(dt > 0.0)) throw DomainError("Controller: dt must be positive");
}

ControllerState initial_controller_state(const Controller& ctrl) {
  ControllerState state;
  if (ctrl.integral_gain) state.integral = VectorXd::Zero(ctrl.integral_gain->cols());
  return state;
}

VectorXd control_law(const Controller& ctrl, ControllerState& state, const VectorXd& y_bar, long k) {
  const VectorXd error = y_bar - ctrl.reference.at(k);
  VectorXd u = ctrl.gain * error;
  if (ctrl.integral_gain) {
    if (state.integral.size() != error.size()) state.integral = VectorXd::Zero(error.size());
    u += *ctrl.integral_gain * state.integral;
    state.integral += ctrl.dt * error;
  }
  return u;
}

void AttackPlan::validate(Eigen::Index m) const {
  if (start < 0) throw ValidationError("AttackPlan: start must be >= 0");
  for (int s : sensors) {
    if (s < 0 || s >= m) throw ValidationError("AttackPlan: sensor index " + std::to_string(s) + " out of range");
  }
  if (!std::isfinite(rate) || !std::isfinite(epsilon) || !std::isfinite(alarm_scale)) {
    throw ValidationError("AttackPlan: rates must be finite");
  }
  if (!(alarm_mimic_rate >= 0.0 && alarm_mimic_rate < 1.0)) {
    throw ValidationError("AttackPlan: alarm_mimic_rate must lie in [0, 1)");
  }
  if (direction.size() != 0 && direction.size() != m) {
    throw DimensionError("AttackPlan: direction must have length m");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0) || !(alarm_scale > 1.0)) {
    throw ValidationError("AttackPlan: need 0 < epsilon < 1 and alarm_scale > 1");
  }
}

VectorXd synthesize_stealthy_delta(const AttackPlan& plan, AttackerState& state, long k,
                                   const VectorXd& y, const VectorXd& y_hat,
                                   const MatrixXd& sigma, double tau, NoiseSource& rng) {
  const Eigen::Index m = y.size();
  VectorXd delta = VectorXd::Zero(m);
  if (!plan.active(k)) return delta;

  const std::vector<int>& tgt = plan.sensors;
  const std::vector<int> rest = complement(tgt, m);
  const Eigen::Index nt = static_cast<Eigen::Index>(tgt.size());

  VectorXd dir(nt);
  for (Eigen::Index i = 0; i < nt; ++i) dir(i) = plan.direction.size() ? plan.direction(tgt[i]) : 1.0;

  const VectorXd residual = y - y_hat;
  const VectorXd r_t = residual(tgt);
  const double elapsed = static_cast<double>(k - plan.start);

  if (!plan.stealthy) {
    delta(tgt) = plan.rate * elapsed * dir;
    return delta;
  }

  // Condition the residual quadratic form on the untouched channels:
  //   z = r_N^T S_NN^{-1} r_N + (rbar_T - mu)^T S^{-1} (rbar_T - mu).
  MatrixXd s_tt = sigma(tgt, tgt);
  VectorXd mu = VectorXd::Zero(nt);
  double z_rest = 0.0;
  if (!rest.empty()) {
    const MatrixXd s_nn = sigma(rest, rest);
    const MatrixXd s_tn = sigma(tgt, rest);
    const Eigen::LLT<MatrixXd> nn(s_nn);
    const VectorXd r_n = residual(rest);
    z_rest = r_n.dot(nn.solve(r_n));
    mu = s_tn * nn.solve(r_n);
    s_tt -= s_tn * nn.solve(MatrixXd(s_tn.transpose()));
  }
  const Eigen::LLT<MatrixXd> cond(s_tt);

  // Alarm bookkeeping: forced alarms (untouched channels alone exceed tau)
  // count toward the budget, so mimicked ones are drawn at the remaining rate.
  const bool forced = z_rest > tau;
  const double forced_rate = static_cast<double>(state.forced_alarms) / static_cast<double>(state.steps + 1);
  const double beta = plan.alarm_mimic_rate;
  const double mimic_rate = forced_rate < 1.0 ? std::clamp((beta - forced_rate) / (1.0 - forced_rate), 0.0, 1.0) : 0.0;
  const bool mimic = rng.uniform() < mimic_rate;
  const bool alarm = forced || mimic;
  ++state.steps;
  if (forced) ++state.forced_alarms;
  if (alarm) ++state.alarms;

  const double nominal = (1.0 - plan.epsilon) * (1.0 - plan.epsilon) * tau;
  const double target = alarm ? plan.alarm_scale * plan.alarm_scale * tau : nominal;
  const double budget = std::max(0.0, target - z_rest);

  VectorXd rbar_t;
  if (plan.strategy == AttackStrategy::ResidualSteering) {
    const double norm = dir.norm();
    const VectorXd unit = norm > 0.0 ? VectorXd(dir / norm) : VectorXd::Constant(nt, 1.0 / std::sqrt(double(nt)));
    rbar_t = mu + std::sqrt(budget) * (sqrtm_psd(s_tt) * unit);
  } else {
    const VectorXd candidate = r_t + plan.rate * elapsed * dir;
    VectorXd dev = candidate - mu;
    double q = dev.dot(cond.solve(dev));
    if (q <= 0.0) {
      dev = sqrtm_psd(s_tt) * dir;
      q = dev.dot(cond.solve(dev));
    }
    if (!alarm && q <= budget) {
      rbar_t = candidate;
    } else {
      rbar_t = mu + (q > 0.0 ? std::sqrt(budget / q) : 0.0) * dev;
    }
  }
  delta(tgt) = rbar_t - r_t;
  return delta;
}

PlantStep step_plant(const LtiModel& model, const VectorXd& x, const VectorXd& u, NoiseSource& rng) {
  require_size<double>(x, model.n(), "step_plant x");
  require_size<double>(u, model.l(), "step_plant u");
  PlantStep out;
  out.y = measure(model, x, rng);
  out.x_next = advance(model, x, u, rng);
  return out;
}

ClosedLoop::ClosedLoop(const LtiModel& model, const Controller& ctrl, const EstimatorConfig& est,
                       const DetectorConfig& det, AttackPlan plan, std::uint64_t seed, VectorXd x0,
                       VectorXd x_hat0)
    : model_(model),
      ctrl_(ctrl),
      est_(est),
      det_(det),
      plan_(std::move(plan)),
      noise_(derive_seed(seed, 0)),
      attacker_rng_(derive_seed(seed, 1)),
      ctrl_state_(initial_controller_state(ctrl)),
      x_(x0.size() ? std::move(x0) : VectorXd::Zero(model.n())),
      x_hat_(x_hat0.size() ? std::move(x_hat0) : x_) {
  ctrl_.validate(model_);
  plan_.validate(model_.m());
  require_size<double>(x_, model_.n(), "ClosedLoop x0");
  require_size<double>(x_hat_, model_.n(), "ClosedLoop x_hat0");
  require_shape<double>(est_.L, model_.n(), model_.m(), "ClosedLoop estimator gain");
}

StepRecord ClosedLoop::step() {
  StepRecord rec;
  rec.k = k_;
  rec.x = x_;
  rec.x_hat = x_hat_;
  rec.y = measure(model_, x_, noise_);
  rec.y_hat = model_.C() * x_hat_;
  rec.delta = synthesize_stealthy_delta(plan_, attacker_, k_, rec.y, rec.y_hat, est_.sigma_r, det_.tau,
                                        attacker_rng_);
  rec.y_bar = rec.y + rec.delta;
  const DetectorOutput d = detector_step(det_, est_, rec.y_bar, rec.y_hat);
  rec.z = d.z;
  rec.alarm = d.alarm;
  rec.u = control_law(ctrl_, ctrl_state_, rec.y_bar, k_);

  x_ = advance(model_, x_, rec.u, noise_);
  x_hat_ = estimator_step(est_, model_, x_hat_, rec.u, rec.y_bar).x_hat;
  ++k_;
  return rec;
}

SimTrace run_closed_loop(const LtiModel& model, const Controller& ctrl, const EstimatorConfig& est,
                         const DetectorConfig& det, const AttackPlan& plan, long horizon,
                         std::uint64_t seed, const VectorXd& x0, const VectorXd& x_hat0) {
  if (horizon < 0) throw DomainError("run_closed_loop: horizon must be >= 0");
  ClosedLoop loop(model, ctrl, est, det, plan, seed, x0, x_hat0);
  SimTrace trace;
  trace.seed = seed;
  trace.model_id = model.name();
  trace.records.reserve(static_cast<std::size_t>(horizon) + 1);
  for (long k = 0; k <= horizon; ++k) trace.records.push_back(loop.step());
  return trace;
}

}  // namespace reachmon
