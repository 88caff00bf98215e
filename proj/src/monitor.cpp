#include "reachmon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reachmon {

void MonitorConfig::validate() const {
  if (K < 0) throw ValidationError("MonitorConfig: K must be >= 0");
  if (cert.n() != model.n()) throw DimensionError("MonitorConfig: certificate order differs from the model");
  if (!unsafe.empty() && unsafe.dim() != model.n()) {
    throw DimensionError("MonitorConfig: unsafe set dimension differs from the model");
  }
  ctrl.validate(model);
}

VectorXd predict_control_flow(const LtiModel& model, const Controller& ctrl, const VectorXd& x_hat,
                              ControllerState& state, long k) {
  require_size<double>(x_hat, model.n(), "predict_control_flow x_hat");
  const VectorXd y_hat = model.C() * x_hat;
  const VectorXd u = control_law(ctrl, state, y_hat, k);
  return model.A() * x_hat + model.B() * u;
}

SafetyMonitor::SafetyMonitor(MonitorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const MatrixXd& pi = cfg_.cert.Pi.matrix();
  for (const HalfSpaced& h : cfg_.unsafe.halfspaces()) {
    widths_.push_back(support_width(pi, h.normal()));
    norms_.push_back(h.normal().norm());
  }
}

MonitorVerdict SafetyMonitor::check(const VectorXd& x_hat, const ControllerState& state, long k,
                                    double rate) const {
  require_size<double>(x_hat, cfg_.model.n(), "check_safety x_hat");
  MonitorVerdict v;
  const BaselineMetrics base = baseline_metrics(x_hat, cfg_.unsafe, rate);
  v.baseline_du = base.d_u;
  v.baseline_tu = base.t_u;

  const auto& hs = cfg_.unsafe.halfspaces();
  if (auto inside = cfg_.unsafe.first_containing(x_hat)) {
    v.safe = false;
    v.center_unsafe = true;
    v.k_f = 0;
    v.violated_constraint = *inside;
    v.tc_seconds = 0.0;
    v.impact = impact_metric(cfg_.cert, x_hat, cfg_.unsafe);
    v.per_step_min_distance.push_back((hs[*inside].offset() - hs[*inside].normal().dot(x_hat) - widths_[*inside]) /
                                      norms_[*inside]);
    return v;
  }

  VectorXd x = x_hat;
  ControllerState cs = state;
  v.per_step_min_distance.reserve(static_cast<std::size_t>(cfg_.K) + 1);
  for (long l = 0; l <= cfg_.K; ++l) {
    if (l > 0) x = predict_control_flow(cfg_.model, cfg_.ctrl, x, cs, k + l - 1);
    double min_d = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      // Signed clearance to the unsafe side; negative once the predicted
      // center itself has crossed the boundary.
      const double d = (hs[i].offset() - hs[i].normal().dot(x) - widths_[i]) / norms_[i];
      min_d = std::min(min_d, d);
      if (!hit && d <= 0.0) hit = i;
    }
    v.per_step_min_distance.push_back(min_d);
    if (hit && v.safe) {
      v.safe = false;
      v.k_f = l;
      v.violated_constraint = hit;
      v.tc_seconds = time_to_unsafe(l, cfg_.model.dt());
      v.impact = impact_metric(cfg_.cert, x, cfg_.unsafe);
      if (cfg_.early_exit) break;
    }
  }
  return v;
}

MonitorVerdict check_safety(const MonitorConfig& cfg, const VectorXd& x_hat, const ControllerState& state,
                            long k, double rate) {
  return SafetyMonitor(cfg).check(x_hat, state, k, rate);
}

double impact_metric(const ReachCertificate& cert, const VectorXd& x_hat, const UnsafeSetd& unsafe) {
  const Ellipsoidd e = instantiate_reach_set(cert, x_hat);
  double best = 0.0;
  for (const HalfSpaced& h : unsafe.halfspaces()) best = std::max(best, cap_volume_ratio(e, h));
  return std::clamp(best, 0.0, 1.0);
}

double time_to_unsafe(long offset, double dt) {
  if (offset < 0) throw DomainError("time_to_unsafe: offset must be >= 0");
  return static_cast<double>(offset) * dt;
}

BaselineMetrics baseline_metrics(const VectorXd& x_hat, const UnsafeSetd& unsafe, double rate) {
  BaselineMetrics out;
  out.d_u = std::numeric_limits<double>::infinity();
  for (const HalfSpaced& h : unsafe.halfspaces()) {
    out.d_u = std::min(out.d_u, std::max(0.0, (h.offset() - h.normal().dot(x_hat)) / h.normal().norm()));
  }
  if (rate >= 1e-12) out.t_u = out.d_u / rate;
  return out;
}

TrailingRate::TrailingRate(double dt, std::size_t window) : dt_(dt), window_(window) {
  if (!(dt > 0.0)) throw DomainError("TrailingRate: dt must be positive");
  if (window == 0) throw DomainError("TrailingRate: window must be >= 1");
}

void TrailingRate::push(const VectorXd& x_hat) {
  if (last_) {
    const double step = (x_hat - *last_).norm() / dt_;
    steps_.push_back(step);
    sum_ += step;
    if (steps_.size() > window_) {
      sum_ -= steps_.front();
      steps_.pop_front();
    }
  }
  last_ = x_hat;
}

double TrailingRate::rate() const {
  return steps_.empty() ? 0.0 : sum_ / static_cast<double>(steps_.size());
}

}  // namespace reachmon
