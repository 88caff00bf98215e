#include "reachmon/estimation.hpp"

#include <cmath>

#include "reachmon/stats.hpp"

namespace reachmon {

void EstimatorConfig::validate(const LtiModel& model) const {
  require_shape<double>(L, model.n(), model.m(), "EstimatorConfig L");
  require_square<double>(sigma_r, model.m(), "EstimatorConfig sigma_r");
  if (!is_positive_definite(sigma_r)) {
    throw CalibrationError("EstimatorConfig: residual covariance is not positive definite");
  }
  const double rho = spectral_radius(MatrixXd(model.A() - L * model.C()));
  if (!(rho < 1.0)) {
    throw CalibrationError("EstimatorConfig: A - L C has spectral radius " + std::to_string(rho));
  }
}

EstimatorConfig calibrate_estimator(const LtiModel& model) {
  const MatrixXd& a = model.A();
  const MatrixXd& c = model.C();
  MatrixXd p = model.sigma1();
  constexpr long kMaxIterations = 1'000'000;
  bool converged = false;
  for (long it = 0; it < kMaxIterations; ++it) {
    const MatrixXd s = c * p * c.transpose() + model.sigma2();
    const MatrixXd gain = a * p * c.transpose() * s.ldlt().solve(MatrixXd::Identity(s.rows(), s.cols()));
    MatrixXd next = a * p * a.transpose() + model.sigma1() - gain * c * p * a.transpose();
    next = (next + next.transpose()) / 2.0;
    const double change = (next - p).norm();
    p = std::move(next);
    if (!p.allFinite()) break;
    if (change < 1e-12 * std::max(1.0, p.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw CalibrationError("calibrate_estimator: Riccati iteration did not converge (undetectable model?)");
  }
  EstimatorConfig cfg;
  cfg.steady_cov = p;
  cfg.sigma_r = c * p * c.transpose() + model.sigma2();
  cfg.sigma_r = (cfg.sigma_r + cfg.sigma_r.transpose()) / 2.0;
  cfg.L = a * p * c.transpose() * cfg.sigma_r.ldlt().solve(MatrixXd::Identity(model.m(), model.m()));
  cfg.validate(model);
  return cfg;
}

EstimatorOutput estimator_step(const EstimatorConfig& cfg, const LtiModel& model,
                               const VectorXd& x_hat, const VectorXd& u, const VectorXd& y_bar) {
  require_size<double>(x_hat, model.n(), "estimator_step x_hat");
  require_size<double>(u, model.l(), "estimator_step u");
  require_size<double>(y_bar, model.m(), "estimator_step y_bar");
  EstimatorOutput out;
  out.x_hat = model.A() * x_hat + model.B() * u + cfg.L * (y_bar - model.C() * x_hat);
  out.y_hat = model.C() * out.x_hat;
  return out;
}

DetectorOutput detector_step(const DetectorConfig& det, const EstimatorConfig& est,
                             const VectorXd& y_bar, const VectorXd& y_hat) {
  const VectorXd r = y_bar - y_hat;
  DetectorOutput out;
  out.z = r.dot(est.sigma_r.llt().solve(r));
  out.alarm = out.z > det.tau;
  return out;
}

double set_threshold(double beta, int dof) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("set_threshold: beta must lie in (0, 1)");
  if (dof < 1) throw DomainError("set_threshold: dof must be >= 1");
  return stats::chi_squared_quantile(1.0 - beta, dof);
}

DetectorConfig make_detector(double beta, int dof) {
  return DetectorConfig{set_threshold(beta, dof), beta, dof};
}

MatrixXd empirical_residual_covariance(const MatrixXd& residuals) {
  if (residuals.rows() < 2) throw DomainError("empirical_residual_covariance: need >= 2 samples");
  const RowVectorXd mean = residuals.colwise().mean();
  const MatrixXd centered = residuals.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(residuals.rows() - 1);
}

}  // namespace reachmon
