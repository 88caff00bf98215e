#pragma once

#include <span>

#include "reachmon/model.hpp"

namespace reachmon {

/// Steady-state one-step predictor and its residual statistics.
struct EstimatorConfig {
  MatrixXd L;           // n x m predictor gain
  MatrixXd sigma_r;     // m x m residual covariance
  MatrixXd steady_cov;  // n x n steady-state prior error covariance

  /// Checks sigma_r SPD and rho(A - L C) < 1.
  void validate(const LtiModel& model) const;
};

struct DetectorConfig {
  double tau = 0.0;
  double beta = 0.05;
  int dof = 1;
};

struct EstimatorOutput {
  VectorXd x_hat;
  VectorXd y_hat;
};

struct DetectorOutput {
  double z = 0.0;
  bool alarm = false;
};

/// Iterates the discrete Riccati recursion for the predictor-form filter to
/// its fixed point (Frobenius change below 1e-12, relative for large
/// covariances; at most 1e6 iterations).
EstimatorConfig calibrate_estimator(const LtiModel& model);

/// x_hat(k) = A x_hat(k-1) + B u(k-1) + L (y_bar(k-1) - C x_hat(k-1));  y_hat(k) = C x_hat(k).
EstimatorOutput estimator_step(const EstimatorConfig& cfg, const LtiModel& model,
                               const VectorXd& x_hat, const VectorXd& u, const VectorXd& y_bar);

/// r = y_bar - y_hat, z = r^T Sigma^{-1} r, alarm when z > tau.
DetectorOutput detector_step(const DetectorConfig& det, const EstimatorConfig& est,
                             const VectorXd& y_bar, const VectorXd& y_hat);

/// tau with P[chi^2(dof) <= tau] = 1 - beta.
double set_threshold(double beta, int dof);

DetectorConfig make_detector(double beta, int dof);

/// Sample covariance of residual vectors (rows of `residuals`); for
/// validating the analytic sigma_r only.
MatrixXd empirical_residual_covariance(const MatrixXd& residuals);

}  // namespace reachmon
