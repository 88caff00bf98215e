#pragma once

#include <string>

#include "reachmon/linalg.hpp"

namespace reachmon {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Discrete-time LTI plant
///   x(k+1) = A x(k) + B u(k) + w(k),  w ~ N(0, Sigma1)
///   y(k)   = C x(k) + v(k),           v ~ N(0, Sigma2)
/// sampled every `dt` seconds. Validated on construction; the noise factors
/// are computed once.
class LtiModel {
 public:
  LtiModel(MatrixXd a, MatrixXd b, MatrixXd c, MatrixXd sigma1, MatrixXd sigma2, double dt,
           std::string name = {});

  const MatrixXd& A() const { return a_; }
  const MatrixXd& B() const { return b_; }
  const MatrixXd& C() const { return c_; }
  const MatrixXd& sigma1() const { return sigma1_; }
  const MatrixXd& sigma2() const { return sigma2_; }
  double dt() const { return dt_; }
  const std::string& name() const { return name_; }

  Eigen::Index n() const { return a_.rows(); }
  Eigen::Index m() const { return c_.rows(); }
  Eigen::Index l() const { return b_.cols(); }

  /// F with F F^T = Sigma1 (resp. Sigma2).
  const MatrixXd& process_noise_factor() const { return w_factor_; }
  const MatrixXd& measurement_noise_factor() const { return v_factor_; }

 private:
  MatrixXd a_, b_, c_, sigma1_, sigma2_;
  double dt_;
  std::string name_;
  MatrixXd w_factor_, v_factor_;
};

}  // namespace reachmon
