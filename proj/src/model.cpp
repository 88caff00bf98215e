#include "reachmon/model.hpp"

#include <cmath>

namespace reachmon {

LtiModel::LtiModel(MatrixXd a, MatrixXd b, MatrixXd c, MatrixXd sigma1, MatrixXd sigma2,
                   double dt, std::string name)
    : a_(std::move(a)),
      b_(std::move(b)),
      c_(std::move(c)),
      sigma1_(std::move(sigma1)),
      sigma2_(std::move(sigma2)),
      dt_(dt),
      name_(std::move(name)) {
  const Eigen::Index n = a_.rows();
  if (n == 0) throw DimensionError("LtiModel: A must be non-empty");
  require_square<double>(a_, n, "LtiModel A");
  if (b_.rows() != n) throw DimensionError("LtiModel: B must have as many rows as A");
  if (c_.cols() != n) throw DimensionError("LtiModel: C must have as many columns as A");
  require_square<double>(sigma1_, n, "LtiModel Sigma1");
  require_square<double>(sigma2_, c_.rows(), "LtiModel Sigma2");
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw DomainError("LtiModel: dt must be positive");
  if (!is_positive_semidefinite(sigma1_)) throw DomainError("LtiModel: Sigma1 is not symmetric PSD");
  if (!is_positive_semidefinite(sigma2_)) throw DomainError("LtiModel: Sigma2 is not symmetric PSD");
  w_factor_ = covariance_factor(sigma1_);
  v_factor_ = covariance_factor(sigma2_);
}

}  // namespace reachmon
