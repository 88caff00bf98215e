#pragma once

// Seeded generators for property tests.

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace testgen {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double normal() { return normal_(eng_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * unit_(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }

  VectorXd normal_vector(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  RowVectorXd direction(Eigen::Index n) {
    VectorXd v = normal_vector(n);
    return (v / v.norm()).transpose();
  }

  /// SPD with eigenvalues in [lo, hi] and a random orientation.
  MatrixXd spd(Eigen::Index n, double lo = 0.2, double hi = 5.0) {
    MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal();
    const Eigen::HouseholderQR<MatrixXd> qr(g);
    const MatrixXd q = qr.householderQ();
    VectorXd ev(n);
    for (Eigen::Index i = 0; i < n; ++i) ev(i) = uniform(lo, hi);
    MatrixXd s = q * ev.asDiagonal() * q.transpose();
    return (s + s.transpose()) / 2.0;
  }

  /// Uniform point in the unit ball of R^n.
  VectorXd in_ball(Eigen::Index n) {
    VectorXd d = normal_vector(n);
    return d / d.norm() * std::pow(uniform(), 1.0 / static_cast<double>(n));
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace testgen
