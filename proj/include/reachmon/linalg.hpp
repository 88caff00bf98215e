#pragma once

// Small dense helpers shared by every module. Everything here is templated on
// the scalar and works on any Eigen dense expression.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "reachmon/errors.hpp"

namespace reachmon {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kDefiniteTol = 1e-10;

template <typename Derived>
typename Derived::Scalar max_asymmetry(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<typename Derived::Scalar>::infinity();
  if (m.size() == 0) return 0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m, double tol = kSymmetryTol) {
  return max_asymmetry(m) <= tol;
}

/// Smallest eigenvalue relative to the largest must exceed `tol`.
template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& m, double tol = kDefiniteTol) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!is_symmetric(m)) return false;
  Matrix<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return false;
  const Scalar lo = es.eigenvalues()(0);
  const Scalar hi = es.eigenvalues()(sym.rows() - 1);
  return hi > 0 && lo > tol * hi;
}

/// Eigenvalues may dip to -tol*max(1, |largest|) and still count as PSD.
template <typename Derived>
bool is_positive_semidefinite(const Eigen::MatrixBase<Derived>& m, double tol = kDefiniteTol) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if (!is_symmetric(m)) return false;
  Matrix<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym, Eigen::EigenvaluesOnly);
  const Scalar scale = std::max<Scalar>(Scalar(1), es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues()(0) >= -tol * scale;
}

/// Symmetric PSD square root through the eigendecomposition; eigenvalues
/// below `clip` are treated as zero.
template <typename Derived>
Matrix<typename Derived::Scalar> sqrtm_psd(const Eigen::MatrixBase<Derived>& m,
                                           double clip = 1e-14) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sym);
  Vector<Scalar> ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > clip ? std::sqrt(ev(i)) : Scalar(0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Factor F with F*F^T = m for a PSD m. Uses Cholesky when it succeeds and
/// falls back to the clipped symmetric root for singular covariances.
template <typename Derived>
Matrix<typename Derived::Scalar> covariance_factor(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> sym = (m + m.transpose()) / Scalar(2);
  if (sym.size() == 0) return sym;
  Eigen::LLT<Matrix<Scalar>> llt(sym);
  if (llt.info() == Eigen::Success && is_positive_definite(sym, 1e-12)) {
    return llt.matrixL();
  }
  return sqrtm_psd(sym);
}

template <typename Derived>
typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Scalar(0);
  Eigen::EigenSolver<Matrix<Scalar>> es(m.eval(), false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// log det of a symmetric positive-definite matrix, NaN if not PD.
template <typename Derived>
typename Derived::Scalar log_det_spd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::LLT<Matrix<Scalar>> llt(m.eval());
  if (llt.info() != Eigen::Success) return std::numeric_limits<Scalar>::quiet_NaN();
  return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
}

/// Solves X = F X F^T + Q for Schur-stable F by doubling; throws DomainError
/// when the iteration does not settle (F not stable).
template <typename DerivedF, typename DerivedQ>
Matrix<typename DerivedF::Scalar> solve_stein(const Eigen::MatrixBase<DerivedF>& f,
                                              const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedF::Scalar;
  Matrix<Scalar> a = f;
  Matrix<Scalar> x = q;
  for (int it = 0; it < 200; ++it) {
    Matrix<Scalar> next = x + a * x * a.transpose();
    const Scalar change = (next - x).norm();
    x = std::move(next);
    a = (a * a).eval();
    if (!std::isfinite(change)) break;
    if (change <= Scalar(1e-15) * std::max<Scalar>(Scalar(1), x.norm()) && a.norm() < Scalar(1e-12)) {
      return (x + x.transpose()) / Scalar(2);
    }
  }
  throw DomainError("solve_stein: iteration matrix is not Schur stable");
}

template <typename Scalar>
void require_square(const Matrix<Scalar>& m, Eigen::Index n, const std::string& what) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionError(what + ": expected " + std::to_string(n) + "x" + std::to_string(n) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

template <typename Scalar>
void require_shape(const Matrix<Scalar>& m, Eigen::Index r, Eigen::Index c, const std::string& what) {
  if (m.rows() != r || m.cols() != c) {
    throw DimensionError(what + ": expected " + std::to_string(r) + "x" + std::to_string(c) +
                         ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

template <typename Scalar>
void require_size(const Vector<Scalar>& v, Eigen::Index n, const std::string& what) {
  if (v.size() != n) {
    throw DimensionError(what + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
  }
}

}  // namespace reachmon
