#pragma once

// Ellipsoids, half-spaces and the handful of ellipsoidal-calculus operations
// the monitor needs. Header-only and templated on the scalar type.
//
// Conventions:
//   Ellipsoid(center q, shape Pi)  = { x : (x - q)^T Pi^{-1} (x - q) <= 1 }
//   HalfSpace(normal c, offset b)  = { x : c x >= b }   (the unsafe side)

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <variant>
#include <vector>

#include "reachmon/linalg.hpp"

namespace reachmon {

/// Symmetric positive-definite shape matrix, validated once and shared by
/// reference between every ellipsoid built from it.
template <typename Scalar = double>
class ShapeMatrix {
 public:
  using MatrixType = Matrix<Scalar>;

  explicit ShapeMatrix(MatrixType m) {
    if (m.rows() != m.cols()) throw DimensionError("ShapeMatrix: shape must be square");
    if (max_asymmetry(m) > kSymmetryTol) throw DomainError("ShapeMatrix: shape is not symmetric");
    if (!is_positive_definite(m)) throw DomainError("ShapeMatrix: shape is not positive definite");
    data_ = std::make_shared<const MatrixType>(std::move(m));
  }

  const MatrixType& matrix() const { return *data_; }
  Eigen::Index dim() const { return data_->rows(); }
  bool shares_storage_with(const ShapeMatrix& other) const { return data_ == other.data_; }

 private:
  std::shared_ptr<const MatrixType> data_;
};

template <typename Scalar = double>
class Ellipsoid {
 public:
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;

  Ellipsoid(VectorType center, MatrixType shape)
      : Ellipsoid(std::move(center), ShapeMatrix<Scalar>(std::move(shape))) {}

  /// Constant time: the shape was validated when the handle was created.
  Ellipsoid(VectorType center, ShapeMatrix<Scalar> shape)
      : center_(std::move(center)), shape_(std::move(shape)) {
    if (center_.size() != shape_.dim()) {
      throw DimensionError("Ellipsoid: center has length " + std::to_string(center_.size()) +
                           " but shape has order " + std::to_string(shape_.dim()));
    }
  }

  static Ellipsoid unit_ball(Eigen::Index n) {
    return Ellipsoid(VectorType::Zero(n), MatrixType::Identity(n, n));
  }

  const VectorType& center() const { return center_; }
  const MatrixType& shape() const { return shape_.matrix(); }
  const ShapeMatrix<Scalar>& shape_handle() const { return shape_; }
  Eigen::Index dim() const { return center_.size(); }

  /// (x - q)^T Pi^{-1} (x - q); <= 1 means inside.
  Scalar normalized_distance(const VectorType& x) const {
    require_size<Scalar>(x, dim(), "Ellipsoid::normalized_distance");
    const VectorType d = x - center_;
    return d.dot(shape().ldlt().solve(d));
  }

  bool contains(const VectorType& x, Scalar tol = Scalar(0)) const {
    return normalized_distance(x) <= Scalar(1) + tol;
  }

 private:
  VectorType center_;
  ShapeMatrix<Scalar> shape_;
};

template <typename Scalar = double>
class HalfSpace {
 public:
  using RowType = RowVector<Scalar>;

  HalfSpace(RowType normal, Scalar offset) : normal_(std::move(normal)), offset_(offset) {
    if (!(normal_.norm() > Scalar(1e-12))) throw DomainError("HalfSpace: normal must be nonzero");
    if (!std::isfinite(offset_) || !normal_.allFinite()) throw DomainError("HalfSpace: non-finite data");
  }

  const RowType& normal() const { return normal_; }
  Scalar offset() const { return offset_; }
  Eigen::Index dim() const { return normal_.size(); }

  bool contains(const Vector<Scalar>& x) const { return normal_.dot(x) >= offset_; }

 private:
  RowType normal_;
  Scalar offset_;
};

/// Union of half-spaces. The order is significant: violations are reported
/// against the first matching entry.
template <typename Scalar = double>
class UnsafeSet {
 public:
  UnsafeSet() = default;
  explicit UnsafeSet(std::vector<HalfSpace<Scalar>> halfspaces, std::vector<std::string> names = {})
      : halfspaces_(std::move(halfspaces)), names_(std::move(names)) {
    for (std::size_t i = 1; i < halfspaces_.size(); ++i) {
      if (halfspaces_[i].dim() != halfspaces_[0].dim()) {
        throw DimensionError("UnsafeSet: half-space normals have mixed dimensions");
      }
    }
    if (!names_.empty() && names_.size() != halfspaces_.size()) {
      throw ValidationError("UnsafeSet: one name per half-space required");
    }
    if (names_.empty()) {
      for (std::size_t i = 0; i < halfspaces_.size(); ++i) names_.push_back("h" + std::to_string(i));
    }
  }

  bool empty() const { return halfspaces_.empty(); }
  std::size_t size() const { return halfspaces_.size(); }
  /// 0 for the empty set, which is compatible with every dimension.
  Eigen::Index dim() const { return halfspaces_.empty() ? 0 : halfspaces_.front().dim(); }
  const HalfSpace<Scalar>& operator[](std::size_t i) const { return halfspaces_[i]; }
  const std::vector<HalfSpace<Scalar>>& halfspaces() const { return halfspaces_; }
  const std::vector<std::string>& names() const { return names_; }

  /// First half-space containing x, if any.
  std::optional<std::size_t> first_containing(const Vector<Scalar>& x) const {
    for (std::size_t i = 0; i < halfspaces_.size(); ++i) {
      if (halfspaces_[i].contains(x)) return i;
    }
    return std::nullopt;
  }

 private:
  std::vector<HalfSpace<Scalar>> halfspaces_;
  std::vector<std::string> names_;
};

namespace detail {
template <typename Scalar>
void check_dims(const Ellipsoid<Scalar>& e, const HalfSpace<Scalar>& h, const char* what) {
  if (e.dim() != h.dim()) {
    throw DimensionError(std::string(what) + ": ellipsoid has dimension " + std::to_string(e.dim()) +
                         ", half-space has " + std::to_string(h.dim()));
  }
}
}  // namespace detail

/// Support half-width of the ellipsoid along c: sqrt(c Pi c^T).
template <typename Scalar>
Scalar support_width(const Matrix<Scalar>& shape, const RowVector<Scalar>& c) {
  return std::sqrt(std::max(Scalar(0), c.dot(shape * c.transpose())));
}

/// Signed clearance between the ellipsoid and the boundary hyperplane of h,
/// (|b - c q| - sqrt(c Pi c^T)) / ||c||. Non-positive iff the hyperplane
/// touches or cuts the ellipsoid.
template <typename Scalar>
Scalar distance_to_hyperplane(const Ellipsoid<Scalar>& e, const HalfSpace<Scalar>& h) {
  detail::check_dims(e, h, "distance_to_hyperplane");
  const Scalar gap = std::abs(h.offset() - h.normal().dot(e.center()));
  return (gap - support_width(e.shape(), h.normal())) / h.normal().norm();
}

/// Clearance from the ellipsoid to the unsafe side of h. Agrees with
/// distance_to_hyperplane when the center is on the safe side and becomes
/// negative when the center itself lies in h.
template <typename Scalar>
Scalar unsafe_clearance(const Ellipsoid<Scalar>& e, const HalfSpace<Scalar>& h) {
  detail::check_dims(e, h, "unsafe_clearance");
  return (h.offset() - h.normal().dot(e.center()) - support_width(e.shape(), h.normal())) /
         h.normal().norm();
}

struct IntersectionResult {
  bool intersects = false;
  std::optional<std::size_t> halfspace;
};

/// Emptiness check of e ∩ u. The center must be on the safe side of every
/// half-space; otherwise CenterUnsafeError is thrown.
template <typename Scalar>
IntersectionResult intersects_unsafe(const Ellipsoid<Scalar>& e, const UnsafeSet<Scalar>& u) {
  if (!u.empty() && u.dim() != e.dim()) {
    throw DimensionError("intersects_unsafe: unsafe set has dimension " + std::to_string(u.dim()) +
                         ", ellipsoid has " + std::to_string(e.dim()));
  }
  if (auto inside = u.first_containing(e.center())) {
    throw CenterUnsafeError("intersects_unsafe: ellipsoid center lies in half-space " +
                                std::to_string(*inside),
                            *inside);
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (distance_to_hyperplane(e, u[i]) <= Scalar(0)) return {true, i};
  }
  return {};
}

/// e lies entirely inside the half-space.
struct ContainedMarker {};
/// e and the half-space do not overlap (tangency included).
struct EmptyMarker {};

template <typename Scalar>
using CapCover = std::variant<Ellipsoid<Scalar>, ContainedMarker, EmptyMarker>;

/// Normalised offset alpha = (c q - b) / sqrt(c Pi c^T) of the half-space
/// boundary from the ellipsoid center.
template <typename Scalar>
Scalar cut_depth(const Ellipsoid<Scalar>& e, const HalfSpace<Scalar>& h) {
  detail::check_dims(e, h, "cut_depth");
  return (h.normal().dot(e.center()) - h.offset()) / support_width(e.shape(), h.normal());
}

/// Minimum-volume ellipsoid covering e ∩ h (the cap on the unsafe side).
///
/// For n >= 2 this is the deep-cut Löwner-John update with the cut oriented
/// toward {c x >= b}:
///   q'  = q + (1 + n a)/(n + 1) * Pi cbar
///   Pi' = n^2 (1 - a^2)/(n^2 - 1) * (Pi - 2 (1 + n a)/((n + 1)(1 + a)) * Pi cbar cbar^T Pi)
/// with cbar = c / sqrt(c Pi c^T) and a = -alpha. The update is only valid
/// for a >= -1/n; shallower cuts return e unchanged. For n = 1 the cap is an
/// interval and is returned exactly.
template <typename Scalar>
CapCover<Scalar> min_volume_intersection(const Ellipsoid<Scalar>& e, const HalfSpace<Scalar>& h) {
  detail::check_dims(e, h, "min_volume_intersection");
  const Scalar alpha = cut_depth(e, h);
  if (alpha >= Scalar(1)) return ContainedMarker{};
  if (alpha <= Scalar(-1)) return EmptyMarker{};

  const Eigen::Index dim = e.dim();
  if (dim == 1) {
    const Scalar c = h.normal()(0);
    const Scalar r = std::sqrt(e.shape()(0, 0));
    const Scalar q = e.center()(0);
    const Scalar bound = h.offset() / c;
    Scalar lo = q - r, hi = q + r;
    if (c > 0) lo = std::max(lo, bound);
    else hi = std::min(hi, bound);
    Vector<Scalar> center(1);
    center(0) = (lo + hi) / Scalar(2);
    Matrix<Scalar> shape(1, 1);
    shape(0, 0) = (hi - lo) * (hi - lo) / Scalar(4);
    return Ellipsoid<Scalar>(std::move(center), std::move(shape));
  }

  const Scalar n = static_cast<Scalar>(dim);
  // Shallow cut: the cap keeps so much of e that e itself is the minimum cover.
  if (alpha >= Scalar(1) / n) return e;
  const Matrix<Scalar>& pi = e.shape();
  const Vector<Scalar> pc = pi * (h.normal().transpose() / support_width(pi, h.normal()));
  const Scalar a = -alpha;  // depth of the cut measured toward the unsafe side
  Vector<Scalar> center = e.center() + (Scalar(1) + n * a) / (n + Scalar(1)) * pc;
  const Scalar scale = n * n * (Scalar(1) - a * a) / (n * n - Scalar(1));
  const Scalar gain = Scalar(2) * (Scalar(1) + n * a) / ((n + Scalar(1)) * (Scalar(1) + a));
  Matrix<Scalar> shape = scale * (pi - gain * pc * pc.transpose());
  shape = ((shape + shape.transpose()) / Scalar(2)).eval();
  return Ellipsoid<Scalar>(std::move(center), std::move(shape));
}

/// Volume of the unit n-ball, pi^{n/2} / Gamma(n/2 + 1).
template <typename Scalar = double>
Scalar unit_ball_volume(Eigen::Index n) {
  const Scalar half = static_cast<Scalar>(n) / Scalar(2);
  return std::exp(half * std::log(std::numbers::pi_v<Scalar>) - std::lgamma(half + Scalar(1)));
}

template <typename Scalar>
Scalar volume(const Ellipsoid<Scalar>& e) {
  return unit_ball_volume<Scalar>(e.dim()) * std::exp(log_det_spd(e.shape()) / Scalar(2));
}

/// det(cover)/det(e) for the cap on the unsafe side of h: 1 when e is
/// contained, 0 when the cap is empty.
template <typename Scalar>
Scalar cap_volume_ratio(const Ellipsoid<Scalar>& e, const HalfSpace<Scalar>& h) {
  const auto cover = min_volume_intersection(e, h);
  if (std::holds_alternative<ContainedMarker>(cover)) return Scalar(1);
  if (std::holds_alternative<EmptyMarker>(cover)) return Scalar(0);
  const auto& cap = std::get<Ellipsoid<Scalar>>(cover);
  const Scalar ratio = std::exp(log_det_spd(cap.shape()) - log_det_spd(e.shape()));
  return std::clamp(ratio, Scalar(0), Scalar(1));
}

using ShapeMatrixd = ShapeMatrix<double>;
using Ellipsoidd = Ellipsoid<double>;
using HalfSpaced = HalfSpace<double>;
using UnsafeSetd = UnsafeSet<double>;

}  // namespace reachmon
