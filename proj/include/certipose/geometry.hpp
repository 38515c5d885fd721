#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace certipose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered 3xN keypoint matrix; column i is keypoint i.
using Keypoints = Eigen::Matrix3Xd;

/// Tolerance used to validate rotation matrices.
inline constexpr double kRotationTolerance = 1e-9;

/**
 * @brief Ordered set of finite 3D points stored column-wise.
 *
 * A default-constructed cloud is empty; metric functions reject empty
 * clouds with std::invalid_argument.
 */
class PointCloud {
 public:
  PointCloud() = default;
  /// Throws InvariantError if any coordinate is not finite.
  explicit PointCloud(Eigen::Matrix3Xd points);
  explicit PointCloud(const std::vector<Vec3>& points);

  Eigen::Index size() const noexcept { return points_.cols(); }
  bool empty() const noexcept { return points_.cols() == 0; }

  auto operator[](Eigen::Index i) const { return points_.col(i); }
  const Eigen::Matrix3Xd& matrix() const noexcept { return points_; }

  Vec3 centroid() const;

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.points_.cols() == b.points_.cols() && a.points_ == b.points_;
  }

 private:
  Eigen::Matrix3Xd points_;
};

/// Skew-symmetric cross-product matrix: hat(a) * b == a.cross(b).
Mat3 hat(const Vec3& w);
/// Inverse of hat() on the skew part of m.
Vec3 vee(const Mat3& m);
/// Rodrigues' formula.
Mat3 rotation_exp(const Vec3& w);
/// Axis-angle vector of a rotation; angle in [0, pi].
Vec3 rotation_log(const Mat3& r);
/// Rotation by `angle` radians about a (not necessarily unit) axis.
Mat3 axis_rotation(const Vec3& axis, double angle);

/// True when r^T r = I and det(r) = +1 within `tol`.
bool is_rotation(const Mat3& r, double tol = kRotationTolerance);

/**
 * @brief Element of SE(3), x -> R x + t.
 *
 * The constructor validates R; use it for values coming from outside the
 * library (files, user input). Results of compose/invert stay valid.
 */
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Eigen::Matrix3Xd apply(const Eigen::Matrix3Xd& points) const;
  PointCloud apply(const PointCloud& cloud) const;

  RigidTransform inverse() const;

  /// (a * b).apply(x) == a.apply(b.apply(x))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b);

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

inline PointCloud apply(const RigidTransform& t, const PointCloud& c) { return t.apply(c); }
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

/// Projects an approximately orthonormal matrix to the closest rotation.
Mat3 nearest_rotation(const Mat3& m);

}  // namespace certipose
