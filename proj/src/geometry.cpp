#include "certipose/geometry.hpp"

#include "certipose/errors.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace certipose {

PointCloud::PointCloud(Eigen::Matrix3Xd points) : points_(std::move(points)) {
  if (!points_.allFinite()) throw InvariantError("point cloud contains non-finite coordinates");
}

PointCloud::PointCloud(const std::vector<Vec3>& points) {
  points_.resize(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) points_.col(static_cast<Eigen::Index>(i)) = points[i];
  if (!points_.allFinite()) throw InvariantError("point cloud contains non-finite coordinates");
}

Vec3 PointCloud::centroid() const {
  if (empty()) return Vec3::Zero();
  return points_.rowwise().mean();
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

Mat3 rotation_exp(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return Mat3::Identity() + hat(w);
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Vec3 rotation_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

Mat3 axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation_)) throw InvariantError("rotation matrix is not in SO(3)");
  if (!translation_.allFinite()) throw InvariantError("translation is not finite");
}

Eigen::Matrix3Xd RigidTransform::apply(const Eigen::Matrix3Xd& points) const {
  Eigen::Matrix3Xd out = rotation_ * points;
  out.colwise() += translation_;
  return out;
}

PointCloud RigidTransform::apply(const PointCloud& cloud) const {
  return PointCloud(apply(cloud.matrix()));
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return RigidTransform(rt, -(rt * translation_));
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
}

}  // namespace certipose
