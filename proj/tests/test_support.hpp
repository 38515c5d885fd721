#pragma once

#include "certipose/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace testsupport {

using certipose::Mat3;
using certipose::PointCloud;
using certipose::Vec3;

inline Vec3 gaussian_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  return {g(rng), g(rng), g(rng)};
}

// Rotation from a uniformly random unit quaternion.
inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline certipose::RigidTransform random_transform(std::mt19937_64& rng, double translation_scale = 1.0) {
  return {random_rotation(rng), gaussian_vec(rng, translation_scale)};
}

inline PointCloud random_cloud(std::mt19937_64& rng, int n, double scale = 1.0) {
  Eigen::Matrix3Xd m(3, n);
  for (int i = 0; i < n; ++i) m.col(i) = gaussian_vec(rng, scale);
  return PointCloud(m);
}

// Exhaustive nearest distance, kept separate from the library kernels.
inline double brute_nearest(const Vec3& q, const PointCloud& ref) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < ref.size(); ++j) {
    const double dx = q.x() - ref[j].x(), dy = q.y() - ref[j].y(), dz = q.z() - ref[j].z();
    best = std::min(best, dx * dx + dy * dy + dz * dz);
  }
  return best;
}

inline double brute_half_chamfer(const PointCloud& x, const PointCloud& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += brute_nearest(x[i], y);
  return s / static_cast<double>(x.size());
}

inline double brute_one_sided(const PointCloud& x, const PointCloud& y) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) m = std::max(m, brute_nearest(x[i], y));
  return std::sqrt(m);
}

inline double brute_hausdorff(const PointCloud& u, const PointCloud& v) {
  return std::max(brute_one_sided(u, v), brute_one_sided(v, u));
}

// Angle of R_a^T R_b via the chordal distance ||R_a - R_b||_F = 2 sqrt(2) sin(angle / 2),
// which stays accurate for tiny angles.
inline double angle_between(const Mat3& a, const Mat3& b) {
  const double chord = (a - b).norm() / (2.0 * std::sqrt(2.0));
  return 2.0 * std::asin(std::min(1.0, chord));
}

// Horn's closed-form registration through the dominant eigenvector of a 4x4
// quaternion matrix. Independent of the SVD route used by the library.
inline certipose::RigidTransform horn_registration(const Eigen::Matrix3Xd& y, const Eigen::Matrix3Xd& b) {
  const Vec3 yc = y.rowwise().mean(), bc = b.rowwise().mean();
  const Mat3 m = (b.colwise() - bc) * (y.colwise() - yc).transpose();
  const double sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2);
  const double syx = m(1, 0), syy = m(1, 1), syz = m(1, 2);
  const double szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);
  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d q = es.eigenvectors().col(3);
  const Mat3 r = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
  return {r, yc - r * bc};
}

}  // namespace testsupport
