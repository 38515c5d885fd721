#include "certipose/registration.hpp"

#include "certipose/errors.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace certipose {
namespace {

struct Procrustes {
  Vec3 y_mean, b_mean;
  Mat3 h;            // cross-covariance
  Mat3 rotation;
  Mat3 eig_vectors;  // V: eigenbasis of S = R H
  Vec3 eig_values;   // sigma_1, sigma_2, det * sigma_3
  bool degenerate = false;
};

Procrustes solve_procrustes(const Keypoints& y, const Keypoints& b) {
  if (y.cols() != b.cols()) throw std::invalid_argument("register_keypoints: keypoint counts differ");
  if (y.cols() < 3) throw InsufficientCorrespondencesError("registration needs at least 3 correspondences");
  Procrustes p;
  p.y_mean = y.rowwise().mean();
  p.b_mean = b.rowwise().mean();
  p.h = (b.colwise() - p.b_mean) * (y.colwise() - p.y_mean).transpose();

  Eigen::JacobiSVD<Mat3> svd(p.h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  const Vec3 s = svd.singularValues();
  const double det = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Mat3 d = Mat3::Identity();
  d(2, 2) = det;
  p.rotation = v * d * u.transpose();
  p.eig_vectors = v;
  p.eig_values = Vec3(s[0], s[1], det * s[2]);
  p.degenerate = !(s[1] > 1e-12 * std::max(s[0], 1e-300)) || s[0] == 0.0;
  return p;
}

}  // namespace

RegistrationResult register_keypoints(const Keypoints& y, const Keypoints& b) {
  const Procrustes p = solve_procrustes(y, b);
  const Vec3 t = p.y_mean - p.rotation * p.b_mean;
  RegistrationResult out{RigidTransform(p.rotation, t), 0.0, p.degenerate};
  out.residual = ((y - p.rotation * b).colwise() - t).squaredNorm();
  return out;
}

PosedOutputs posed_outputs(const RigidTransform& pose, const ObjectModel& model) {
  return {pose.apply(model.keypoints()), pose.apply(model.dense())};
}

PoseJacobian registration_gradient_fd(const Keypoints& y, const Keypoints& b, double step) {
  const RigidTransform base = register_keypoints(y, b).pose;
  PoseJacobian jac(6, 3 * y.cols());
  Keypoints probe = y;
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    for (int c = 0; c < 3; ++c) {
      probe(c, i) = y(c, i) + step;
      const RigidTransform plus = register_keypoints(probe, b).pose;
      probe(c, i) = y(c, i) - step;
      const RigidTransform minus = register_keypoints(probe, b).pose;
      probe(c, i) = y(c, i);
      const Vec3 w_plus = rotation_log(plus.rotation() * base.rotation().transpose());
      const Vec3 w_minus = rotation_log(minus.rotation() * base.rotation().transpose());
      jac.block<3, 1>(0, 3 * i + c) = (w_plus - w_minus) / (2.0 * step);
      jac.block<3, 1>(3, 3 * i + c) = (plus.translation() - minus.translation()) / (2.0 * step);
    }
  return jac;
}

RegistrationDerivative registration_gradient(const Keypoints& y, const Keypoints& b, double fd_step) {
  const Procrustes p = solve_procrustes(y, b);
  RegistrationDerivative out;
  const Vec3 t = p.y_mean - p.rotation * p.b_mean;
  out.registration = {RigidTransform(p.rotation, t), ((y - p.rotation * b).colwise() - t).squaredNorm(),
                      p.degenerate};

  const Vec3& lam = p.eig_values;
  const Vec3 pair_sums(lam[1] + lam[2], lam[0] + lam[2], lam[0] + lam[1]);
  const double scale = std::max(p.h.norm(), 1e-300);
  if (p.degenerate || pair_sums.minCoeff() < kSingularValueGap * scale) {
    out.jacobian = registration_gradient_fd(y, b, fd_step);
    out.used_finite_differences = true;
    return out;
  }

  // (tr(S) I - S)^{-1} expressed in the eigenbasis of S.
  const Mat3& v = p.eig_vectors;
  const Mat3 inv_gap = v * pair_sums.cwiseInverse().asDiagonal() * v.transpose();
  const Mat3& rot = p.rotation;
  const Vec3 rb_mean = rot * p.b_mean;
  const double inv_n = 1.0 / static_cast<double>(y.cols());

  out.jacobian.resize(6, 3 * y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    // dH = (b_i - b_mean) e_c^T; the centroid shift drops out because the
    // centered b columns sum to zero.
    const Vec3 rb = rot * (b.col(i) - p.b_mean);
    for (int c = 0; c < 3; ++c) {
      // R dH - (R dH)^T = rb e_c^T - e_c rb^T, whose vee is e_c x rb.
      const Vec3 m = Vec3::Unit(c).cross(rb);
      const Vec3 w = -inv_gap * m;
      out.jacobian.block<3, 1>(0, 3 * i + c) = w;
      // t = y_mean - R b_mean
      out.jacobian.block<3, 1>(3, 3 * i + c) = inv_n * Vec3::Unit(c) - w.cross(rb_mean);
    }
  }
  return out;
}

}  // namespace certipose
