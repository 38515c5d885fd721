#pragma once

#include "certipose/geometry.hpp"
#include "certipose/models.hpp"

#include <vector>

namespace certipose {

struct RegistrationResult {
  RigidTransform pose;
  double residual = 0.0;    ///< sum_i ||y[i] - pose * b[i]||^2 at the optimum
  bool degenerate = false;  ///< cross-covariance has rank <= 1
};

/**
 * @brief Closed-form least-squares rigid registration of b onto y.
 *
 * Centroids, cross-covariance H = sum (b - b_mean)(y - y_mean)^T, SVD
 * H = U S V^T, R = V diag(1, 1, det(V U^T)) U^T, t = y_mean - R b_mean.
 * Throws InsufficientCorrespondencesError for fewer than 3 pairs.
 */
RegistrationResult register_keypoints(const Keypoints& y, const Keypoints& b);

struct PosedOutputs {
  Keypoints keypoints;  ///< pose * b
  PointCloud cloud;     ///< pose * dense model
};

PosedOutputs posed_outputs(const RigidTransform& pose, const ObjectModel& model);

/// Jacobian of the registered pose with respect to the 3N coordinates of y
/// (column 3i+c is d/dy(c, i)). Rows 0..2: rotation as a left perturbation
/// R -> exp(hat(w)) R; rows 3..5: translation.
using PoseJacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

struct RegistrationDerivative {
  RegistrationResult registration;
  PoseJacobian jacobian;
  /// Set when the analytic differential was ill-conditioned and central
  /// differences were used instead.
  bool used_finite_differences = false;
};

/// Below this (relative) gap the analytic differential is replaced by finite differences.
inline constexpr double kSingularValueGap = 1e-8;

/**
 * @brief Analytic differential of register_keypoints with respect to y.
 *
 * The optimal R makes S = R H symmetric; differentiating that condition
 * gives (tr(S) I - S) w = -vee(R dH - dH^T R^T), solved in the eigenbasis
 * of S. Falls back to central differences (step `fd_step`) when the
 * smallest pairwise eigenvalue sum of S is below kSingularValueGap * ||H||.
 */
RegistrationDerivative registration_gradient(const Keypoints& y, const Keypoints& b, double fd_step = 1e-6);

/// Central-difference pose Jacobian; used as fallback and as a test oracle.
PoseJacobian registration_gradient_fd(const Keypoints& y, const Keypoints& b, double step);

struct IcpResult {
  RigidTransform pose;
  int iterations = 0;
  std::vector<double> objective_trace;  ///< half-Chamfer at each accepted pose, starting with the initial one
};

/**
 * @brief Point-to-point ICP of the dense model onto X.
 *
 * Stops when the pose update has rotation angle and translation (in units
 * of the model diameter) both below `tol`, or after `max_iters`.
 */
IcpResult icp_refine(const PointCloud& x, const ObjectModel& model, const RigidTransform& initial, int max_iters,
                     double tol);

}  // namespace certipose
