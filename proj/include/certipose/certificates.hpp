#pragma once

#include "certipose/geometry.hpp"
#include "certipose/models.hpp"

#include <optional>
#include <string>

namespace certipose {

/**
 * Thresholds of the two certificates, in model distance units.
 *
 * `indicator_slack` is the distance within which the prewired indicator
 * sets are assumed to certify a non-degenerate view; it is declarative and
 * only enters the parameter check.
 */
struct CertificateConfig {
  double eps_oc = 0.0;
  double delta_nd = 0.0;
  double noise_bound = 0.0;
  double indicator_slack = 0.0;

  /// eps_oc = 0.0316 d, delta_nd = 0.08 d, indicator_slack = 0.15 d.
  static CertificateConfig for_diameter(double diameter, double noise_bound = 0.0);
  /// Throws std::invalid_argument on non-finite or non-positive thresholds.
  void validate() const;
};

/// True when eps_oc + delta_nd + 2 noise_bound < indicator_slack, i.e. the
/// certificates imply the zeta-correctness guarantee.
bool parameters_support_guarantee(const CertificateConfig& cfg);

struct OcCheck {
  bool oc = false;
  double margin = 0.0;  ///< eps_oc - one-sided max distance
};

/// oc iff every point of x is strictly closer than eps_oc to xhat.
OcCheck observable_correctness(const PointCloud& x, const PointCloud& xhat, double eps_oc);
/// Same test against `pose` applied to the model's dense cloud, searched in the model frame.
OcCheck observable_correctness(const PointCloud& x, const ObjectModel& model, const RigidTransform& pose,
                               double eps_oc);

struct NdCheck {
  bool nd = false;
  std::optional<int> satisfied_set;  ///< first indicator set whose keypoints are all observed
};

/// nd iff some indicator set has every keypoint strictly within delta_nd of x.
/// An empty collection is vacuously non-degenerate.
NdCheck non_degeneracy(const Keypoints& yhat, const PointCloud& x, const std::vector<IndicatorSet>& sets,
                       double delta_nd);

struct CertificateResult {
  bool oc = false;
  bool nd = false;
  double oc_margin = 0.0;
  std::optional<int> nd_set;
  double zeta_bound = 0.0;  ///< eps_oc + noise_bound; meaningful when oc and nd hold
  bool certified() const { return oc && nd; }
};

/// Both certificates for the estimate `pose` of `model` given the input x.
CertificateResult certify(const PointCloud& x, const ObjectModel& model, const RigidTransform& pose,
                          const CertificateConfig& cfg);

/// Hausdorff distance between the two posings of the model's dense cloud.
double pose_hausdorff(const RigidTransform& estimate, const RigidTransform& truth, const ObjectModel& model);

/// Ground-truth check used in evaluation: pose_hausdorff <= zeta.
bool zeta_correct(const RigidTransform& estimate, const RigidTransform& truth, const ObjectModel& model,
                  double zeta);

/// {"scene_id":..,"oc":..,"nd":..,"oc_margin":..,"nd_set":..|null,"zeta_bound":..}
std::string to_json_line(const std::string& scene_id, const CertificateResult& result);

}  // namespace certipose
