#include "certipose/certificates.hpp"

#include "certipose/metrics.hpp"
#include "certipose/nearest_neighbor.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace certipose {

CertificateConfig CertificateConfig::for_diameter(double diameter, double noise_bound) {
  CertificateConfig cfg;
  cfg.eps_oc = 0.0316 * diameter;
  cfg.delta_nd = 0.08 * diameter;
  cfg.noise_bound = noise_bound;
  cfg.indicator_slack = 0.15 * diameter;
  return cfg;
}

void CertificateConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(eps_oc)) throw std::invalid_argument("eps_oc must be positive and finite");
  if (!positive(delta_nd)) throw std::invalid_argument("delta_nd must be positive and finite");
  if (!positive(indicator_slack)) throw std::invalid_argument("indicator_slack must be positive and finite");
  if (!std::isfinite(noise_bound) || noise_bound < 0.0)
    throw std::invalid_argument("noise_bound must be finite and non-negative");
}

bool parameters_support_guarantee(const CertificateConfig& cfg) {
  return cfg.eps_oc + cfg.delta_nd + 2.0 * cfg.noise_bound < cfg.indicator_slack;
}

OcCheck observable_correctness(const PointCloud& x, const PointCloud& xhat, double eps_oc) {
  const double worst = one_sided_max_dist(x, xhat);
  return {worst < eps_oc, eps_oc - worst};
}

OcCheck observable_correctness(const PointCloud& x, const ObjectModel& model, const RigidTransform& pose,
                               double eps_oc) {
  if (x.empty()) throw std::invalid_argument("observable_correctness: empty input cloud");
  const PointCloud local(pose.inverse().apply(x.matrix()));
  const double worst = one_sided_max_dist(local, model.dense_index());
  return {worst < eps_oc, eps_oc - worst};
}

NdCheck non_degeneracy(const Keypoints& yhat, const PointCloud& x, const std::vector<IndicatorSet>& sets,
                       double delta_nd) {
  NdCheck out;
  if (sets.empty()) {
    out.nd = true;
    return out;
  }
  if (x.empty()) return out;
  const NearestNeighborIndex index(x);
  const double limit = delta_nd * delta_nd;
  std::vector<int> observed(static_cast<std::size_t>(yhat.cols()), -1);
  auto is_observed = [&](int k) {
    if (k < 0 || k >= yhat.cols()) throw std::out_of_range("indicator index out of range");
    int& memo = observed[static_cast<std::size_t>(k)];
    if (memo < 0) memo = index.nearest(Vec3(yhat.col(k))).squared_distance < limit ? 1 : 0;
    return memo == 1;
  };
  for (std::size_t l = 0; l < sets.size(); ++l) {
    if (std::all_of(sets[l].begin(), sets[l].end(), is_observed)) {
      out.nd = true;
      out.satisfied_set = static_cast<int>(l);
      return out;
    }
  }
  return out;
}

CertificateResult certify(const PointCloud& x, const ObjectModel& model, const RigidTransform& pose,
                          const CertificateConfig& cfg) {
  cfg.validate();
  CertificateResult r;
  const OcCheck oc = observable_correctness(x, model, pose, cfg.eps_oc);
  r.oc = oc.oc;
  r.oc_margin = oc.margin;
  const NdCheck nd = non_degeneracy(pose.apply(model.keypoints()), x, model.indicator_sets(), cfg.delta_nd);
  r.nd = nd.nd;
  r.nd_set = nd.satisfied_set;
  r.zeta_bound = cfg.eps_oc + cfg.noise_bound;
  return r;
}

double pose_hausdorff(const RigidTransform& estimate, const RigidTransform& truth, const ObjectModel& model) {
  // Both directions are measured in the model frame against the dense index.
  const RigidTransform relative = truth.inverse() * estimate;
  const PointCloud forward(relative.apply(model.dense().matrix()));
  const PointCloud backward(relative.inverse().apply(model.dense().matrix()));
  return std::max(one_sided_max_dist(forward, model.dense_index()),
                  one_sided_max_dist(backward, model.dense_index()));
}

bool zeta_correct(const RigidTransform& estimate, const RigidTransform& truth, const ObjectModel& model,
                  double zeta) {
  return pose_hausdorff(estimate, truth, model) <= zeta;
}

std::string to_json_line(const std::string& scene_id, const CertificateResult& result) {
  nlohmann::ordered_json j;
  j["scene_id"] = scene_id;
  j["oc"] = result.oc;
  j["nd"] = result.nd;
  j["oc_margin"] = result.oc_margin;
  j["nd_set"] = result.nd_set ? nlohmann::ordered_json(*result.nd_set) : nlohmann::ordered_json(nullptr);
  j["zeta_bound"] = result.zeta_bound;
  return j.dump();
}

}  // namespace certipose
