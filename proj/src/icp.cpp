#include "certipose/registration.hpp"

#include <cmath>
#include <stdexcept>

namespace certipose {
namespace {

// Nearest model point (model frame) for every input point under `pose`.
double correspond(const PointCloud& x, const ObjectModel& model, const RigidTransform& pose, Keypoints& matched) {
  const RigidTransform inv = pose.inverse();
  const auto& dense = model.dense();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Neighbor nb = model.dense_index().nearest(inv.apply(Vec3(x[i])));
    matched.col(i) = dense[nb.index];
    sum += nb.squared_distance;
  }
  return sum / static_cast<double>(x.size());
}

}  // namespace

IcpResult icp_refine(const PointCloud& x, const ObjectModel& model, const RigidTransform& initial, int max_iters,
                     double tol) {
  if (x.size() < 3) throw std::invalid_argument("icp_refine: need at least 3 input points");
  IcpResult out;
  out.pose = initial;
  Keypoints matched(3, x.size());
  double objective = correspond(x, model, out.pose, matched);
  out.objective_trace.push_back(objective);
  for (int it = 0; it < max_iters; ++it) {
    const RegistrationResult step = register_keypoints(x.matrix(), matched);
    Keypoints next_matched(3, x.size());
    const double next_objective = correspond(x, model, step.pose, next_matched);
    // Alignment of fixed pairs cannot increase the objective; guard against
    // round-off so the trace stays monotone.
    if (next_objective > objective) break;
    const RigidTransform delta = step.pose * out.pose.inverse();
    const double angle = rotation_log(delta.rotation()).norm();
    const double shift = (step.pose.translation() - out.pose.translation()).norm() / model.diameter();
    out.pose = step.pose;
    objective = next_objective;
    matched.swap(next_matched);
    out.objective_trace.push_back(objective);
    out.iterations = it + 1;
    if (angle < tol && shift < tol) break;
  }
  return out;
}

}  // namespace certipose
