#include "certipose/nearest_neighbor.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace certipose {

NearestNeighborIndex::NearestNeighborIndex(PointCloud reference, int leaf_size)
    : reference_(std::move(reference)), leaf_size_(std::max(1, leaf_size)) {
  if (reference_.empty()) throw std::invalid_argument("nearest-neighbor index needs a nonempty cloud");
  const auto n = static_cast<std::int32_t>(reference_.size());
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * n / leaf_size_ + 2));
  build(0, n);
  sorted_.resize(3, n);
  for (std::int32_t i = 0; i < n; ++i) sorted_.col(i) = reference_[order_[static_cast<std::size_t>(i)]];
}

std::int32_t NearestNeighborIndex::build(std::int32_t begin, std::int32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end, -1, -1, 0, 0.0});
  if (end - begin <= leaf_size_) return id;

  const auto& pts = reference_.matrix();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::int32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(pts.col(order_[static_cast<std::size_t>(i)]));
    hi = hi.cwiseMax(pts.col(order_[static_cast<std::size_t>(i)]));
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all points coincide

  const std::int32_t mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) { return pts(axis, a) < pts(axis, b); });
  const double split = pts(axis, order_[static_cast<std::size_t>(mid)]);

  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void NearestNeighborIndex::search(std::int32_t id, const Vec3& q, Neighbor& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.left < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const double d2 = (sorted_.col(i) - q).squaredNorm();
      const auto idx = order_[static_cast<std::size_t>(i)];
      if (d2 < best.squared_distance || (d2 == best.squared_distance && idx < best.index)) {
        best.squared_distance = d2;
        best.index = idx;
      }
    }
    return;
  }
  // Left holds coordinates <= split and right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::int32_t near_child = diff < 0.0 ? node.left : node.right;
  const std::int32_t far_child = diff < 0.0 ? node.right : node.left;
  search(near_child, q, best);
  // Ties on the far side may carry a lower index, so prune only on strict excess.
  if (diff * diff <= best.squared_distance) search(far_child, q, best);
}

Neighbor NearestNeighborIndex::nearest(const Vec3& query) const {
  Neighbor best{std::numeric_limits<Eigen::Index>::max(), std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

}  // namespace certipose
