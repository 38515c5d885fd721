#pragma once

#include "certipose/geometry.hpp"

#include <cstdint>
#include <vector>

namespace certipose {

struct Neighbor {
  Eigen::Index index = -1;       ///< Column of the reference cloud.
  double squared_distance = 0.0;
};

/**
 * @brief Exact nearest-neighbor queries over a fixed reference cloud.
 *
 * Backed by a kd-tree split on the widest bounding-box axis. Results are
 * identical to an exhaustive scan, including tie-breaking (lowest reference
 * index wins). Read-only after construction and safe to share across threads.
 */
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(PointCloud reference, int leaf_size = 12);

  Neighbor nearest(const Vec3& query) const;

  const PointCloud& reference() const noexcept { return reference_; }
  Eigen::Index size() const noexcept { return reference_.size(); }

 private:
  struct Node {
    std::int32_t begin = 0;
    std::int32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search(std::int32_t node, const Vec3& q, Neighbor& best) const;

  PointCloud reference_;
  int leaf_size_;
  std::vector<std::int32_t> order_;     // reference indices, permuted by the tree
  Eigen::Matrix3Xd sorted_;             // reference points in `order_` order
  std::vector<Node> nodes_;
};

}  // namespace certipose
