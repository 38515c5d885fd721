#pragma once

#include "certipose/geometry.hpp"
#include "certipose/nearest_neighbor.hpp"

namespace certipose {

// All functions throw std::invalid_argument on empty clouds.

/// Mean squared distance from each point of x to its nearest point in xhat.
double half_chamfer(const PointCloud& x, const PointCloud& xhat);
double half_chamfer(const PointCloud& x, const NearestNeighborIndex& xhat);

/// max_i min_j ||x[i] - xhat[j]|| (Euclidean, not squared).
double one_sided_max_dist(const PointCloud& x, const PointCloud& xhat);
double one_sided_max_dist(const PointCloud& x, const NearestNeighborIndex& xhat);

/// Symmetric Hausdorff distance between two finite point sets.
double hausdorff(const PointCloud& u, const PointCloud& v);

/// Symmetric mean closest-point distance (unsquared), symmetry-blind pose metric.
double add_s(const PointCloud& a, const PointCloud& b);

}  // namespace certipose
