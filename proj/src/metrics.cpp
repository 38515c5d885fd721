#include "certipose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace certipose {
namespace {

void require_nonempty(const PointCloud& c, const char* what) {
  if (c.empty()) throw std::invalid_argument(std::string(what) + ": empty point cloud");
}

double mean_nearest(const PointCloud& x, const NearestNeighborIndex& index, bool squared) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d2 = index.nearest(x[i]).squared_distance;
    sum += squared ? d2 : std::sqrt(d2);
  }
  return sum / static_cast<double>(x.size());
}

}  // namespace

double half_chamfer(const PointCloud& x, const NearestNeighborIndex& xhat) {
  require_nonempty(x, "half_chamfer");
  return mean_nearest(x, xhat, true);
}

double half_chamfer(const PointCloud& x, const PointCloud& xhat) {
  require_nonempty(x, "half_chamfer");
  require_nonempty(xhat, "half_chamfer");
  return half_chamfer(x, NearestNeighborIndex(xhat));
}

double one_sided_max_dist(const PointCloud& x, const NearestNeighborIndex& xhat) {
  require_nonempty(x, "one_sided_max_dist");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) worst = std::max(worst, xhat.nearest(x[i]).squared_distance);
  return std::sqrt(worst);
}

double one_sided_max_dist(const PointCloud& x, const PointCloud& xhat) {
  require_nonempty(x, "one_sided_max_dist");
  require_nonempty(xhat, "one_sided_max_dist");
  return one_sided_max_dist(x, NearestNeighborIndex(xhat));
}

double hausdorff(const PointCloud& u, const PointCloud& v) {
  return std::max(one_sided_max_dist(u, v), one_sided_max_dist(v, u));
}

double add_s(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, "add_s");
  require_nonempty(b, "add_s");
  const NearestNeighborIndex ia(a);
  const NearestNeighborIndex ib(b);
  return 0.5 * (mean_nearest(a, ib, false) + mean_nearest(b, ia, false));
}

}  // namespace certipose
