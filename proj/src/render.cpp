#include "certipose/errors.hpp"
#include "certipose/models.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <unordered_map>

namespace certipose {
namespace {

// Orthonormal (e1, e2) completing `view` to a right-handed frame.
std::pair<Vec3, Vec3> image_axes(const Vec3& view) {
  const Vec3 helper = std::abs(view.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = view.cross(helper).normalized();
  return {e1, view.cross(e1)};
}

// Neighbourhood radius for normal estimation, in splat radii.
constexpr double kNormalRadiusFactor = 1.5;
// Image-space search radius for candidate discs, in splat radii.
constexpr double kSplatReach = 1.25;

// Buckets points into cubes of side `cell` for radius queries.
class PointGrid {
 public:
  PointGrid(const PointCloud& points, double cell) : points_(points), cell_(cell) {
    for (Eigen::Index i = 0; i < points.size(); ++i) cells_[key(index_of(points[i]))].push_back(i);
  }

  template <typename F>
  void for_each_within(const Vec3& q, double radius, F&& f) const {
    const std::array<std::int64_t, 3> c = index_of(q);
    const double r2 = radius * radius;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (Eigen::Index j : it->second)
            if ((Vec3(points_[j]) - q).squaredNorm() <= r2) f(j);
        }
  }

 private:
  std::array<std::int64_t, 3> index_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }
  static std::int64_t key(const std::array<std::int64_t, 3>& c) {
    return (c[0] * 73856093) ^ (c[1] * 19349663) ^ (c[2] * 83492791);
  }

  const PointCloud& points_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<Eigen::Index>> cells_;
};

// Unit normal of the sampled surface at point i: the smallest principal
// axis of its neighbours within `radius`. Zero when the neighbourhood is
// too sparse to fit a plane.
Vec3 surface_normal(const PointGrid& grid, const PointCloud& points, Eigen::Index i, double radius) {
  Vec3 mean = Vec3::Zero();
  int count = 0;
  grid.for_each_within(points[i], radius, [&](Eigen::Index j) {
    mean += points[j];
    ++count;
  });
  if (count < 4) return Vec3::Zero();
  mean /= count;
  Mat3 cov = Mat3::Zero();
  grid.for_each_within(points[i], radius, [&](Eigen::Index j) {
    const Vec3 d = Vec3(points[j]) - mean;
    cov += d * d.transpose();
  });
  return Eigen::SelfAdjointEigenSolver<Mat3>(cov).eigenvectors().col(0);
}

}  // namespace

Vec3 camera_position(const PointCloud& posed_dense, double diameter, const Vec3& view) {
  return posed_dense.centroid() - 2.0 * diameter * view.normalized();
}

std::vector<Eigen::Index> zbuffer_survivors(const PointCloud& posed_dense, const Vec3& camera, const Vec3& view,
                                            int bins, double splat_radius) {
  const Vec3 v = view.normalized();
  const auto [e1, e2] = image_axes(v);
  const Eigen::Index n = posed_dense.size();
  const auto count = static_cast<std::size_t>(n);
  std::vector<double> alpha(count), beta(count), range(count);
  double amin = std::numeric_limits<double>::infinity(), amax = -amin, bmin = amin, bmax = -amin;
  double mean_range = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 ray = posed_dense[i] - camera;
    const double forward = ray.dot(v);
    const auto k = static_cast<std::size_t>(i);
    alpha[k] = std::atan2(ray.dot(e1), forward);
    beta[k] = std::atan2(ray.dot(e2), forward);
    range[k] = ray.norm();
    mean_range += range[k];
    amin = std::min(amin, alpha[k]);
    amax = std::max(amax, alpha[k]);
    bmin = std::min(bmin, beta[k]);
    bmax = std::max(bmax, beta[k]);
  }
  mean_range /= static_cast<double>(std::max<Eigen::Index>(n, 1));
  const double aspan = std::max(amax - amin, 1e-15), bspan = std::max(bmax - bmin, 1e-15);
  auto bin_of = [bins](double value, double lo, double span) {
    return std::clamp(static_cast<int>(std::floor((value - lo) / span * bins)), 0, bins - 1);
  };

  std::vector<Eigen::Index> winner(static_cast<std::size_t>(bins * bins), -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int cell = bin_of(alpha[k], amin, aspan) * bins + bin_of(beta[k], bmin, bspan);
    Eigen::Index& w = winner[static_cast<std::size_t>(cell)];
    if (w < 0 || range[k] < range[static_cast<std::size_t>(w)]) w = i;  // first index wins ties
  }

  // Splat test: every sample is a disc of radius splat_radius in its
  // local tangent plane. A bin winner is hidden when its camera ray passes
  // through another sample's disc more than kSplatDepthFactor radii before
  // reaching it. Candidate discs are found through an image-space grid.
  const double reach = kSplatReach * splat_radius;
  std::unordered_map<std::int64_t, std::vector<Eigen::Index>> grid;
  auto cell_key = [](std::int64_t a, std::int64_t b) { return a * 2000003 + b; };
  auto image_cell = [&](std::size_t k, int axis) {
    const double coord = (axis == 0 ? alpha[k] : beta[k]) * mean_range;
    return static_cast<std::int64_t>(std::floor(coord / reach));
  };
  std::optional<PointGrid> space;
  const double normal_radius = kNormalRadiusFactor * splat_radius;
  if (splat_radius > 0.0) {
    space.emplace(posed_dense, normal_radius);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      grid[cell_key(image_cell(k, 0), image_cell(k, 1))].push_back(i);
    }
  }
  std::vector<Vec3> normal(count);
  std::vector<char> has_normal(count, 0);
  auto normal_of = [&](std::size_t k) -> const Vec3& {
    if (!has_normal[k]) {
      normal[k] = surface_normal(*space, posed_dense, static_cast<Eigen::Index>(k), normal_radius);
      has_normal[k] = 1;
    }
    return normal[k];
  };
  const double margin = kSplatDepthFactor * splat_radius, reach2 = reach * reach;
  auto hidden = [&](Eigen::Index i) {
    if (splat_radius <= 0.0) return false;
    const auto k = static_cast<std::size_t>(i);
    const Vec3 u = (Vec3(posed_dense[i]) - camera) / range[k];
    const std::int64_t ca = image_cell(k, 0), cb = image_cell(k, 1);
    for (std::int64_t da = -1; da <= 1; ++da)
      for (std::int64_t db = -1; db <= 1; ++db) {
        const auto it = grid.find(cell_key(ca + da, cb + db));
        if (it == grid.end()) continue;
        for (Eigen::Index j : it->second) {
          const auto q = static_cast<std::size_t>(j);
          const double du = (alpha[q] - alpha[k]) * mean_range, dv = (beta[q] - beta[k]) * mean_range;
          if (du * du + dv * dv > reach2 || range[q] >= range[k] - margin) continue;
          const Vec3& nq = normal_of(q);
          const double denom = nq.dot(u);
          if (std::abs(denom) < 1e-9) continue;
          const Vec3 pq = Vec3(posed_dense[j]) - camera;
          const double t = nq.dot(pq) / denom;
          if (t <= 0.0 || t >= range[k] - margin) continue;
          if ((t * u - pq).squaredNorm() <= splat_radius * splat_radius) return true;
        }
      }
    return false;
  };

  std::vector<Eigen::Index> out;
  for (Eigen::Index w : winner)
    if (w >= 0 && !hidden(w)) out.push_back(w);
  std::sort(out.begin(), out.end());
  return out;
}

Scene render_depth(const ObjectModel& model, const RigidTransform& pose, const Vec3& view, int n,
                   double noise_bound, std::uint64_t seed) {
  if (n < 1 || n > model.dense().size()) throw std::invalid_argument("render_depth: need 1 <= n <= m");
  if (!(noise_bound >= 0.0)) throw std::invalid_argument("render_depth: noise bound must be >= 0");
  if (!(view.norm() > 0.0)) throw std::invalid_argument("render_depth: view direction must be nonzero");
  const Vec3 v = view.normalized();
  const PointCloud posed = pose.apply(model.dense());
  const Vec3 camera = camera_position(posed, model.diameter(), v);

  std::vector<Eigen::Index> survivors =
      zbuffer_survivors(posed, camera, v, kDepthBins, kSplatRadiusFactor * model.sampling_slack());
  if (static_cast<int>(survivors.size()) < kMinVisiblePoints)
    throw DegenerateViewError("only " + std::to_string(survivors.size()) + " points visible");

  Rng rng(seed);
  std::shuffle(survivors.begin(), survivors.end(), rng);
  survivors.resize(std::min<std::size_t>(survivors.size(), static_cast<std::size_t>(n)));
  std::sort(survivors.begin(), survivors.end());

  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(survivors.size()));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t k = 0; k < survivors.size(); ++k) {
    Vec3 p = posed[survivors[k]];
    if (noise_bound > 0.0) p += noise_bound * std::cbrt(u(rng)) * random_unit_vector(rng);
    pts.col(static_cast<Eigen::Index>(k)) = p;
  }

  Scene scene;
  scene.input = PointCloud(std::move(pts));
  scene.gt_pose = pose;
  scene.gt_keypoints = pose.apply(model.keypoints());
  scene.noise_bound = noise_bound;
  scene.view_direction = v;
  return scene;
}

}  // namespace certipose
