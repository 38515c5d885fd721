#pragma once

#include "certipose/geometry.hpp"
#include "certipose/nearest_neighbor.hpp"
#include "certipose/surface_sampling.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace certipose {

/// Keypoint indices whose joint visibility certifies a non-degenerate view.
using IndicatorSet = std::vector<int>;

/**
 * @brief Object model: dense surface samples, semantic keypoints, indicator sets.
 *
 * Invariants (checked at construction, InvariantError otherwise):
 * at least 3 keypoints, diameter > 0, every keypoint within the sampling
 * slack of a dense point, every indicator index in range.
 */
class ObjectModel {
 public:
  ObjectModel(std::string name, PointCloud dense, Keypoints keypoints, double diameter,
              std::vector<IndicatorSet> indicator_sets, double sampling_slack);

  const std::string& name() const noexcept { return name_; }
  const PointCloud& dense() const noexcept { return dense_; }
  const Keypoints& keypoints() const noexcept { return keypoints_; }
  int num_keypoints() const noexcept { return static_cast<int>(keypoints_.cols()); }
  double diameter() const noexcept { return diameter_; }
  const std::vector<IndicatorSet>& indicator_sets() const noexcept { return indicator_sets_; }
  /// Covering radius of the dense samples over the continuous surface.
  double sampling_slack() const noexcept { return sampling_slack_; }

  /// Nearest-neighbor index over the dense samples in the model frame.
  const NearestNeighborIndex& dense_index() const noexcept { return *index_; }

  /// Largest pairwise distance of a cloud (exhaustive).
  static double compute_diameter(const PointCloud& cloud);

  friend bool operator==(const ObjectModel& a, const ObjectModel& b);

 private:
  std::string name_;
  PointCloud dense_;
  Keypoints keypoints_;
  double diameter_;
  std::vector<IndicatorSet> indicator_sets_;
  double sampling_slack_;
  std::shared_ptr<const NearestNeighborIndex> index_;
};

enum class ModelKind { box, mug_like, cap_like, chair_like };

ModelKind parse_model_kind(const std::string& s);
std::string to_string(ModelKind kind);

/// Generating dimensions of the builtin box (x, y, z extents).
inline const Vec3 kBuiltinBoxExtent{1.0, 0.7, 0.5};

/// Index of the landmark that carries the non-degeneracy test, when any.
/// mug_like: handle (0); cap_like: visor tip (0).
inline constexpr int kMugHandleKeypoint = 0;
inline constexpr int kCapVisorKeypoint = 0;

/**
 * @brief Deterministic analytic stand-in objects.
 *
 * Keypoints are the first `num_keypoints` of a fixed landmark list per kind
 * (box: 8 corners then 6 face centers then 12 edge midpoints; mug: handle,
 * rim, base, handle joints; cap: visor tip, crown, rim, visor edge midpoints;
 * chair: seat corners, backrest top, feet). Indicator sets referencing a
 * dropped landmark are dropped. `scale` multiplies every length.
 */
ObjectModel builtin_model(ModelKind kind, int num_dense, int num_keypoints, std::uint64_t seed, double scale = 1.0);
/// Number of landmarks available for a builtin kind.
int builtin_landmark_count(ModelKind kind);

void write_model(std::ostream& out, const ObjectModel& model);
ObjectModel read_model(std::istream& in);
void save_model(const ObjectModel& model, const std::string& path);
ObjectModel load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Generative data model

struct Scene {
  PointCloud input;          ///< Observed partial cloud.
  RigidTransform gt_pose;
  Keypoints gt_keypoints;    ///< gt_pose applied to the model keypoints.
  double noise_bound = 0.0;  ///< Every noise realization is strictly shorter than this.
  Vec3 view_direction = Vec3::UnitZ();
};

void write_scene(std::ostream& out, const Scene& scene);
/// Keypoints are restored from the file when present, otherwise left empty.
Scene read_scene(std::istream& in);
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

struct PerturbationConfig {
  double fraction = 0.8;  ///< Probability a keypoint is perturbed.
  double sigma = 0.0;     ///< Per-coordinate noise is uniform in [-sigma d/2, sigma d/2].
  std::uint64_t seed = 0;

  void validate() const;
};

struct PoseRegime {
  enum class Kind { easy, hard } kind = Kind::hard;
  double angle_min = 0.0;        ///< radians
  double angle_max = 0.0;
  double translation_min = 0.0;  ///< multiples of the diameter
  double translation_max = 0.0;

  static PoseRegime easy();
  static PoseRegime hard();
  static PoseRegime parse(const std::string& s);
  void validate() const;
};

/// Uniform random axis, angle uniform in the regime range, translation with
/// uniform direction and norm uniform in the regime range times `diameter`.
RigidTransform random_pose(const PoseRegime& regime, double diameter, std::uint64_t seed);

Vec3 random_unit_vector(Rng& rng);

/// Angular z-buffer resolution (bins per side).
inline constexpr int kDepthBins = 64;
/// Fewest surviving points accepted by render_depth.
inline constexpr int kMinVisiblePoints = 50;
/// Disc radius of a dense sample, in units of the sampling slack.
inline constexpr double kSplatRadiusFactor = 1.5;
/// A disc only hides a point it lies in front of by more than this many radii.
inline constexpr double kSplatDepthFactor = 2.0;

/**
 * @brief Renders a partial, noisy observation of a posed model.
 *
 * A pinhole at distance 2d behind the posed model centroid looks along
 * `view`. Posed dense points are binned by their two angular coordinates
 * into a 64x64 grid spanning the object; only the nearest point of each
 * bin survives, and only if the ray from the camera to it does not cross
 * another sample's disc more than two disc radii before reaching it. Each
 * disc lies in the tangent plane given by the principal axes of the
 * sample's dense neighbours. Dense samples are sparser than the bins, so
 * without the disc test back surfaces show through empty bins.
 * min(n, survivors) survivors are drawn without replacement
 * and perturbed by noise uniform in the open ball of radius `noise_bound`.
 * Throws DegenerateViewError when fewer than 50 points survive.
 */
Scene render_depth(const ObjectModel& model, const RigidTransform& pose, const Vec3& view, int n,
                   double noise_bound, std::uint64_t seed);

/// Indices of the posed dense points that survive the z-buffer. Each
/// survivor is the nearest point of its bin; a positive `splat_radius`
/// additionally applies the disc occlusion test.
std::vector<Eigen::Index> zbuffer_survivors(const PointCloud& posed_dense, const Vec3& camera, const Vec3& view,
                                            int bins = kDepthBins, double splat_radius = 0.0);

/// Camera position used by render_depth for a posed model.
Vec3 camera_position(const PointCloud& posed_dense, double diameter, const Vec3& view);

/// Each keypoint is perturbed with probability f by a per-coordinate uniform
/// draw in [-sigma d/2, sigma d/2].
Keypoints perturb_keypoints(const Keypoints& posed_keypoints, double diameter, const PerturbationConfig& cfg);

/// Convenience generator: random pose, view uniform on the sphere (resampled
/// up to `max_attempts` times on degenerate views).
Scene generate_scene(const ObjectModel& model, const PoseRegime& regime, int n, double noise_bound,
                     std::uint64_t seed, int max_attempts = 10);

}  // namespace certipose
