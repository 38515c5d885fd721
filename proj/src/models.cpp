#include "certipose/models.hpp"

#include "certipose/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace certipose {
namespace {

constexpr double kPi = std::numbers::pi;

struct Landmarks {
  std::vector<Vec3> points;
  std::vector<IndicatorSet> sets;
};

Landmarks box_landmarks(const Vec3& half) {
  Landmarks l;
  const double x = half.x(), y = half.y(), z = half.z();
  // Corner order matches the claw-shaped indicator sets below: each set is a
  // corner plus its three edge neighbors.
  l.points = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
              {-x, -y, z},  {x, -y, z},  {-x, y, z}, {x, y, z}};
  l.points.insert(l.points.end(), {{x, 0, 0}, {-x, 0, 0}, {0, y, 0}, {0, -y, 0}, {0, 0, z}, {0, 0, -z}});
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) l.points.emplace_back(sx * x, sy * y, 0);
  for (double sx : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0}) l.points.emplace_back(sx * x, 0, sz * z);
  for (double sy : {-1.0, 1.0})
    for (double sz : {-1.0, 1.0}) l.points.emplace_back(0, sy * y, sz * z);
  l.sets = {{0, 1, 3, 4}, {0, 1, 2, 5}, {1, 2, 3, 7}, {0, 2, 3, 6},
            {4, 5, 6, 0}, {4, 5, 7, 1}, {5, 6, 7, 2}, {4, 6, 7, 3}};
  return l;
}

// Mug: cylinder body (radius 0.35, height 1) with a closed base and a
// half-torus handle on the +x side.
constexpr double kMugRadius = 0.35, kMugHeight = 1.0;
constexpr double kHandleMajor = 0.25, kHandleMinor = 0.04;

Vec3 mug_handle_point(double u) {
  const double r = kHandleMajor + kHandleMinor;
  return {kMugRadius + r * std::cos(u), 0.0, 0.5 * kMugHeight + r * std::sin(u)};
}

Landmarks mug_landmarks() {
  Landmarks l;
  l.points.push_back(mug_handle_point(0.0));
  for (double z : {kMugHeight, 0.0})
    for (int k = 0; k < 4; ++k) {
      const double a = 0.5 * kPi * k;
      l.points.emplace_back(kMugRadius * std::cos(a), kMugRadius * std::sin(a), z);
    }
  l.points.push_back(mug_handle_point(kPi / 3));
  l.points.push_back(mug_handle_point(-kPi / 3));
  l.points.emplace_back(0.0, 0.0, 0.0);
  l.sets = {{kMugHandleKeypoint}};
  return l;
}

void mug_patches(PatchList& p) {
  p.push_back(make_cylinder_side(Vec3::Zero(), kMugRadius, kMugHeight));
  p.push_back(make_annular_sector(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 0.0, kMugRadius, 0.0, 2 * kPi));
  p.push_back(make_torus_section(Vec3(kMugRadius, 0.0, 0.5 * kMugHeight), Vec3::UnitX(), Vec3::UnitZ(),
                                 kHandleMajor, kHandleMinor, -0.5 * kPi, 0.5 * kPi));
}

// Cap: hemispherical crown (radius 0.5) with a flat pointed visor on +x,
// a fan of triangles from the tip to the crown rim.
constexpr double kCrownRadius = 0.5, kVisorRadius = 0.85, kVisorHalfAngle = 50.0 * kPi / 180.0;
constexpr int kVisorSegments = 8;

Vec3 visor_rim_point(double angle) { return Vec3(kCrownRadius * std::cos(angle), kCrownRadius * std::sin(angle), 0.0); }

Landmarks cap_landmarks() {
  Landmarks l;
  l.points.emplace_back(kVisorRadius, 0.0, 0.0);
  l.points.emplace_back(0.0, 0.0, kCrownRadius);
  l.points.emplace_back(0.0, kCrownRadius, 0.0);
  l.points.emplace_back(-kCrownRadius, 0.0, 0.0);
  l.points.emplace_back(0.0, -kCrownRadius, 0.0);
  const Vec3 tip(kVisorRadius, 0.0, 0.0);
  l.points.push_back(0.5 * (tip + visor_rim_point(kVisorHalfAngle)));
  l.points.push_back(0.5 * (tip + visor_rim_point(-kVisorHalfAngle)));
  l.points.emplace_back(-kCrownRadius * std::cos(kPi / 4), 0.0, kCrownRadius * std::sin(kPi / 4));
  l.sets = {{kCapVisorKeypoint}};
  return l;
}

void cap_patches(PatchList& p) {
  p.push_back(make_sphere_zone(Vec3::Zero(), kCrownRadius, 0.0, 0.5 * kPi));
  const Vec3 tip(kVisorRadius, 0.0, 0.0);
  for (int j = 0; j < kVisorSegments; ++j) {
    const double a0 = -kVisorHalfAngle + 2.0 * kVisorHalfAngle * j / kVisorSegments;
    const double a1 = -kVisorHalfAngle + 2.0 * kVisorHalfAngle * (j + 1) / kVisorSegments;
    p.push_back(make_triangle(tip, visor_rim_point(a0), visor_rim_point(a1)));
  }
}

// Chair: seat slab, backrest slab, four legs.
constexpr double kSeatHalf = 0.25, kSeatLow = 0.45, kSeatHigh = 0.5, kBackTop = 1.0, kBackDepth = 0.05,
                 kLeg = 0.05;

Landmarks chair_landmarks() {
  Landmarks l;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) l.points.emplace_back(sx * kSeatHalf, sy * kSeatHalf, kSeatHigh);
  l.points.emplace_back(-kSeatHalf, kSeatHalf, kBackTop);
  l.points.emplace_back(kSeatHalf, kSeatHalf, kBackTop);
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      l.points.emplace_back(sx * (kSeatHalf - 0.5 * kLeg), sy * (kSeatHalf - 0.5 * kLeg), 0.0);
  return l;
}

void chair_patches(PatchList& p) {
  add_box_faces(p, Vec3(-kSeatHalf, -kSeatHalf, kSeatLow), Vec3(kSeatHalf, kSeatHalf, kSeatHigh));
  add_box_faces(p, Vec3(-kSeatHalf, kSeatHalf - kBackDepth, kSeatHigh), Vec3(kSeatHalf, kSeatHalf, kBackTop));
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) {
      const Vec3 c(sx * (kSeatHalf - 0.5 * kLeg), sy * (kSeatHalf - 0.5 * kLeg), 0.0);
      add_box_faces(p, c - Vec3(0.5 * kLeg, 0.5 * kLeg, 0.0), c + Vec3(0.5 * kLeg, 0.5 * kLeg, kSeatLow));
    }
}

Landmarks landmarks_for(ModelKind kind) {
  switch (kind) {
    case ModelKind::box: return box_landmarks(0.5 * kBuiltinBoxExtent);
    case ModelKind::mug_like: return mug_landmarks();
    case ModelKind::cap_like: return cap_landmarks();
    case ModelKind::chair_like: return chair_landmarks();
  }
  throw std::invalid_argument("unknown model kind");
}

}  // namespace

ObjectModel::ObjectModel(std::string name, PointCloud dense, Keypoints keypoints, double diameter,
                         std::vector<IndicatorSet> indicator_sets, double sampling_slack)
    : name_(std::move(name)), dense_(std::move(dense)), keypoints_(std::move(keypoints)), diameter_(diameter),
      indicator_sets_(std::move(indicator_sets)), sampling_slack_(sampling_slack) {
  if (dense_.empty()) throw InvariantError("model has no dense points");
  if (keypoints_.cols() < 3) throw InvariantError("model needs at least 3 keypoints");
  if (!keypoints_.allFinite()) throw InvariantError("model keypoints are not finite");
  if (!(diameter_ > 0.0) || !std::isfinite(diameter_)) throw InvariantError("model diameter must be positive");
  if (!(sampling_slack_ >= 0.0) || !std::isfinite(sampling_slack_))
    throw InvariantError("sampling slack must be finite and nonnegative");
  for (std::size_t l = 0; l < indicator_sets_.size(); ++l) {
    if (indicator_sets_[l].empty()) throw InvariantError("indicator set " + std::to_string(l) + " is empty");
    for (int i : indicator_sets_[l])
      if (i < 0 || i >= keypoints_.cols())
        throw InvariantError("indicator set " + std::to_string(l) + " references keypoint " + std::to_string(i) +
                             " but the model has " + std::to_string(keypoints_.cols()));
  }
  index_ = std::make_shared<const NearestNeighborIndex>(dense_);
  for (Eigen::Index k = 0; k < keypoints_.cols(); ++k) {
    const double dist = std::sqrt(index_->nearest(keypoints_.col(k)).squared_distance);
    if (dist > sampling_slack_ * (1.0 + 1e-9) + 1e-12)
      throw InvariantError("keypoint " + std::to_string(k) + " is farther than epsilon_s from the dense cloud");
  }
}

double ObjectModel::compute_diameter(const PointCloud& cloud) {
  const auto& p = cloud.matrix();
  double best = 0.0;
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    for (Eigen::Index j = i + 1; j < p.cols(); ++j) best = std::max(best, (p.col(i) - p.col(j)).squaredNorm());
  return std::sqrt(best);
}

bool operator==(const ObjectModel& a, const ObjectModel& b) {
  return a.name_ == b.name_ && a.dense_ == b.dense_ && a.keypoints_.cols() == b.keypoints_.cols() &&
         a.keypoints_ == b.keypoints_ && a.diameter_ == b.diameter_ && a.indicator_sets_ == b.indicator_sets_ &&
         a.sampling_slack_ == b.sampling_slack_;
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "box") return ModelKind::box;
  if (s == "mug_like" || s == "mug") return ModelKind::mug_like;
  if (s == "cap_like" || s == "cap") return ModelKind::cap_like;
  if (s == "chair_like" || s == "chair") return ModelKind::chair_like;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::box: return "box";
    case ModelKind::mug_like: return "mug_like";
    case ModelKind::cap_like: return "cap_like";
    case ModelKind::chair_like: return "chair_like";
  }
  return "unknown";
}

int builtin_landmark_count(ModelKind kind) { return static_cast<int>(landmarks_for(kind).points.size()); }

ObjectModel builtin_model(ModelKind kind, int num_dense, int num_keypoints, std::uint64_t seed, double scale) {
  if (num_dense < 100) throw std::invalid_argument("builtin_model: need at least 100 dense points");
  if (num_keypoints < 3) throw std::invalid_argument("builtin_model: need at least 3 keypoints");
  if (!(scale > 0.0)) throw std::invalid_argument("builtin_model: scale must be positive");
  Landmarks marks = landmarks_for(kind);
  if (num_keypoints > static_cast<int>(marks.points.size()))
    throw std::invalid_argument("builtin_model: " + to_string(kind) + " has only " +
                                std::to_string(marks.points.size()) + " landmarks");

  PatchList patches;
  switch (kind) {
    case ModelKind::box: add_box_faces(patches, -0.5 * kBuiltinBoxExtent, 0.5 * kBuiltinBoxExtent); break;
    case ModelKind::mug_like: mug_patches(patches); break;
    case ModelKind::cap_like: cap_patches(patches); break;
    case ModelKind::chair_like: chair_patches(patches); break;
  }
  Rng rng(mix_seed(seed, 0x5eed));
  PatchSamples samples = sample_surface(patches, num_dense, rng);
  for (auto& p : samples.points) p *= scale;
  PointCloud dense(samples.points);

  Keypoints kp(3, num_keypoints);
  for (int i = 0; i < num_keypoints; ++i) kp.col(i) = scale * marks.points[static_cast<std::size_t>(i)];
  std::vector<IndicatorSet> sets;
  for (const auto& s : marks.sets)
    if (std::all_of(s.begin(), s.end(), [&](int i) { return i < num_keypoints; })) sets.push_back(s);

  const double diameter = ObjectModel::compute_diameter(dense);
  return ObjectModel(to_string(kind), std::move(dense), std::move(kp), diameter, std::move(sets),
                     scale * samples.slack * (1.0 + 1e-9));
}

void PerturbationConfig::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("perturbation fraction must lie in [0, 1]");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("perturbation sigma must be >= 0");
}

PoseRegime PoseRegime::easy() { return {Kind::easy, 0.0, kPi / 6, 0.0, 0.2}; }
PoseRegime PoseRegime::hard() { return {Kind::hard, 0.0, kPi, 0.0, 1.0}; }

PoseRegime PoseRegime::parse(const std::string& s) {
  if (s == "easy") return easy();
  if (s == "hard") return hard();
  throw std::invalid_argument("unknown pose regime '" + s + "'");
}

void PoseRegime::validate() const {
  if (!(angle_min >= 0.0 && angle_max >= angle_min && translation_min >= 0.0 && translation_max >= translation_min))
    throw std::invalid_argument("pose regime ranges must be nonnegative and ordered");
}

Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

RigidTransform random_pose(const PoseRegime& regime, double diameter, std::uint64_t seed) {
  regime.validate();
  if (!(diameter > 0.0)) throw std::invalid_argument("random_pose: diameter must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = random_unit_vector(rng);
  const double angle = regime.angle_min + (regime.angle_max - regime.angle_min) * u(rng);
  const Vec3 dir = random_unit_vector(rng);
  const double norm = diameter * (regime.translation_min + (regime.translation_max - regime.translation_min) * u(rng));
  return RigidTransform(Eigen::AngleAxisd(angle, axis).toRotationMatrix(), norm * dir);
}

Keypoints perturb_keypoints(const Keypoints& posed_keypoints, double diameter, const PerturbationConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const double half = 0.5 * cfg.sigma * diameter;
  std::uniform_real_distribution<double> noise(-half, half);
  Keypoints out = posed_keypoints;
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    if (coin(rng) >= cfg.fraction || half == 0.0) continue;
    for (int c = 0; c < 3; ++c) out(c, k) += noise(rng);
  }
  return out;
}

Scene generate_scene(const ObjectModel& model, const PoseRegime& regime, int n, double noise_bound,
                     std::uint64_t seed, int max_attempts) {
  const RigidTransform pose = random_pose(regime, model.diameter(), mix_seed(seed, 1));
  for (int attempt = 0;; ++attempt) {
    Rng view_rng(mix_seed(seed, 100 + static_cast<std::uint64_t>(attempt)));
    const Vec3 view = random_unit_vector(view_rng);
    try {
      return render_depth(model, pose, view, n, noise_bound, mix_seed(seed, 200 + static_cast<std::uint64_t>(attempt)));
    } catch (const DegenerateViewError&) {
      if (attempt + 1 >= max_attempts) throw;
    }
  }
}

}  // namespace certipose
