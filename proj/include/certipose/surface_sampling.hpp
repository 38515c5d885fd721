#pragma once

#include "certipose/geometry.hpp"

#include <memory>
#include <random>
#include <vector>

namespace certipose {

using Rng = std::mt19937_64;

/// Deterministic 64-bit mixing for deriving independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Grid samples of a patch together with a covering radius: every point of
/// the continuous patch lies within `slack` of some sample.
struct PatchSamples {
  std::vector<Vec3> points;
  double slack = 0.0;
};

/// A parametric piece of an analytic surface.
class SurfacePatch {
 public:
  virtual ~SurfacePatch() = default;
  virtual double area() const = 0;
  /// Samples with neighbor spacing at most about `spacing`.
  virtual PatchSamples grid(double spacing) const = 0;
  virtual Vec3 random_point(Rng& rng) const = 0;
};

using PatchList = std::vector<std::unique_ptr<SurfacePatch>>;

/// Parallelogram origin + s*edge_u + t*edge_v, s,t in [0,1].
std::unique_ptr<SurfacePatch> make_rectangle(const Vec3& origin, const Vec3& edge_u, const Vec3& edge_v);
/// The six faces of an axis-aligned box.
void add_box_faces(PatchList& patches, const Vec3& lo, const Vec3& hi);
/// Lateral surface of a z-aligned cylinder about `base_center`.
std::unique_ptr<SurfacePatch> make_cylinder_side(const Vec3& base_center, double radius, double height);
/// Planar annular sector in the plane spanned by (e1, e2); radius in [r0, r1],
/// polar angle in [a0, a1]. A full disc is r0 = 0, [0, 2 pi].
std::unique_ptr<SurfacePatch> make_annular_sector(const Vec3& center, const Vec3& e1, const Vec3& e2, double r0,
                                                  double r1, double a0, double a1);
/// Flat triangle with corners a, b, c.
std::unique_ptr<SurfacePatch> make_triangle(const Vec3& a, const Vec3& b, const Vec3& c);
/// Sphere zone about +z, polar angle in [theta0, theta1].
std::unique_ptr<SurfacePatch> make_sphere_zone(const Vec3& center, double radius, double theta0, double theta1);
/// Torus tube section: major circle in the (e1, e2) plane, major angle in [u0, u1].
std::unique_ptr<SurfacePatch> make_torus_section(const Vec3& center, const Vec3& e1, const Vec3& e2,
                                                 double major_radius, double minor_radius, double u0, double u1);

/**
 * @brief Samples exactly `count` points from a union of patches.
 *
 * A deterministic grid (as dense as fits in `count`) provides the covering
 * radius; the remainder is filled with area-weighted random points.
 * Returns the points and the covering radius of the grid part.
 */
PatchSamples sample_surface(const PatchList& patches, int count, Rng& rng);

}  // namespace certipose
