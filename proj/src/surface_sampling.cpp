#include "certipose/surface_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace certipose {
namespace {

constexpr double kPi = std::numbers::pi;

int steps_for(double length, double spacing, int minimum) {
  return std::max(minimum, static_cast<int>(std::ceil(length / spacing - 1e-12)));
}

class Rectangle final : public SurfacePatch {
 public:
  Rectangle(const Vec3& origin, const Vec3& eu, const Vec3& ev) : origin_(origin), eu_(eu), ev_(ev) {}

  double area() const override { return eu_.cross(ev_).norm(); }

  PatchSamples grid(double spacing) const override {
    const int su = steps_for(eu_.norm(), spacing, 1);
    const int sv = steps_for(ev_.norm(), spacing, 1);
    PatchSamples out;
    out.points.reserve(static_cast<std::size_t>((su + 1) * (sv + 1)));
    for (int i = 0; i <= su; ++i)
      for (int j = 0; j <= sv; ++j)
        out.points.push_back(origin_ + (double(i) / su) * eu_ + (double(j) / sv) * ev_);
    const double du = eu_.norm() / su;
    const double dv = ev_.norm() / sv;
    out.slack = 0.5 * std::hypot(du, dv);
    return out;
  }

  Vec3 random_point(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = u(rng);
    const double b = u(rng);
    return origin_ + a * eu_ + b * ev_;
  }

 private:
  Vec3 origin_, eu_, ev_;
};

class CylinderSide final : public SurfacePatch {
 public:
  CylinderSide(const Vec3& base, double radius, double height) : base_(base), radius_(radius), height_(height) {}

  double area() const override { return 2.0 * kPi * radius_ * height_; }

  PatchSamples grid(double spacing) const override {
    const int sz = steps_for(height_, spacing, 1);
    const int k = steps_for(2.0 * kPi * radius_, spacing, 3);
    PatchSamples out;
    for (int i = 0; i <= sz; ++i) {
      const double z = height_ * i / sz;
      for (int j = 0; j < k; ++j) {
        const double a = 2.0 * kPi * j / k;
        out.points.push_back(base_ + Vec3(radius_ * std::cos(a), radius_ * std::sin(a), z));
      }
    }
    out.slack = 0.5 * height_ / sz + kPi * radius_ / k;
    return out;
  }

  Vec3 random_point(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = 2.0 * kPi * u(rng);
    const double z = height_ * u(rng);
    return base_ + Vec3(radius_ * std::cos(a), radius_ * std::sin(a), z);
  }

 private:
  Vec3 base_;
  double radius_, height_;
};

class AnnularSector final : public SurfacePatch {
 public:
  AnnularSector(const Vec3& c, const Vec3& e1, const Vec3& e2, double r0, double r1, double a0, double a1)
      : c_(c), e1_(e1.normalized()), e2_(e2.normalized()), r0_(r0), r1_(r1), a0_(a0), a1_(a1) {}

  double area() const override { return 0.5 * (a1_ - a0_) * (r1_ * r1_ - r0_ * r0_); }

  PatchSamples grid(double spacing) const override {
    const bool full = (a1_ - a0_) >= 2.0 * kPi - 1e-12;
    const int sr = steps_for(r1_ - r0_, spacing, 1);
    PatchSamples out;
    double worst_half_arc = 0.0;
    for (int i = 0; i <= sr; ++i) {
      const double rho = r0_ + (r1_ - r0_) * i / sr;
      const double arc = rho * (a1_ - a0_);
      if (rho < 1e-12) {
        out.points.push_back(c_);
        continue;
      }
      if (full) {
        const int k = steps_for(arc, spacing, 3);
        for (int j = 0; j < k; ++j) out.points.push_back(at(rho, a0_ + 2.0 * kPi * j / k));
        worst_half_arc = std::max(worst_half_arc, 0.5 * arc / k);
      } else {
        const int k = steps_for(arc, spacing, 1);
        for (int j = 0; j <= k; ++j) out.points.push_back(at(rho, a0_ + (a1_ - a0_) * j / k));
        worst_half_arc = std::max(worst_half_arc, 0.5 * arc / k);
      }
    }
    out.slack = 0.5 * (r1_ - r0_) / sr + worst_half_arc;
    return out;
  }

  Vec3 random_point(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rho = std::sqrt(r0_ * r0_ + (r1_ * r1_ - r0_ * r0_) * u(rng));
    const double a = a0_ + (a1_ - a0_) * u(rng);
    return at(rho, a);
  }

 private:
  Vec3 at(double rho, double a) const { return c_ + rho * (std::cos(a) * e1_ + std::sin(a) * e2_); }

  Vec3 c_, e1_, e2_;
  double r0_, r1_, a0_, a1_;
};

class Triangle final : public SurfacePatch {
 public:
  Triangle(const Vec3& a, const Vec3& b, const Vec3& c) : a_(a), b_(b), c_(c) {}

  double area() const override { return 0.5 * (b_ - a_).cross(c_ - a_).norm(); }

  PatchSamples grid(double spacing) const override {
    const double ab = (b_ - a_).norm(), bc = (c_ - b_).norm(), ca = (a_ - c_).norm();
    const double longest = std::max({ab, bc, ca});
    const int k = steps_for(longest, spacing, 1);
    PatchSamples out;
    for (int i = 0; i <= k; ++i)
      for (int j = 0; i + j <= k; ++j) out.points.push_back(a_ + (double(i) / k) * (b_ - a_) + (double(j) / k) * (c_ - a_));
    // Every sub-triangle is similar to this one; its vertices cover it
    // within the circumradius, or half the longest edge when obtuse.
    const double l2 = longest * longest;
    const bool obtuse = 2.0 * l2 > ab * ab + bc * bc + ca * ca;
    const double cover = obtuse ? 0.5 * longest : ab * bc * ca / (4.0 * area());
    out.slack = cover / k;
    return out;
  }

  Vec3 random_point(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double s = std::sqrt(u(rng));
    const double t = u(rng);
    return a_ + s * ((1.0 - t) * (b_ - a_) + t * (c_ - a_));
  }

 private:
  Vec3 a_, b_, c_;
};

class SphereZone final : public SurfacePatch {
 public:
  SphereZone(const Vec3& c, double r, double t0, double t1) : c_(c), r_(r), t0_(t0), t1_(t1) {}

  double area() const override { return 2.0 * kPi * r_ * r_ * (std::cos(t0_) - std::cos(t1_)); }

  PatchSamples grid(double spacing) const override {
    const int st = steps_for(r_ * (t1_ - t0_), spacing, 1);
    PatchSamples out;
    double worst_half_arc = 0.0;
    for (int i = 0; i <= st; ++i) {
      const double theta = t0_ + (t1_ - t0_) * i / st;
      const double rho = r_ * std::sin(theta);
      const double z = r_ * std::cos(theta);
      if (rho < 1e-12) {
        out.points.push_back(c_ + Vec3(0.0, 0.0, z));
        continue;
      }
      const int k = steps_for(2.0 * kPi * rho, spacing, 3);
      for (int j = 0; j < k; ++j) {
        const double a = 2.0 * kPi * j / k;
        out.points.push_back(c_ + Vec3(rho * std::cos(a), rho * std::sin(a), z));
      }
      worst_half_arc = std::max(worst_half_arc, kPi * rho / k);
    }
    out.slack = 0.5 * r_ * (t1_ - t0_) / st + worst_half_arc;
    return out;
  }

  Vec3 random_point(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double z = std::cos(t1_) + (std::cos(t0_) - std::cos(t1_)) * u(rng);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = 2.0 * kPi * u(rng);
    return c_ + r_ * Vec3(rho * std::cos(a), rho * std::sin(a), z);
  }

 private:
  Vec3 c_;
  double r_, t0_, t1_;
};

class TorusSection final : public SurfacePatch {
 public:
  TorusSection(const Vec3& c, const Vec3& e1, const Vec3& e2, double major, double minor, double u0, double u1)
      : c_(c), e1_(e1.normalized()), e2_(e2.normalized()), n_(e1_.cross(e2_)), major_(major), minor_(minor),
        u0_(u0), u1_(u1) {}

  double area() const override { return (u1_ - u0_) * major_ * 2.0 * kPi * minor_; }

  PatchSamples grid(double spacing) const override {
    const int su = steps_for((major_ + minor_) * (u1_ - u0_), spacing, 1);
    const int k = steps_for(2.0 * kPi * minor_, spacing, 3);
    PatchSamples out;
    for (int i = 0; i <= su; ++i) {
      const double u = u0_ + (u1_ - u0_) * i / su;
      for (int j = 0; j < k; ++j) out.points.push_back(at(u, 2.0 * kPi * j / k));
    }
    out.slack = 0.5 * (major_ + minor_) * (u1_ - u0_) / su + kPi * minor_ / k;
    return out;
  }

  Vec3 random_point(Rng& rng) const override {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return at(u0_ + (u1_ - u0_) * d(rng), 2.0 * kPi * d(rng));
  }

 private:
  Vec3 at(double u, double v) const {
    const Vec3 radial = std::cos(u) * e1_ + std::sin(u) * e2_;
    return c_ + (major_ + minor_ * std::cos(v)) * radial + minor_ * std::sin(v) * n_;
  }

  Vec3 c_, e1_, e2_, n_;
  double major_, minor_, u0_, u1_;
};

std::size_t grid_count(const PatchList& patches, double spacing) {
  std::size_t total = 0;
  for (const auto& p : patches) total += p->grid(spacing).points.size();
  return total;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::unique_ptr<SurfacePatch> make_rectangle(const Vec3& origin, const Vec3& edge_u, const Vec3& edge_v) {
  return std::make_unique<Rectangle>(origin, edge_u, edge_v);
}

void add_box_faces(PatchList& patches, const Vec3& lo, const Vec3& hi) {
  const Vec3 ex(hi.x() - lo.x(), 0, 0), ey(0, hi.y() - lo.y(), 0), ez(0, 0, hi.z() - lo.z());
  patches.push_back(make_rectangle(lo, ey, ez));
  patches.push_back(make_rectangle(lo + ex, ey, ez));
  patches.push_back(make_rectangle(lo, ex, ez));
  patches.push_back(make_rectangle(lo + ey, ex, ez));
  patches.push_back(make_rectangle(lo, ex, ey));
  patches.push_back(make_rectangle(lo + ez, ex, ey));
}

std::unique_ptr<SurfacePatch> make_cylinder_side(const Vec3& base_center, double radius, double height) {
  return std::make_unique<CylinderSide>(base_center, radius, height);
}

std::unique_ptr<SurfacePatch> make_annular_sector(const Vec3& center, const Vec3& e1, const Vec3& e2, double r0,
                                                  double r1, double a0, double a1) {
  return std::make_unique<AnnularSector>(center, e1, e2, r0, r1, a0, a1);
}

std::unique_ptr<SurfacePatch> make_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
  return std::make_unique<Triangle>(a, b, c);
}

std::unique_ptr<SurfacePatch> make_sphere_zone(const Vec3& center, double radius, double theta0, double theta1) {
  return std::make_unique<SphereZone>(center, radius, theta0, theta1);
}

std::unique_ptr<SurfacePatch> make_torus_section(const Vec3& center, const Vec3& e1, const Vec3& e2,
                                                 double major_radius, double minor_radius, double u0, double u1) {
  return std::make_unique<TorusSection>(center, e1, e2, major_radius, minor_radius, u0, u1);
}

PatchSamples sample_surface(const PatchList& patches, int count, Rng& rng) {
  if (patches.empty()) throw std::invalid_argument("sample_surface: no patches");
  double area = 0.0;
  for (const auto& p : patches) area += p->area();

  // Largest grid that fits in the budget: bracket then bisect on spacing.
  double hi = std::sqrt(area / std::max(count, 1));
  for (int grow = 0; grid_count(patches, hi) > static_cast<std::size_t>(count); ++grow) {
    if (grow > 200) throw std::invalid_argument("sample_surface: point budget too small for this surface");
    hi *= 1.5;
  }
  double lo = hi;
  while (lo > 1e-9 * hi && grid_count(patches, lo) <= static_cast<std::size_t>(count)) lo /= 1.5;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (grid_count(patches, mid) <= static_cast<std::size_t>(count))
      hi = mid;
    else
      lo = mid;
  }

  PatchSamples out;
  for (const auto& p : patches) {
    PatchSamples g = p->grid(hi);
    out.points.insert(out.points.end(), g.points.begin(), g.points.end());
    out.slack = std::max(out.slack, g.slack);
  }

  std::vector<double> weights;
  for (const auto& p : patches) weights.push_back(p->area());
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  while (out.points.size() < static_cast<std::size_t>(count)) out.points.push_back(patches[pick(rng)]->random_point(rng));
  return out;
}

}  // namespace certipose
