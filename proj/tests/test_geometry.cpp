#include "doctest.h"
#include "test_support.hpp"

#include "certipose/errors.hpp"
#include "certipose/geometry.hpp"
#include "certipose/metrics.hpp"
#include "certipose/nearest_neighbor.hpp"

#include <numbers>
#include <stdexcept>

using namespace certipose;
using testsupport::random_cloud;
using testsupport::random_transform;

TEST_CASE("identity transform leaves a cloud unchanged") {
  std::mt19937_64 rng(1);
  const PointCloud c = random_cloud(rng, 20);
  CHECK(apply(RigidTransform::identity(), c) == c);
}

TEST_CASE("quarter turn about z maps x onto y") {
  const RigidTransform t(axis_rotation(Vec3::UnitZ(), std::numbers::pi / 2), Vec3::Zero());
  const PointCloud out = apply(t, PointCloud(std::vector<Vec3>{Vec3::UnitX()}));
  CHECK((Vec3(out[0]) - Vec3::UnitY()).norm() < 1e-15);
}

TEST_CASE("applying a transform then its inverse restores the cloud") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const RigidTransform t = random_transform(rng, 3.0);
    const PointCloud c = random_cloud(rng, 30);
    const PointCloud back = apply(invert(t), apply(t, c));
    CHECK((back.matrix() - c.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("composition matches sequential application") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const RigidTransform a = random_transform(rng), b = random_transform(rng);
    const PointCloud c = random_cloud(rng, 10);
    const PointCloud lhs = apply(compose(a, b), c), rhs = apply(a, apply(b, c));
    CHECK((lhs.matrix() - rhs.matrix()).cwiseAbs().maxCoeff() < 1e-12);

    const RigidTransform id1 = compose(a, invert(a)), id2 = compose(invert(a), a);
    CHECK((id1.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(id1.translation().norm() < 1e-12);
    CHECK((id2.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(id2.translation().norm() < 1e-12);

    const RigidTransform left = compose(RigidTransform::identity(), a);
    CHECK(left.rotation() == a.rotation());
    CHECK(left.translation() == a.translation());
  }
  const RigidTransform inv = invert(RigidTransform::identity());
  CHECK(inv.rotation() == Mat3::Identity());
  CHECK(inv.translation() == Vec3::Zero());
}

TEST_CASE("rigid transforms preserve pairwise distances") {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const RigidTransform t = random_transform(rng, 5.0);
    const PointCloud c = random_cloud(rng, 15), out = apply(t, c);
    for (Eigen::Index i = 0; i < c.size(); ++i)
      for (Eigen::Index j = 0; j < c.size(); ++j)
        CHECK(std::abs((out[i] - out[j]).norm() - (c[i] - c[j]).norm()) < 1e-9);
  }
}

TEST_CASE("transform constructor rejects non-rotations") {
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  CHECK_THROWS_AS(RigidTransform(reflection, Vec3::Zero()), InvariantError);
  CHECK_THROWS_AS(RigidTransform(2.0 * Mat3::Identity(), Vec3::Zero()), InvariantError);
  CHECK_THROWS_AS(RigidTransform(Mat3::Identity(), Vec3(0.0, std::nan(""), 0.0)), InvariantError);
  CHECK_NOTHROW(RigidTransform(axis_rotation(Vec3(1, 2, 3), 0.7), Vec3(1, 2, 3)));
}

TEST_CASE("point clouds reject non-finite points") {
  CHECK_THROWS_AS(PointCloud(std::vector<Vec3>{Vec3(0.0, INFINITY, 0.0)}), InvariantError);
}

TEST_CASE("rotation exponential and logarithm are inverse") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(0.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const Vec3 axis = testsupport::gaussian_vec(rng).normalized();
    const Vec3 w = angle(rng) * axis;
    const Mat3 r = rotation_exp(w);
    CHECK(is_rotation(r));
    CHECK((rotation_log(r) - w).norm() < 1e-9);
    CHECK((vee(hat(w)) - w).norm() == 0.0);
    CHECK((hat(w) * axis).norm() < 1e-12);
  }
}

TEST_CASE("nearest rotation projects onto SO(3)") {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const Mat3 r = testsupport::random_rotation(rng);
    const Mat3 noisy = r + 1e-3 * Mat3::Random();
    const Mat3 p = nearest_rotation(noisy);
    CHECK(is_rotation(p));
    CHECK((p - r).norm() < 1e-2);
  }
}

TEST_CASE("half-Chamfer examples") {
  const PointCloud x(std::vector<Vec3>{Vec3::Zero()});
  const PointCloud y(std::vector<Vec3>{Vec3(1, 0, 0), Vec3(3, 0, 0)});
  CHECK(half_chamfer(x, y) == doctest::Approx(1.0).epsilon(1e-15));
  std::mt19937_64 rng(7);
  const PointCloud c = random_cloud(rng, 40);
  CHECK(half_chamfer(c, c) == 0.0);
}

TEST_CASE("one-sided max distance examples") {
  const PointCloud x(std::vector<Vec3>{Vec3::Zero(), Vec3(2, 0, 0)});
  const PointCloud y(std::vector<Vec3>{Vec3::Zero()});
  CHECK(one_sided_max_dist(x, y) == doctest::Approx(2.0).epsilon(1e-15));
  std::mt19937_64 rng(8);
  const PointCloud c = random_cloud(rng, 40);
  CHECK(one_sided_max_dist(c, c) == 0.0);
}

TEST_CASE("one-sided max distance is bounded by the root of n times half-Chamfer") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 200; ++k) {
    const PointCloud x = random_cloud(rng, 1 + k % 37), y = random_cloud(rng, 1 + k % 23);
    const double n = static_cast<double>(x.size());
    CHECK(one_sided_max_dist(x, y) <= std::sqrt(n * half_chamfer(x, y)) * (1.0 + 1e-12));
  }
}

TEST_CASE("Hausdorff examples") {
  const PointCloud u(std::vector<Vec3>{Vec3::Zero()});
  const PointCloud v(std::vector<Vec3>{Vec3::Zero(), Vec3(5, 0, 0)});
  CHECK(hausdorff(u, v) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(hausdorff(v, u) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(hausdorff(u, u) == 0.0);
}

TEST_CASE("Hausdorff is a metric on random triples") {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 300; ++k) {
    const PointCloud a = random_cloud(rng, 5 + k % 11), b = random_cloud(rng, 3 + k % 7), c = random_cloud(rng, 8);
    const double ab = hausdorff(a, b), ba = hausdorff(b, a), bc = hausdorff(b, c), ac = hausdorff(a, c);
    CHECK(ab >= 0.0);
    CHECK(ab == ba);
    CHECK(ac <= ab + bc + 1e-12);
    CHECK(ab > 0.0);
  }
}

TEST_CASE("half-Chamfer vanishes exactly when every point is present") {
  std::mt19937_64 rng(11);
  const PointCloud y = random_cloud(rng, 30);
  Eigen::Matrix3Xd sub(3, 10);
  for (int i = 0; i < 10; ++i) sub.col(i) = y[3 * i];
  CHECK(half_chamfer(PointCloud(sub), y) == 0.0);
  sub(0, 4) += 1e-6;
  CHECK(half_chamfer(PointCloud(sub), y) > 0.0);
}

TEST_CASE("metric kernels reject empty clouds") {
  const PointCloud empty, one(std::vector<Vec3>{Vec3::Zero()});
  CHECK_THROWS_AS(half_chamfer(empty, one), std::invalid_argument);
  CHECK_THROWS_AS(half_chamfer(one, empty), std::invalid_argument);
  CHECK_THROWS_AS(one_sided_max_dist(empty, one), std::invalid_argument);
  CHECK_THROWS_AS(hausdorff(one, empty), std::invalid_argument);
  CHECK_THROWS_AS(add_s(empty, one), std::invalid_argument);
}

TEST_CASE("ADD-S on a hand instance and on identical clouds") {
  const PointCloud a(std::vector<Vec3>{Vec3::Zero(), Vec3(1, 0, 0)});
  const PointCloud b(std::vector<Vec3>{Vec3(0, 1, 0), Vec3(1, 0, 0)});
  // a->b: 1 and 0; b->a: 1 and 0.
  CHECK(add_s(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(add_s(a, a) == 0.0);
}

TEST_CASE("ADD-S is blind to a symmetry of a sampled box") {
  std::vector<Vec3> pts;
  for (int i = -3; i <= 3; ++i)
    for (int j = -2; j <= 2; ++j)
      for (int s : {-1, 1}) {
        pts.emplace_back(0.5 * s, 0.1 * i, 0.1 * j);
        pts.emplace_back(0.1 * i, 0.3 * s, 0.1 * j);
      }
  const PointCloud box(pts);
  std::mt19937_64 rng(12);
  const RigidTransform t = random_transform(rng);
  const RigidTransform flip(axis_rotation(Vec3::UnitX(), std::numbers::pi), Vec3::Zero());
  CHECK(add_s(apply(t, box), apply(compose(t, flip), box)) < 1e-9);
  CHECK(add_s(apply(t, box), apply(compose(t, RigidTransform(axis_rotation(Vec3::UnitZ(), 0.3), Vec3::Zero())), box)) > 1e-3);
}

TEST_CASE("kd-tree agrees with an exhaustive scan") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud ref = random_cloud(rng, 1 + 97 * trial);
    const NearestNeighborIndex index(ref, 1 + trial % 16);
    for (int q = 0; q < 100; ++q) {
      const Vec3 query = testsupport::gaussian_vec(rng, 1.5);
      const Neighbor got = index.nearest(query);
      Eigen::Index best = -1;
      double bd = INFINITY;
      for (Eigen::Index j = 0; j < ref.size(); ++j) {
        const double dd = (ref[j] - query).squaredNorm();
        if (dd < bd) {
          bd = dd;
          best = j;
        }
      }
      CHECK(got.index == best);
      CHECK(got.squared_distance == bd);
    }
  }
}

TEST_CASE("kd-tree breaks ties by lowest reference index") {
  std::vector<Vec3> pts(50, Vec3(1, 1, 1));
  pts.emplace_back(0, 0, 0);
  pts.emplace_back(0, 0, 0);
  const NearestNeighborIndex index{PointCloud(pts), 2};
  CHECK(index.nearest(Vec3(1, 1, 1)).index == 0);
  CHECK(index.nearest(Vec3(0, 0, 0.1)).index == 50);
}

TEST_CASE("indexed metric kernels equal brute-force oracles") {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 100; ++k) {
    const PointCloud x = random_cloud(rng, 1 + k), y = random_cloud(rng, 1 + 2 * k);
    CHECK(half_chamfer(x, y) == doctest::Approx(testsupport::brute_half_chamfer(x, y)).epsilon(1e-14));
    CHECK(half_chamfer(x, NearestNeighborIndex(y)) == doctest::Approx(half_chamfer(x, y)).epsilon(1e-14));
    CHECK(one_sided_max_dist(x, y) == testsupport::brute_one_sided(x, y));
    CHECK(hausdorff(x, y) == testsupport::brute_hausdorff(x, y));
  }
}
