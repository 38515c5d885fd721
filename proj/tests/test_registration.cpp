#include "doctest.h"
#include "test_support.hpp"

#include "certipose/errors.hpp"
#include "certipose/metrics.hpp"
#include "certipose/models.hpp"
#include "certipose/registration.hpp"

using namespace certipose;
using testsupport::angle_between;

namespace {

Keypoints random_keypoints(std::mt19937_64& rng, int n) { return testsupport::random_cloud(rng, n).matrix(); }

double residual_of(const RigidTransform& t, const Keypoints& y, const Keypoints& b) {
  return (y - t.apply(b)).squaredNorm();
}

// Central differences of the registered pose, written without the library's
// rotation log: the skew part of (R+ - R-) R^T / 2h.
PoseJacobian fd_jacobian(const Keypoints& y, const Keypoints& b, double h) {
  const Mat3 r0 = register_keypoints(y, b).pose.rotation();
  PoseJacobian j(6, 3 * y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    for (int c = 0; c < 3; ++c) {
      Keypoints yp = y, ym = y;
      yp(c, i) += h;
      ym(c, i) -= h;
      const RigidTransform tp = register_keypoints(yp, b).pose, tm = register_keypoints(ym, b).pose;
      const Mat3 d = (tp.rotation() - tm.rotation()) * r0.transpose() / (2.0 * h);
      const Mat3 skew = 0.5 * (d - d.transpose());
      j.block<3, 1>(0, 3 * i + c) = Vec3(skew(2, 1), skew(0, 2), skew(1, 0));
      j.block<3, 1>(3, 3 * i + c) = (tp.translation() - tm.translation()) / (2.0 * h);
    }
  return j;
}

}  // namespace

TEST_CASE("registering keypoints onto themselves gives the identity") {
  std::mt19937_64 rng(1);
  const Keypoints b = random_keypoints(rng, 8);
  const RegistrationResult r = register_keypoints(b, b);
  CHECK((r.pose.rotation() - Mat3::Identity()).norm() < 1e-12);
  CHECK(r.pose.translation().norm() < 1e-12);
  CHECK(r.residual < 1e-20);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("noiseless registration recovers random poses") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const Keypoints b = random_keypoints(rng, 3 + trial % 10);
    const RigidTransform truth = testsupport::random_transform(rng, 2.0);
    const RegistrationResult r = register_keypoints(truth.apply(b), b);
    CHECK(angle_between(r.pose.rotation(), truth.rotation()) < 1e-9);
    CHECK((r.pose.translation() - truth.translation()).norm() < 1e-9);
  }
}

TEST_CASE("noisy registration agrees with the quaternion solution and is optimal") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Keypoints b = random_keypoints(rng, 6);
    Keypoints y = testsupport::random_transform(rng).apply(b);
    for (Eigen::Index i = 0; i < y.cols(); ++i) y.col(i) += testsupport::gaussian_vec(rng, 0.2);
    const RegistrationResult r = register_keypoints(y, b);
    const RigidTransform horn = testsupport::horn_registration(y, b);
    CHECK(angle_between(r.pose.rotation(), horn.rotation()) < 1e-8);
    CHECK((r.pose.translation() - horn.translation()).norm() < 1e-8);
    CHECK(r.residual == doctest::Approx(residual_of(r.pose, y, b)).epsilon(1e-10));
    for (int k = 0; k < 20; ++k) {
      const RigidTransform nudge(rotation_exp(testsupport::gaussian_vec(rng, 0.05)), testsupport::gaussian_vec(rng, 0.05));
      CHECK(residual_of(nudge * r.pose, y, b) >= r.residual - 1e-12);
    }
  }
}

TEST_CASE("registration always returns a proper rotation, even for mirrored keypoints") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Keypoints b = random_keypoints(rng, 5);
    Keypoints y = b;
    y.row(0) *= -1.0;
    const RegistrationResult r = register_keypoints(y, b);
    CHECK(r.pose.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(is_rotation(r.pose.rotation()));
  }
}

TEST_CASE("registration is equivariant under rigid motions of the targets") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Keypoints b = random_keypoints(rng, 7);
    Keypoints y = random_keypoints(rng, 7);
    const RigidTransform g = testsupport::random_transform(rng);
    const RigidTransform t = register_keypoints(y, b).pose;
    const RigidTransform tg = register_keypoints(g.apply(y), b).pose;
    CHECK(angle_between(tg.rotation(), (g * t).rotation()) < 1e-9);
    CHECK((tg.translation() - (g * t).translation()).norm() < 1e-9);
  }
}

TEST_CASE("collinear keypoints are flagged degenerate and too few pairs are rejected") {
  Keypoints line(3, 4);
  line << 0, 1, 2, 3, 0, 0, 0, 0, 0, 0, 0, 0;
  const RegistrationResult r = register_keypoints(line, line);
  CHECK(r.degenerate);
  CHECK(is_rotation(r.pose.rotation()));
  CHECK_THROWS_AS(register_keypoints(Keypoints::Zero(3, 2), Keypoints::Zero(3, 2)), InsufficientCorrespondencesError);
  CHECK_THROWS_AS(register_keypoints(Keypoints::Zero(3, 4), Keypoints::Zero(3, 5)), std::invalid_argument);
}

TEST_CASE("analytic pose differential matches central differences") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Keypoints b = random_keypoints(rng, 4 + trial % 6);
    Keypoints y = testsupport::random_transform(rng).apply(b);
    for (Eigen::Index i = 0; i < y.cols(); ++i) y.col(i) += testsupport::gaussian_vec(rng, 0.3);
    const RegistrationDerivative d = registration_gradient(y, b);
    CHECK_FALSE(d.used_finite_differences);
    const PoseJacobian fd = fd_jacobian(y, b, 1e-6);
    CHECK((d.jacobian - fd).norm() < 1e-4 * std::max(1.0, fd.norm()));
    CHECK((registration_gradient_fd(y, b, 1e-6) - fd).norm() < 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("shifting every keypoint moves only the translation") {
  std::mt19937_64 rng(7);
  const Keypoints b = random_keypoints(rng, 6);
  const Keypoints y = random_keypoints(rng, 6);
  const PoseJacobian j = registration_gradient(y, b).jacobian;
  const Vec3 v(0.3, -1.1, 0.7);
  Eigen::VectorXd shift(3 * y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i) shift.segment<3>(3 * i) = v;
  const Eigen::Matrix<double, 6, 1> out = j * shift;
  CHECK(out.head<3>().norm() < 1e-10);
  CHECK((out.tail<3>() - v).norm() < 1e-10);
}

TEST_CASE("posed outputs apply one pose to keypoints and dense cloud") {
  const ObjectModel m = builtin_model(ModelKind::box, 500, 8, 0);
  std::mt19937_64 rng(8);
  const RigidTransform t = testsupport::random_transform(rng);
  const PosedOutputs out = posed_outputs(t, m);
  CHECK((out.keypoints - t.apply(m.keypoints())).norm() < 1e-12);
  CHECK(out.cloud == t.apply(m.dense()));
  const PosedOutputs again = posed_outputs(register_keypoints(out.keypoints, m.keypoints()).pose, m);
  CHECK((again.keypoints - out.keypoints).norm() < 1e-9);
}

TEST_CASE("icp keeps the true pose and descends from a nearby one") {
  const ObjectModel m = builtin_model(ModelKind::box, 1000, 8, 0);
  std::mt19937_64 rng(9);
  const RigidTransform truth = testsupport::random_transform(rng);
  const PointCloud x = truth.apply(m.dense());

  const IcpResult fixed = icp_refine(x, m, truth, 50, 1e-10);
  CHECK(angle_between(fixed.pose.rotation(), truth.rotation()) < 1e-9);
  CHECK(fixed.objective_trace.front() < 1e-20);

  const RigidTransform start = RigidTransform(rotation_exp(Vec3(0.01, -0.008, 0.006)), Vec3(0.006, 0.004, -0.004)) * truth;
  const IcpResult r = icp_refine(x, m, start, 100, 1e-10);
  CHECK(angle_between(r.pose.rotation(), truth.rotation()) < 1e-6);
  CHECK((r.pose.translation() - truth.translation()).norm() < 1e-6);
  for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
    CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] + 1e-15);
  CHECK(r.objective_trace.back() == doctest::Approx(half_chamfer(x, r.pose.apply(m.dense()))).epsilon(1e-9));
}
