#include "doctest.h"
#include "test_support.hpp"

#include "certipose/corrector.hpp"
#include "certipose/errors.hpp"
#include "certipose/models.hpp"

#include <cmath>

using namespace certipose;

namespace {

const ObjectModel& box() {
  static const ObjectModel m = builtin_model(ModelKind::box, 1000, 8, 0);
  return m;
}

// Objective rebuilt from the quaternion registration and exhaustive nearest neighbours.
double oracle_objective(const Keypoints& dy, const Keypoints& detected, const PointCloud& x, const ObjectModel& m,
                        double gamma) {
  const Keypoints y = detected + dy;
  const RigidTransform t = testsupport::horn_registration(y, m.keypoints());
  return testsupport::brute_half_chamfer(x, t.apply(m.dense())) + gamma * (y - t.apply(m.keypoints())).squaredNorm();
}

Keypoints perturbed(const Scene& s, double sigma, std::uint64_t seed) {
  PerturbationConfig p;
  p.sigma = sigma;
  p.seed = seed;
  return perturb_keypoints(s.gt_keypoints, box().diameter(), p);
}

}  // namespace

TEST_CASE("objective matches an independent evaluation") {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::hard(), 200, 0.01 * box().diameter(), seed);
    const Keypoints y = perturbed(s, 0.3, seed);
    Keypoints dy(3, 8);
    for (int i = 0; i < 8; ++i) dy.col(i) = testsupport::gaussian_vec(rng, 0.05);
    const double gamma = 1.25;
    CHECK(corrector_objective(dy, y, s.input, box(), gamma) ==
          doctest::Approx(oracle_objective(dy, y, s.input, box(), gamma)).epsilon(1e-9));
  }
}

TEST_CASE("objective vanishes at the true keypoints of a complete noiseless cloud") {
  std::mt19937_64 rng(2);
  const RigidTransform t = testsupport::random_transform(rng);
  const PointCloud x = t.apply(box().dense());
  const Keypoints y = t.apply(box().keypoints());
  CHECK(corrector_objective(Keypoints::Zero(3, 8), y, x, box(), 1.25) < 1e-20);
}

TEST_CASE("three keypoint instance worked by hand") {
  Keypoints b(3, 3);
  b << 1, -0.5, -0.5, 0, std::sqrt(3.0) / 2, -std::sqrt(3.0) / 2, 0, 0, 0;
  Eigen::Matrix3Xd dense(3, 4);
  dense << b, Vec3::Zero();
  const ObjectModel tri("triangle", PointCloud(dense), b, std::sqrt(3.0), {}, 0.0);
  Eigen::Matrix3Xd x(3, 2);
  x << b.col(0), Vec3(0, 0, 1);
  // Doubling a centred triangle keeps R = I and t = 0, leaving each vertex
  // off by |b_i| = 1. The second input point is nearest the centre at
  // distance 1, so the half-Chamfer term is (0 + 1) / 2.
  const double f = corrector_objective(Keypoints::Zero(3, 3), 2.0 * b, PointCloud(x), tri, 0.5);
  CHECK(f == doctest::Approx(0.5 + 0.5 * 3.0).epsilon(1e-12));
  CHECK(corrector_objective(-b, 2.0 * b, PointCloud(x), tri, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("objective is invariant under a common rigid motion") {
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::hard(), 200, 0.0, seed);
    const Keypoints y = perturbed(s, 0.5, seed);
    Keypoints dy(3, 8);
    for (int i = 0; i < 8; ++i) dy.col(i) = testsupport::gaussian_vec(rng, 0.05);
    const RigidTransform g = testsupport::random_transform(rng);
    const double a = corrector_objective(dy, y, s.input, box(), 1.25);
    const double b = corrector_objective(g.rotation() * dy, g.apply(y), g.apply(s.input), box(), 1.25);
    CHECK(b == doctest::Approx(a).epsilon(1e-9));
  }
}

TEST_CASE("analytic gradient matches central differences of the objective") {
  std::mt19937_64 rng(4);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::hard(), 300, 0.01 * box().diameter(), seed);
    const Keypoints y = perturbed(s, 0.4, seed);
    const CorrectorProblem p(y, s.input, box(), 1.25);
    Keypoints dy(3, 8);
    for (int i = 0; i < 8; ++i) dy.col(i) = testsupport::gaussian_vec(rng, 0.03);
    Keypoints g;
    p.gradient(dy, g);
    // Independent difference quotient on the oracle objective.
    Keypoints fd(3, 8);
    const double h = 1e-7;
    for (int i = 0; i < 8; ++i)
      for (int c = 0; c < 3; ++c) {
        Keypoints up = dy, dn = dy;
        up(c, i) += h;
        dn(c, i) -= h;
        fd(c, i) = (oracle_objective(up, y, s.input, box(), 1.25) - oracle_objective(dn, y, s.input, box(), 1.25)) / (2 * h);
      }
    CHECK((g - fd).norm() <= 1e-3 * std::max(1.0, fd.norm()));
    Keypoints lib_fd;
    p.gradient_fd(dy, lib_fd, h);
    CHECK((lib_fd - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("gauss-newton linearization is consistent with the gradient") {
  const Scene s = generate_scene(box(), PoseRegime::easy(), 300, 0.0, 5);
  const Keypoints y = perturbed(s, 0.3, 5);
  const CorrectorProblem p(y, s.input, box(), 1.25);
  const Keypoints dy = Keypoints::Constant(3, 8, 0.01);
  const CorrectorProblem::Linearization lin = p.linearize(dy);
  Keypoints g;
  const double f = p.gradient(dy, g);
  CHECK(lin.objective == doctest::Approx(f).epsilon(1e-12));
  const Eigen::Map<const Eigen::VectorXd> gv(g.data(), g.size());
  CHECK((2.0 * lin.half_gradient - gv).norm() < 1e-9 * std::max(1.0, gv.norm()));
  CHECK((lin.normal - lin.normal.transpose()).norm() < 1e-12);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(lin.normal).eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("solver descends and keeps the best iterate") {
  for (CorrectorSolver solver : {CorrectorSolver::constant_step_gd, CorrectorSolver::trust_region}) {
    CorrectorConfig cfg = CorrectorConfig::defaults_for(8);
    cfg.solver = solver;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Scene s = generate_scene(box(), PoseRegime::hard(), 300, 0.01 * box().diameter(), seed);
      const Keypoints y = perturbed(s, 0.4, seed);
      const CorrectorResult r = solve(y, s.input, box(), cfg);
      REQUIRE_FALSE(r.objective_trace.empty());
      CHECK(r.objective_trace.front() == doctest::Approx(r.initial_objective));
      for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
        CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] + 1e-12);
      CHECK(r.final_objective <= r.initial_objective);
      CHECK(r.final_objective == doctest::Approx(corrector_objective(r.correction, y, s.input, box(), cfg.gamma)));
      CHECK((r.corrected - (y + r.correction)).norm() < 1e-12);
      CHECK(r.converged == (r.gradient_norm <= cfg.grad_tol));
    }
  }
}

TEST_CASE("exact detections need almost no correction") {
  const CorrectorConfig cfg = CorrectorConfig::defaults_for(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::hard(), 300, 0.0, seed);
    const CorrectorResult r = solve(s.gt_keypoints, s.input, box(), cfg);
    CHECK(r.correction.cwiseAbs().maxCoeff() < 1e-3 * box().diameter());
    CHECK(r.initial_objective < 1e-3 * box().diameter() * box().diameter());
  }
}

TEST_CASE("trust region reaches tight gradient tolerances") {
  CorrectorConfig cfg = CorrectorConfig::defaults_for(8);
  cfg.solver = CorrectorSolver::trust_region;
  cfg.grad_tol = 1e-10;
  cfg.max_iters = 500;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::hard(), 300, 0.0, 40 + seed);
    const CorrectorResult r = solve(perturbed(s, 0.2, seed), s.input, box(), cfg);
    CHECK(r.converged);
    CHECK(r.gradient_norm <= 1e-10);
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      CHECK(r.objective_trace[k] <= r.objective_trace[k - 1]);
  }
}

TEST_CASE("both solvers reach comparable objectives") {
  CorrectorConfig gd = CorrectorConfig::defaults_for(8);
  gd.max_iters = 3000;
  gd.grad_tol = 1e-8;
  CorrectorConfig tr = gd;
  tr.solver = CorrectorSolver::trust_region;
  double sum_gd = 0.0, sum_tr = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::easy(), 300, 0.01 * box().diameter(), seed);
    const Keypoints y = perturbed(s, 0.2, seed);
    sum_gd += solve(y, s.input, box(), gd).final_objective;
    sum_tr += solve(y, s.input, box(), tr).final_objective;
  }
  CHECK(std::abs(sum_gd - sum_tr) <= 0.05 * std::max(sum_gd, sum_tr));
}

TEST_CASE("correction beats naive registration on heavily perturbed detections") {
  const CorrectorConfig cfg = CorrectorConfig::defaults_for(8);
  const ObjectModel& m = box();
  int better = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Scene s = generate_scene(m, PoseRegime::hard(), 300, 0.01 * m.diameter(), 1000 + seed);
    const Keypoints y = perturbed(s, 0.8, seed);
    const PointCloud truth = s.gt_pose.apply(m.dense());
    const RigidTransform naive = register_keypoints(y, m.keypoints()).pose;
    const RigidTransform corrected = solve(y, s.input, m, cfg).pose;
    better += testsupport::brute_hausdorff(corrected.apply(m.dense()), truth) <
              testsupport::brute_hausdorff(naive.apply(m.dense()), truth);
  }
  CHECK(better >= 160);
}

TEST_CASE("batch solving matches sequential solving and isolates failures") {
  const CorrectorConfig cfg = CorrectorConfig::defaults_for(8);
  std::vector<CorrectorInstance> batch;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Scene s = generate_scene(box(), PoseRegime::hard(), 200, 0.0, seed);
    batch.push_back({perturbed(s, 0.4, seed), s.input});
  }
  batch.push_back({Keypoints::Zero(3, 5), batch[0].input});
  const std::vector<BatchOutcome> out = solve_batch(batch, box(), cfg, 4);
  REQUIRE(out.size() == batch.size());
  for (std::size_t i = 0; i + 1 < batch.size(); ++i) {
    REQUIRE(out[i].result.has_value());
    const CorrectorResult seq = solve(batch[i].detected, batch[i].input, box(), cfg);
    CHECK(out[i].result->correction == seq.correction);
    CHECK(out[i].result->iterations == seq.iterations);
  }
  CHECK_FALSE(out.back().result.has_value());
  CHECK_FALSE(out.back().error.empty());

  std::vector<CorrectorInstance> same(16, batch[1]);
  const std::vector<BatchOutcome> rep = solve_batch(same, box(), cfg, 8);
  for (const BatchOutcome& o : rep) CHECK(o.result->correction == rep[0].result->correction);
}

TEST_CASE("backward rule negates the upstream gradient") {
  const Scene s = generate_scene(box(), PoseRegime::easy(), 200, 0.0, 1);
  const CorrectorResult r = solve(s.gt_keypoints, s.input, box(), CorrectorConfig::defaults_for(8));
  std::mt19937_64 rng(6);
  Keypoints up(3, 8);
  for (int i = 0; i < 8; ++i) up.col(i) = testsupport::gaussian_vec(rng);
  CHECK(backprop_rule(r, up) == -up);
  CHECK(backprop_rule(r, Keypoints::Zero(3, 8)).isZero());
}

TEST_CASE("corrector settings are validated") {
  const CorrectorConfig d = CorrectorConfig::defaults_for(8);
  CHECK(d.gamma == doctest::Approx(10.0 / 8.0));
  CHECK(d.step_size == doctest::Approx(1.0 / (2.0 * d.gamma)));
  CorrectorConfig bad = d;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = d;
  bad.max_iters = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(parse_corrector_solver(to_string(CorrectorSolver::trust_region)) == CorrectorSolver::trust_region);
  CHECK(parse_gradient_mode(to_string(GradientMode::finite_difference)) == GradientMode::finite_difference);
  CHECK_THROWS_AS(parse_corrector_solver("newton"), std::invalid_argument);
  const Scene s = generate_scene(box(), PoseRegime::easy(), 200, 0.0, 1);
  CHECK_THROWS_AS(solve(Keypoints::Zero(3, 7), s.input, box(), d), std::invalid_argument);
  CHECK_THROWS_AS(solve(s.gt_keypoints, PointCloud(), box(), d), std::invalid_argument);
}
