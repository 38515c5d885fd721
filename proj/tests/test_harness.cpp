#include "doctest.h"
#include "test_support.hpp"

#include "certipose/harness.hpp"

#include <numbers>
#include <sstream>

using namespace certipose;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

ExperimentConfig small_experiment() {
  ExperimentConfig cfg;
  cfg.num_dense = 1000;
  cfg.sigmas = {0.0, 0.5, 1.0};
  cfg.trials = 8;
  cfg.num_points = 200;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("rotation error of constructed rotations") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = testsupport::random_rotation(rng);
    CHECK(rotation_error(r, r) < 1e-7);
    const Mat3 turned = axis_rotation(Vec3::UnitX(), std::numbers::pi / 3) * r;
    CHECK(rotation_error(r, turned) == doctest::Approx(std::numbers::pi / 3).epsilon(1e-9));
  }
  Mat3 over = Mat3::Identity();
  over(0, 0) += 1e-15;
  over(1, 1) += 1e-15;
  const double e = rotation_error(over, Mat3::Identity());
  CHECK(std::isfinite(e));
  CHECK(e < 1e-6);
  CHECK(translation_error(Vec3(1, 2, 3), Vec3(1, 2, 5), 4.0) == doctest::Approx(0.5));
}

TEST_CASE("ADD-S score and AUC step functions") {
  const std::vector<double> zeros(10, 0.0);
  auto [s0, a0] = adds_threshold_and_auc(zeros, 0.05, 0.1);
  CHECK(s0 == 100.0);
  CHECK(a0 == 100.0);
  const std::vector<double> far(10, 0.2);
  auto [s1, a1] = adds_threshold_and_auc(far, 0.05, 0.1);
  CHECK(s1 == 0.0);
  CHECK(a1 == 0.0);
  auto [s2, a2] = adds_threshold_and_auc({0.05}, 0.05, 0.1);
  CHECK(std::abs(a2 - 50.0) <= 1.0);
  CHECK((s2 == 0.0 || s2 == 100.0));
  auto [s3, a3] = adds_threshold_and_auc({0.0, 0.2, 0.01, 0.04}, 0.05, 0.1);
  CHECK(s3 == 75.0);
  CHECK(a3 > 25.0);
  CHECK(a3 < 75.0);
}

TEST_CASE("relative certificate thresholds scale with the diameter") {
  const CertificateConfig c = RelativeCertificates{}.absolute(2.0, 0.01);
  CHECK(c.eps_oc == doctest::Approx(0.0632));
  CHECK(c.delta_nd == doctest::Approx(0.16));
  CHECK(c.indicator_slack == doctest::Approx(0.3));
  CHECK(c.noise_bound == 0.01);
}

TEST_CASE("perturbation sweep rows and aggregates") {
  const ExperimentConfig cfg = small_experiment();
  const ObjectModel model = experiment_model(cfg);
  const CorrectorAnalysis a = corrector_analysis(model, cfg);
  CHECK(a.rows.size() + 2 * static_cast<std::size_t>(a.skipped) == 3 * 8 * 2);
  for (const EvalRow& r : a.rows) {
    CHECK(r.rotation_error >= 0.0);
    CHECK(r.rotation_error <= std::numbers::pi + 1e-12);
    CHECK(r.adds >= 0.0);
    CHECK(r.adds <= r.hausdorff + 1e-12);
  }
  // Noise-free detections register exactly and pass the certificate.
  for (const EvalRow& r : a.rows)
    if (r.sigma == 0.0) {
      CHECK(r.rotation_error < 1e-3);
      CHECK(r.oc);
    }
  // Aggregates recomputed from the rows.
  for (const Aggregate& g : a.aggregates) {
    std::vector<double> rot, trans;
    int not_oc = 0;
    for (const EvalRow& r : a.rows) {
      if (r.sigma != g.sigma) continue;
      const bool pick = (g.subset == "naive" && r.method == Method::naive) ||
                        (g.subset == "corrector" && r.method == Method::corrector) ||
                        (g.subset == "corrector_oc" && r.method == Method::corrector && r.oc) ||
                        (g.subset == "corrector_oc_nd" && r.method == Method::corrector && r.oc && r.nd);
      if (!pick) continue;
      rot.push_back(r.rotation_error);
      trans.push_back(r.translation_error);
      not_oc += !r.oc;
    }
    REQUIRE(g.count == static_cast<int>(rot.size()));
    if (rot.size() >= 2) {
      CHECK(g.rotation_mean == doctest::Approx(mean_of(rot)).epsilon(1e-12));
      CHECK(g.rotation_std == doctest::Approx(sample_std(rot)).epsilon(1e-9));
      CHECK(g.translation_mean == doctest::Approx(mean_of(trans)).epsilon(1e-12));
    }
    if (g.count > 0) CHECK(g.fraction_not_oc == doctest::Approx(static_cast<double>(not_oc) / g.count));
  }
}

TEST_CASE("sweep output is byte-identical across worker counts") {
  ExperimentConfig cfg = small_experiment();
  const ObjectModel model = experiment_model(cfg);
  cfg.jobs = 1;
  const CorrectorAnalysis a = corrector_analysis(model, cfg);
  cfg.jobs = 4;
  const CorrectorAnalysis b = corrector_analysis(model, cfg);
  std::ostringstream ra, rb, ga, gb;
  write_rows_csv(ra, a.rows);
  write_rows_csv(rb, b.rows);
  write_aggregates_csv(ga, a.aggregates);
  write_aggregates_csv(gb, b.aggregates);
  CHECK(ra.str() == rb.str());
  CHECK(ga.str() == gb.str());
  CHECK(ra.str().rfind("scene_id,sigma,method,rotation_error,translation_error,adds,hausdorff,oc,nd\n", 0) == 0);
  CHECK(ga.str().rfind("sigma,subset,count,rotation_mean,rotation_std,translation_mean,translation_std,fraction_not_oc\n",
                       0) == 0);
}

TEST_CASE("perfect detections pass oc everywhere and nd wherever the view allows it") {
  const ObjectModel model = builtin_model(ModelKind::box, 1000, 8, 0);
  const std::vector<Scene> data = make_dataset(model, PoseRegime::hard(), 20, 300, 0.0, 2, 4);
  TableConfig cfg;
  cfg.corrector = CorrectorConfig::defaults_for(8);
  cfg.certificates = RelativeCertificates{}.absolute(model.diameter(), 0.0);
  NoisyOracleDetector exact;
  const CertificateTable t = certificate_table(exact, data, model, cfg);
  REQUIRE(t.rows.size() == 3);
  int visible = 0;
  for (const Scene& s : data)
    visible += non_degeneracy(s.gt_keypoints, s.input, model.indicator_sets(), cfg.certificates.delta_nd).nd;
  CHECK(visible >= 15);
  for (const TableRow& r : {t.rows[0], t.rows[1]}) {
    CHECK(r.count == 20);
    CHECK(r.percent == 100.0);
    CHECK(r.adds_score == 100.0);
  }
  CHECK(t.rows[2].count == visible);
  CHECK(t.rows[2].percent == doctest::Approx(100.0 * visible / 20));
  CHECK(t.rows[2].adds_score == 100.0);
  CHECK(t.soundness_violations == 0);
  std::ostringstream out;
  write_table_csv(out, t);
  CHECK(out.str().rfind("subset,count,adds_score,adds_auc,percent\nall,20,", 0) == 0);
}

TEST_CASE("without indicator sets the nd row repeats the oc row") {
  const ObjectModel full = builtin_model(ModelKind::box, 1000, 8, 0);
  const ObjectModel bare("bare", full.dense(), full.keypoints(), full.diameter(), {}, full.sampling_slack());
  const std::vector<Scene> data = make_dataset(bare, PoseRegime::hard(), 30, 300, 0.0, 3, 4);
  TableConfig cfg;
  cfg.corrector = CorrectorConfig::defaults_for(8);
  cfg.certificates = RelativeCertificates{}.absolute(bare.diameter(), 0.0);
  NoisyOracleDetector noisy;
  noisy.perturbation.sigma = 0.7;
  const CertificateTable t = certificate_table(noisy, data, bare, cfg);
  CHECK(t.rows[1].count == t.rows[2].count);
  CHECK(t.rows[1].adds_score == t.rows[2].adds_score);
  CHECK(t.rows[1].adds_auc == t.rows[2].adds_auc);
  CHECK(t.rows[1].percent == t.rows[2].percent);
  CHECK(t.rows[1].count < 30);
}

TEST_CASE("handle view dataset hides the handle in the requested share") {
  const ObjectModel mug = builtin_model(ModelKind::mug_like, 5000, builtin_landmark_count(ModelKind::mug_like), 0);
  const std::vector<Scene> data = handle_view_dataset(mug, 20, 0.4, 2000, 0.0, 6);
  REQUIRE(data.size() == 20);
  int hidden = 0;
  for (const Scene& s : data) {
    const Vec3 local = s.gt_pose.rotation().transpose() * s.view_direction;
    const double nearest = std::sqrt(testsupport::brute_nearest(s.gt_keypoints.col(kMugHandleKeypoint), s.input));
    if (local.x() > 0.0) {
      ++hidden;
      CHECK(nearest > 0.08 * mug.diameter());
    } else {
      CHECK(nearest < 0.08 * mug.diameter());
    }
  }
  CHECK(hidden == 8);
  CHECK_THROWS_AS(handle_view_dataset(mug, 5, 1.5, 100, 0.0, 0), std::invalid_argument);
}
