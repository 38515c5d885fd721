#pragma once

#include "certipose/certificates.hpp"
#include "certipose/corrector.hpp"
#include "certipose/detector.hpp"
#include "certipose/models.hpp"
#include "certipose/selftrain.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace certipose {

/// Angular distance between two rotations, in radians.
double rotation_error(const Mat3& estimate, const Mat3& truth);
/// ||t_est - t_true|| / diameter.
double translation_error(const Vec3& estimate, const Vec3& truth, double diameter);

/// (100 * fraction below `threshold`, 100 * mean fraction below each of
/// the 100 thresholds k * max_threshold / 100, k = 1..100).
std::pair<double, double> adds_threshold_and_auc(const std::vector<double>& adds, double threshold,
                                                 double max_threshold);

/// Certificate thresholds expressed as multiples of the model diameter.
struct RelativeCertificates {
  double eps_oc = 0.0316;
  double delta_nd = 0.08;
  double indicator_slack = 0.15;
  CertificateConfig absolute(double diameter, double noise_bound) const;
};

struct ExperimentConfig {
  ModelKind model = ModelKind::box;
  int num_dense = 5000;
  int num_keypoints = 8;
  double model_scale = 1.0;
  std::vector<double> sigmas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int trials = 200;
  PoseRegime regime = PoseRegime::hard();
  int num_points = 500;
  double noise_bound = 0.0;      ///< multiple of the diameter
  double perturbed_fraction = 0.8;
  double adds_threshold = 0.05;  ///< multiple of the diameter
  double auc_max = 0.10;         ///< multiple of the diameter
  RelativeCertificates certificates;
  CorrectorConfig corrector = CorrectorConfig::defaults_for(8);
  std::uint64_t seed = 0;
  int jobs = 0;
  void validate() const;
};

enum class Method { naive, corrector };
std::string to_string(Method m);

/// One method applied to one scene. Errors and distances are relative to the diameter.
struct EvalRow {
  int scene_id = 0;
  double sigma = 0.0;
  Method method = Method::naive;
  double rotation_error = 0.0;     ///< radians
  double translation_error = 0.0;  ///< fraction of d
  double adds = 0.0;               ///< fraction of d
  double hausdorff = 0.0;          ///< fraction of d, against ground truth
  bool oc = false;
  bool nd = false;
};

/// Mean and sample standard deviation of the errors of one (sigma, subset) cell.
struct Aggregate {
  double sigma = 0.0;
  std::string subset;  ///< naive | corrector | corrector_oc | corrector_oc_nd
  int count = 0;
  double rotation_mean = 0.0, rotation_std = 0.0;
  double translation_mean = 0.0, translation_std = 0.0;
  double fraction_not_oc = 0.0;
};

struct CorrectorAnalysis {
  std::vector<EvalRow> rows;  ///< ordered by sigma, trial, method
  std::vector<Aggregate> aggregates;
  int skipped = 0;            ///< degenerate views that could not be resampled
};

ObjectModel experiment_model(const ExperimentConfig& cfg);

/// Keypoint perturbation sweep: naive registration versus corrector on
/// `trials` random scenes per sigma.
CorrectorAnalysis corrector_analysis(const ObjectModel& model, const ExperimentConfig& cfg);

std::vector<Aggregate> aggregate(const std::vector<EvalRow>& rows, const std::vector<double>& sigmas);

void write_rows_csv(std::ostream& out, const std::vector<EvalRow>& rows);
void write_aggregates_csv(std::ostream& out, const std::vector<Aggregate>& aggregates);

struct TableRow {
  std::string label;  ///< all | oc | oc_nd
  int count = 0;
  double adds_score = 0.0;
  double adds_auc = 0.0;
  double percent = 0.0;
};

struct CertificateTable {
  std::vector<TableRow> rows;     ///< all, oc, oc_nd
  std::vector<EvalRow> scenes;    ///< per-scene pipeline rows (method corrector)
  int soundness_violations = 0;   ///< certified scenes with Hausdorff above eps_oc + eps_w + 2 eps_s
};

struct TableConfig {
  CorrectorConfig corrector;
  CertificateConfig certificates;
  double adds_threshold = 0.05;  ///< multiple of the diameter
  double auc_max = 0.10;
  std::uint64_t seed = 0;
  int jobs = 0;
};

/// Pipeline evaluated on a dataset, summarized without filtering, with oc,
/// and with oc and nd.
CertificateTable certificate_table(const Detector& detector, const std::vector<Scene>& dataset,
                                   const ObjectModel& model, const TableConfig& cfg);

void write_table_csv(std::ostream& out, const CertificateTable& table);

/// Views of a handled model (mug_like) with the handle hidden behind the
/// body in a `occluded_fraction` share of the scenes. Poses are random.
std::vector<Scene> handle_view_dataset(const ObjectModel& model, int count, double occluded_fraction, int num_points,
                                       double noise_bound, std::uint64_t seed);

struct GradientCheckReport {
  double correction_jacobian_error = 0.0;    ///< max |J + I| of the solved correction
  double registration_jacobian_error = 0.0;  ///< max |analytic - central difference|
  double objective_gradient_error = 0.0;     ///< max relative error of the corrector gradient
};

/// Finite-difference checks of the correction Jacobian (builtin box, N = 6,
/// m = 500, solved to gradient tolerance 1e-10) and of the registration
/// and corrector-objective derivatives on random instances.
GradientCheckReport run_gradient_checks(std::uint64_t seed);

}  // namespace certipose
