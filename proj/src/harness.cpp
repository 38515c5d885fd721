#include "certipose/harness.hpp"

#include "certipose/errors.hpp"
#include "certipose/metrics.hpp"
#include "certipose/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace certipose {

double rotation_error(const Mat3& estimate, const Mat3& truth) {
  const double c = 0.5 * ((estimate.transpose() * truth).trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double translation_error(const Vec3& estimate, const Vec3& truth, double diameter) {
  return (estimate - truth).norm() / diameter;
}

std::pair<double, double> adds_threshold_and_auc(const std::vector<double>& adds, double threshold,
                                                 double max_threshold) {
  if (adds.empty()) throw std::invalid_argument("adds_threshold_and_auc: no rows");
  auto fraction_below = [&](double t) {
    return static_cast<double>(std::count_if(adds.begin(), adds.end(), [t](double a) { return a < t; })) /
           static_cast<double>(adds.size());
  };
  constexpr int kGrid = 100;
  double auc = 0.0;
  for (int k = 1; k <= kGrid; ++k) auc += fraction_below(max_threshold * k / kGrid);
  return {100.0 * fraction_below(threshold), 100.0 * auc / kGrid};
}

CertificateConfig RelativeCertificates::absolute(double diameter, double noise_bound) const {
  CertificateConfig c;
  c.eps_oc = eps_oc * diameter;
  c.delta_nd = delta_nd * diameter;
  c.indicator_slack = indicator_slack * diameter;
  c.noise_bound = noise_bound;
  return c;
}

void ExperimentConfig::validate() const {
  if (sigmas.empty()) throw std::invalid_argument("sigma grid must be nonempty");
  for (double s : sigmas)
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("sigma values must be finite and >= 0");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (num_points < 1) throw std::invalid_argument("num_points must be >= 1");
  if (!(adds_threshold > 0.0) || !(auc_max > 0.0)) throw std::invalid_argument("ADD-S thresholds must be positive");
  if (!(noise_bound >= 0.0)) throw std::invalid_argument("noise_bound must be >= 0");
  if (!(perturbed_fraction >= 0.0 && perturbed_fraction <= 1.0))
    throw std::invalid_argument("perturbed_fraction must be in [0, 1]");
  regime.validate();
  corrector.validate();
  certificates.absolute(1.0, noise_bound).validate();
}

std::string to_string(Method m) { return m == Method::naive ? "naive" : "corrector"; }

ObjectModel experiment_model(const ExperimentConfig& cfg) {
  return builtin_model(cfg.model, cfg.num_dense, cfg.num_keypoints, cfg.seed, cfg.model_scale);
}

namespace {

double pose_adds(const RigidTransform& estimate, const RigidTransform& truth, const ObjectModel& model) {
  const RigidTransform relative = truth.inverse() * estimate;
  const NearestNeighborIndex& index = model.dense_index();
  auto mean_distance = [&](const RigidTransform& t) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < model.dense().size(); ++i)
      sum += std::sqrt(index.nearest(t.apply(Vec3(model.dense()[i]))).squared_distance);
    return sum / static_cast<double>(model.dense().size());
  };
  return 0.5 * (mean_distance(relative) + mean_distance(relative.inverse()));
}

EvalRow evaluate_pose(int scene_id, double sigma, Method method, const RigidTransform& pose, const Scene& scene,
                      const ObjectModel& model, const CertificateConfig& certs) {
  const double d = model.diameter();
  EvalRow row;
  row.scene_id = scene_id;
  row.sigma = sigma;
  row.method = method;
  row.rotation_error = rotation_error(pose.rotation(), scene.gt_pose.rotation());
  row.translation_error = translation_error(pose.translation(), scene.gt_pose.translation(), d);
  row.adds = pose_adds(pose, scene.gt_pose, model) / d;
  row.hausdorff = pose_hausdorff(pose, scene.gt_pose, model) / d;
  const CertificateResult c = certify(scene.input, model, pose, certs);
  row.oc = c.oc;
  row.nd = c.nd;
  return row;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

CorrectorAnalysis corrector_analysis(const ObjectModel& model, const ExperimentConfig& cfg) {
  cfg.validate();
  const double d = model.diameter();
  const CertificateConfig certs = cfg.certificates.absolute(d, cfg.noise_bound * d);
  const std::size_t trials = static_cast<std::size_t>(cfg.trials);
  const std::size_t cells = cfg.sigmas.size() * trials;
  std::vector<std::optional<std::pair<EvalRow, EvalRow>>> slots(cells);

  parallel_for(cells, cfg.jobs, [&](std::size_t cell) {
    const std::size_t s = cell / trials;
    const int trial = static_cast<int>(cell % trials);
    const double sigma = cfg.sigmas[s];
    // Scenes depend on the trial only, so every sigma sees the same scenes.
    Scene scene;
    try {
      scene = generate_scene(model, cfg.regime, cfg.num_points, cfg.noise_bound * d,
                             mix_seed(cfg.seed, static_cast<std::uint64_t>(trial)));
    } catch (const DegenerateViewError&) {
      return;
    }
    PerturbationConfig pc;
    pc.fraction = cfg.perturbed_fraction;
    pc.sigma = sigma;
    pc.seed = mix_seed(cfg.seed, 1000003ULL * (s + 1) + static_cast<std::uint64_t>(trial));
    const Keypoints detected = perturb_keypoints(scene.gt_keypoints, d, pc);
    const RigidTransform naive = register_keypoints(detected, model.keypoints()).pose;
    EvalRow naive_row = evaluate_pose(trial, sigma, Method::naive, naive, scene, model, certs);
    RigidTransform corrected = naive;
    try {
      corrected = solve(detected, scene.input, model, cfg.corrector).pose;
    } catch (const SolverDivergedError&) {
    }
    EvalRow corrected_row = evaluate_pose(trial, sigma, Method::corrector, corrected, scene, model, certs);
    slots[cell] = std::make_pair(naive_row, corrected_row);
  });

  CorrectorAnalysis out;
  for (auto& slot : slots) {
    if (!slot) {
      ++out.skipped;
      continue;
    }
    out.rows.push_back(slot->first);
    out.rows.push_back(slot->second);
  }
  out.aggregates = aggregate(out.rows, cfg.sigmas);
  return out;
}

std::vector<Aggregate> aggregate(const std::vector<EvalRow>& rows, const std::vector<double>& sigmas) {
  struct Subset {
    const char* name;
    Method method;
    bool need_oc, need_nd;
  };
  const Subset subsets[] = {{"naive", Method::naive, false, false},
                            {"corrector", Method::corrector, false, false},
                            {"corrector_oc", Method::corrector, true, false},
                            {"corrector_oc_nd", Method::corrector, true, true}};
  std::vector<Aggregate> out;
  for (double sigma : sigmas) {
    for (const Subset& sub : subsets) {
      std::vector<double> rot, trans;
      int not_oc = 0;
      for (const EvalRow& r : rows) {
        if (r.sigma != sigma || r.method != sub.method) continue;
        if ((sub.need_oc && !r.oc) || (sub.need_nd && !r.nd)) continue;
        rot.push_back(r.rotation_error);
        trans.push_back(r.translation_error);
        not_oc += r.oc ? 0 : 1;
      }
      Aggregate a;
      a.sigma = sigma;
      a.subset = sub.name;
      a.count = static_cast<int>(rot.size());
      a.rotation_mean = mean_of(rot);
      a.rotation_std = std_of(rot);
      a.translation_mean = mean_of(trans);
      a.translation_std = std_of(trans);
      a.fraction_not_oc = rot.empty() ? 0.0 : static_cast<double>(not_oc) / static_cast<double>(rot.size());
      out.push_back(a);
    }
  }
  return out;
}

void write_rows_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "scene_id,sigma,method,rotation_error,translation_error,adds,hausdorff,oc,nd\n";
  char line[256];
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%s,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.scene_id, r.sigma,
                  to_string(r.method).c_str(), r.rotation_error, r.translation_error, r.adds, r.hausdorff,
                  r.oc ? 1 : 0, r.nd ? 1 : 0);
    out << line;
  }
}

void write_aggregates_csv(std::ostream& out, const std::vector<Aggregate>& aggregates) {
  out << "sigma,subset,count,rotation_mean,rotation_std,translation_mean,translation_std,fraction_not_oc\n";
  char line[256];
  for (const Aggregate& a : aggregates) {
    std::snprintf(line, sizeof(line), "%.17g,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", a.sigma, a.subset.c_str(),
                  a.count, a.rotation_mean, a.rotation_std, a.translation_mean, a.translation_std,
                  a.fraction_not_oc);
    out << line;
  }
}

CertificateTable certificate_table(const Detector& detector, const std::vector<Scene>& dataset,
                                   const ObjectModel& model, const TableConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("certificate_table: empty dataset");
  cfg.certificates.validate();
  const double d = model.diameter();
  std::vector<EvalRow> rows(dataset.size());
  std::vector<char> violation(dataset.size(), 0);
  const double zeta = cfg.certificates.eps_oc + cfg.certificates.noise_bound + 2.0 * model.sampling_slack();

  parallel_for(dataset.size(), cfg.jobs, [&](std::size_t i) {
    const Scene& scene = dataset[i];
    const Keypoints detected = detect(detector, scene, d, mix_seed(cfg.seed, i)).keypoints;
    RigidTransform pose = register_keypoints(detected, model.keypoints()).pose;
    try {
      pose = solve(detected, scene.input, model, cfg.corrector).pose;
    } catch (const SolverDivergedError&) {
    }
    rows[i] = evaluate_pose(static_cast<int>(i), 0.0, Method::corrector, pose, scene, model, cfg.certificates);
    violation[i] = rows[i].oc && rows[i].nd && rows[i].hausdorff * d > zeta;
  });

  CertificateTable table;
  table.scenes = rows;
  table.soundness_violations = static_cast<int>(std::count(violation.begin(), violation.end(), 1));
  struct Filter {
    const char* label;
    bool need_oc, need_nd;
  };
  for (const Filter f : {Filter{"all", false, false}, Filter{"oc", true, false}, Filter{"oc_nd", true, true}}) {
    std::vector<double> adds;
    for (const EvalRow& r : rows)
      if ((!f.need_oc || r.oc) && (!f.need_nd || r.nd)) adds.push_back(r.adds);
    TableRow tr;
    tr.label = f.label;
    tr.count = static_cast<int>(adds.size());
    tr.percent = 100.0 * static_cast<double>(adds.size()) / static_cast<double>(rows.size());
    if (!adds.empty()) std::tie(tr.adds_score, tr.adds_auc) = adds_threshold_and_auc(adds, cfg.adds_threshold, cfg.auc_max);
    table.rows.push_back(tr);
  }
  return table;
}

void write_table_csv(std::ostream& out, const CertificateTable& table) {
  out << "subset,count,adds_score,adds_auc,percent\n";
  char line[160];
  for (const TableRow& r : table.rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%.17g,%.17g,%.17g\n", r.label.c_str(), r.count, r.adds_score,
                  r.adds_auc, r.percent);
    out << line;
  }
}

std::vector<Scene> handle_view_dataset(const ObjectModel& model, int count, double occluded_fraction, int num_points,
                                       double noise_bound, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("handle_view_dataset: count must be >= 1");
  if (!(occluded_fraction >= 0.0 && occluded_fraction <= 1.0))
    throw std::invalid_argument("handle_view_dataset: occluded_fraction must be in [0, 1]");
  const int occluded = static_cast<int>(std::lround(occluded_fraction * count));
  constexpr double kConeHalfAngle = 25.0 * std::numbers::pi / 180.0;
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    // The camera looks along +x (from behind the body) for occluded scenes
    // and along -x (from the handle side) otherwise.
    const Vec3 axis = i < occluded ? Vec3::UnitX() : Vec3(-Vec3::UnitX());
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(i) * 64 + static_cast<std::uint64_t>(attempt));
      Rng rng(s);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double tilt = kConeHalfAngle * std::sqrt(u(rng));
      const double spin = 2.0 * std::numbers::pi * u(rng);
      const Vec3 local_view = (std::cos(tilt) * axis + std::sin(tilt) * (std::cos(spin) * Vec3::UnitY() +
                                                                           std::sin(spin) * Vec3::UnitZ()))
                                  .normalized();
      const RigidTransform pose = random_pose(PoseRegime::hard(), model.diameter(), mix_seed(s, 1));
      try {
        out.push_back(render_depth(model, pose, pose.rotation() * local_view, num_points, noise_bound, mix_seed(s, 2)));
        break;
      } catch (const DegenerateViewError&) {
        if (attempt >= 9) throw;
      }
    }
  }
  return out;
}

GradientCheckReport run_gradient_checks(std::uint64_t seed) {
  GradientCheckReport report;
  const ObjectModel model = builtin_model(ModelKind::box, 500, 6, seed);
  const double d = model.diameter();

  {
    const Scene scene = generate_scene(model, PoseRegime::hard(), 300, 0.0, mix_seed(seed, 1));
    PerturbationConfig pc;
    pc.sigma = 0.2;
    pc.seed = mix_seed(seed, 2);
    const Keypoints detected = perturb_keypoints(scene.gt_keypoints, d, pc);
    CorrectorConfig cfg = CorrectorConfig::defaults_for(model.num_keypoints());
    cfg.solver = CorrectorSolver::trust_region;
    cfg.grad_tol = 1e-10;
    cfg.max_iters = 2000;
    const Eigen::MatrixXd jac = correction_jacobian_fd(detected, scene.input, model, cfg, 1e-4 * d);
    report.correction_jacobian_error = (jac + Eigen::MatrixXd::Identity(jac.rows(), jac.cols())).cwiseAbs().maxCoeff();
  }

  Rng rng(mix_seed(seed, 3));
  std::normal_distribution<double> noise(0.0, 0.05 * d);
  for (int k = 0; k < 20; ++k) {
    const RigidTransform pose = random_pose(PoseRegime::hard(), d, mix_seed(seed, 100 + k));
    Keypoints y = pose.apply(model.keypoints());
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] += noise(rng);
    const PoseJacobian analytic = registration_gradient(y, model.keypoints()).jacobian;
    const PoseJacobian numeric = registration_gradient_fd(y, model.keypoints(), 1e-6 * d);
    report.registration_jacobian_error =
        std::max(report.registration_jacobian_error, (analytic - numeric).cwiseAbs().maxCoeff());
  }

  for (int k = 0; k < 5; ++k) {
    const Scene scene = generate_scene(model, PoseRegime::hard(), 300, 0.0, mix_seed(seed, 200 + k));
    PerturbationConfig pc;
    pc.sigma = 0.3;
    pc.seed = mix_seed(seed, 300 + k);
    const Keypoints detected = perturb_keypoints(scene.gt_keypoints, d, pc);
    const CorrectorProblem problem(detected, scene.input, model, 10.0 / model.num_keypoints());
    const Keypoints zero = Keypoints::Zero(3, detected.cols());
    Keypoints ga, gn;
    problem.gradient(zero, ga);
    problem.gradient_fd(zero, gn, 1e-6 * d);
    report.objective_gradient_error = std::max(report.objective_gradient_error, (ga - gn).norm() / gn.norm());
  }
  return report;
}

}  // namespace certipose
