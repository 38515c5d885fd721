#include "certipose/certificates.hpp"
#include "certipose/cloud_io.hpp"
#include "certipose/config.hpp"
#include "certipose/corrector.hpp"
#include "certipose/detector.hpp"
#include "certipose/errors.hpp"
#include "certipose/harness.hpp"
#include "certipose/manifest.hpp"
#include "certipose/models.hpp"
#include "certipose/parallel.hpp"
#include "certipose/selftrain.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace certipose;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

const std::set<std::string> kKnownKeys = {
    "model.kind", "model.path", "model.num_dense", "model.num_keypoints", "model.scale",
    "scenes.count", "scenes.regime", "scenes.points", "scenes.noise_bound",
    "experiment.sigmas", "experiment.trials", "experiment.fraction", "experiment.adds_threshold",
    "experiment.auc_max",
    "corrector.gamma", "corrector.step_size", "corrector.max_iters", "corrector.grad_tol", "corrector.solver",
    "corrector.gradient_mode",
    "certificates.eps_oc", "certificates.delta_nd", "certificates.indicator_slack",
    "detector.kind", "detector.sigma", "detector.fraction", "detector.weights",
    "train.learning_rate", "train.momentum", "train.batch_size", "train.max_epochs", "train.theta",
    "train.validation_fraction", "train.target_oc", "train.patience", "train.dataset_size", "train.sim_size",
    "train.pretrain_epochs", "train.pretrain_learning_rate", "train.corrupt", "train.oc_low", "train.oc_high",
    "evaluate.count", "evaluate.dataset", "evaluate.occluded_fraction"};

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  int jobs = 0;
};

struct Run {
  Globals globals;
  Config config;
  RunManifest manifest;
  std::vector<std::pair<std::string, std::string>> pending;  ///< (path, contents) written at the end

  void output(const std::string& name, const std::string& contents) {
    const std::string path = (fs::path(globals.out_dir) / name).string();
    pending.emplace_back(path, contents);
    manifest.outputs.push_back(path);
  }

  void input(const std::string& path) { manifest.input_hashes[path] = file_hash(path); }

  void commit(double seconds) {
    fs::create_directories(globals.out_dir);
    for (const auto& [path, contents] : pending) write_file_atomically(path, contents);
    manifest.seed = globals.seed;
    manifest.config = config.values();
    manifest.wall_clock_seconds = seconds;
    write_manifest((fs::path(globals.out_dir) / (manifest.subcommand + ".manifest.json")).string(), manifest);
  }
};

ObjectModel model_from(Run& run) {
  const Config& c = run.config;
  if (const auto path = c.raw("model.path")) {
    run.input(*path);
    return load_model(*path);
  }
  const ModelKind kind = parse_model_kind(c.get_string("model.kind", "box"));
  const int n = c.get_int("model.num_keypoints", kind == ModelKind::box ? 8 : builtin_landmark_count(kind));
  return builtin_model(kind, c.get_int("model.num_dense", 5000), n, run.globals.seed, c.get_double("model.scale", 1.0));
}

CorrectorConfig corrector_from(const Config& c, int num_keypoints) {
  CorrectorConfig cfg = CorrectorConfig::defaults_for(num_keypoints);
  cfg.gamma = c.get_double("corrector.gamma", cfg.gamma);
  cfg.step_size = c.get_double("corrector.step_size", 1.0 / (2.0 * cfg.gamma));
  cfg.max_iters = c.get_int("corrector.max_iters", cfg.max_iters);
  cfg.grad_tol = c.get_double("corrector.grad_tol", cfg.grad_tol);
  cfg.solver = parse_corrector_solver(c.get_string("corrector.solver", to_string(cfg.solver)));
  cfg.gradient_mode = parse_gradient_mode(c.get_string("corrector.gradient_mode", to_string(cfg.gradient_mode)));
  cfg.validate();
  return cfg;
}

RelativeCertificates relative_certificates_from(const Config& c) {
  RelativeCertificates r;
  r.eps_oc = c.get_double("certificates.eps_oc", r.eps_oc);
  r.delta_nd = c.get_double("certificates.delta_nd", r.delta_nd);
  r.indicator_slack = c.get_double("certificates.indicator_slack", r.indicator_slack);
  return r;
}

double noise_bound_from(const Config& c) { return c.get_double("scenes.noise_bound", 0.0); }

void guarantee_banner(const CertificateConfig& certs) {
  if (!parameters_support_guarantee(certs))
    std::cerr << "WARNING: eps_oc + delta_nd + 2 eps_w >= indicator_slack; certificates are computed but the "
                 "correctness guarantee does not apply\n";
}

std::vector<Scene> scenes_from(Run& run, const ObjectModel& model, const std::string& count_key, int fallback_count,
                               std::uint64_t stream) {
  const Config& c = run.config;
  return make_dataset(model, PoseRegime::parse(c.get_string("scenes.regime", "hard")), c.get_int(count_key, fallback_count),
                      c.get_int("scenes.points", 500), noise_bound_from(c) * model.diameter(),
                      mix_seed(run.globals.seed, stream), run.globals.jobs);
}

std::string to_text(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

// --- subcommands -----------------------------------------------------------

int cmd_gen_model(Run& run) {
  const ObjectModel model = model_from(run);
  run.output(model.name() + ".model", to_text([&](std::ostream& o) { write_model(o, model); }));
  std::cout << model.name() << " diameter " << format_real(model.diameter()) << " epsilon_s "
            << format_real(model.sampling_slack()) << "\n";
  return 0;
}

int cmd_gen_scenes(Run& run) {
  const ObjectModel model = model_from(run);
  const std::vector<Scene> scenes = scenes_from(run, model, "scenes.count", 10, 1);
  char name[64];
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::snprintf(name, sizeof(name), "scene_%04zu.scene", i);
    run.output(name, to_text([&](std::ostream& o) { write_scene(o, scenes[i]); }));
  }
  std::cout << scenes.size() << " scenes\n";
  return 0;
}

int cmd_corrector_analysis(Run& run) {
  const Config& c = run.config;
  ExperimentConfig cfg;
  const ObjectModel model = model_from(run);
  cfg.sigmas = c.get_doubles("experiment.sigmas", cfg.sigmas);
  cfg.trials = c.get_int("experiment.trials", cfg.trials);
  cfg.regime = PoseRegime::parse(c.get_string("scenes.regime", "hard"));
  cfg.num_points = c.get_int("scenes.points", cfg.num_points);
  cfg.noise_bound = noise_bound_from(c);
  cfg.perturbed_fraction = c.get_double("experiment.fraction", cfg.perturbed_fraction);
  cfg.adds_threshold = c.get_double("experiment.adds_threshold", cfg.adds_threshold);
  cfg.auc_max = c.get_double("experiment.auc_max", cfg.auc_max);
  cfg.certificates = relative_certificates_from(c);
  cfg.corrector = corrector_from(c, model.num_keypoints());
  cfg.seed = run.globals.seed;
  cfg.jobs = run.globals.jobs;
  const CorrectorAnalysis result = corrector_analysis(model, cfg);

  for (Method m : {Method::naive, Method::corrector}) {
    std::vector<EvalRow> rows;
    for (const EvalRow& r : result.rows)
      if (r.method == m) rows.push_back(r);
    run.output("corrector_analysis_" + to_string(m) + ".csv", to_text([&](std::ostream& o) { write_rows_csv(o, rows); }));
  }
  run.output("corrector_analysis_summary.csv",
             to_text([&](std::ostream& o) { write_aggregates_csv(o, result.aggregates); }));
  std::cout << to_text([&](std::ostream& o) { write_aggregates_csv(o, result.aggregates); });
  if (result.skipped > 0) std::cerr << result.skipped << " trials skipped for degenerate views\n";
  return 0;
}

int cmd_certify(Run& run, const std::string& model_path, const std::vector<std::string>& scene_paths,
                const std::string& detections_path) {
  run.input(model_path);
  const ObjectModel model = load_model(model_path);
  const Config& c = run.config;
  const CorrectorConfig corrector = corrector_from(c, model.num_keypoints());
  std::optional<Keypoints> detections;
  if (!detections_path.empty()) {
    run.input(detections_path);
    detections = load_xyz(detections_path).matrix();
  }
  NoisyOracleDetector oracle;
  oracle.perturbation.sigma = c.get_double("detector.sigma", 0.0);
  oracle.perturbation.fraction = c.get_double("detector.fraction", 0.8);
  oracle.perturbation.seed = run.globals.seed;

  bool warned = false;
  std::string lines;
  for (std::size_t i = 0; i < scene_paths.size(); ++i) {
    run.input(scene_paths[i]);
    const Scene scene = load_scene(scene_paths[i]);
    const CertificateConfig certs = relative_certificates_from(c).absolute(model.diameter(), scene.noise_bound);
    if (!warned) {
      guarantee_banner(certs);
      warned = true;
    }
    Keypoints detected;
    if (detections)
      detected = *detections;
    else if (scene.gt_keypoints.cols() > 0)
      detected = detect(oracle, scene, model.diameter(), i).keypoints;
    else
      throw UsageError(scene_paths[i] + ": scene has no keypoints; pass --detections");
    const PipelineResult r = run_pipeline(detected, scene, model, corrector, certs);
    const std::string line = to_json_line(fs::path(scene_paths[i]).stem().string(), r.certificate);
    std::cout << line << "\n";
    lines += line + "\n";
  }
  run.output("certify.jsonl", lines);
  return 0;
}

int cmd_self_train(Run& run) {
  const Config& c = run.config;
  const ObjectModel model = model_from(run);
  const double d = model.diameter();
  TrainConfig cfg;
  cfg.learning_rate = c.get_double("train.learning_rate", cfg.learning_rate);
  cfg.momentum = c.get_double("train.momentum", cfg.momentum);
  cfg.batch_size = c.get_int("train.batch_size", cfg.batch_size);
  cfg.max_epochs = c.get_int("train.max_epochs", cfg.max_epochs);
  cfg.theta = c.get_double("train.theta", cfg.theta);
  cfg.validation_fraction = c.get_double("train.validation_fraction", cfg.validation_fraction);
  cfg.target_oc = c.get_double("train.target_oc", cfg.target_oc);
  cfg.patience = c.get_int("train.patience", cfg.patience);
  cfg.corrector = corrector_from(c, model.num_keypoints());
  cfg.certificates = relative_certificates_from(c).absolute(d, noise_bound_from(c) * d);
  cfg.seed = run.globals.seed;
  cfg.jobs = run.globals.jobs;
  cfg.validate();
  guarantee_banner(cfg.certificates);

  const PoseRegime regime = PoseRegime::parse(c.get_string("scenes.regime", "easy"));
  const int points = c.get_int("scenes.points", 500);
  const double noise = noise_bound_from(c) * d;
  const std::vector<Scene> dataset = make_dataset(model, regime, c.get_int("train.dataset_size", 500), points, noise,
                                                  mix_seed(run.globals.seed, 2), run.globals.jobs);

  SoftAttentionDetector start = SoftAttentionDetector::random(model.num_keypoints(), 0.1, mix_seed(run.globals.seed, 3));
  if (const auto w = c.raw("detector.weights")) {
    run.input(*w);
    start = load_weights(*w);
  } else {
    const std::vector<Scene> sim = make_dataset(model, regime, c.get_int("train.sim_size", 300), points, noise,
                                                mix_seed(run.globals.seed, 1), run.globals.jobs);
    start = pretrain_supervised(start, sim, d, c.get_int("train.pretrain_epochs", 30),
                                c.get_double("train.pretrain_learning_rate", 1.0), mix_seed(run.globals.seed, 4));
  }
  if (c.get_bool("train.corrupt", false)) {
    // Relabel keypoints cyclically within groups of four and blend toward it.
    std::vector<int> perm(static_cast<std::size_t>(model.num_keypoints()));
    for (int k = 0; k < model.num_keypoints(); ++k) {
      const int base = k - k % 4;
      perm[static_cast<std::size_t>(k)] = base + 4 <= model.num_keypoints() ? base + (k % 4 + 1) % 4 : k;
    }
    const SoftAttentionDetector bad = permute_keypoints(start, perm);
    std::vector<Scene> val;
    for (std::size_t i : validation_indices(dataset.size(), cfg.validation_fraction, cfg.seed)) val.push_back(dataset[i]);
    const double alpha = calibrate_blend(start, bad, val, model, cfg.corrector, cfg.certificates,
                                         c.get_double("train.oc_low", 0.2), c.get_double("train.oc_high", 0.4), 12,
                                         run.globals.jobs);
    start = blend(start, bad, alpha);
    std::cerr << "corrupted start: blend factor " << format_real(alpha) << "\n";
  }

  const TrainResult result = train(start, dataset, model, cfg);
  std::ostringstream weights(std::ios::binary);
  write_weights(weights, result.detector);
  run.output("detector.weights", weights.str());
  run.output("train_stats.csv", to_text([&](std::ostream& o) { write_stats_csv(o, result.stats); }));
  nlohmann::ordered_json epochs;
  epochs["initial_validation_oc"] = result.stats.initial_validation_oc;
  epochs["validation_oc"] = result.stats.validation_oc;
  epochs["config"] = c.values();
  run.output("train_summary.json", epochs.dump(2) + "\n");
  std::cout << "initial validation oc " << format_real(result.stats.initial_validation_oc) << "\n";
  for (std::size_t e = 0; e < result.stats.validation_oc.size(); ++e)
    std::cout << "epoch " << e + 1 << " validation oc " << format_real(result.stats.validation_oc[e]) << "\n";
  return 0;
}

int cmd_evaluate(Run& run) {
  const Config& c = run.config;
  const ObjectModel model = model_from(run);
  const double d = model.diameter();
  const double noise = noise_bound_from(c) * d;
  TableConfig cfg;
  cfg.corrector = corrector_from(c, model.num_keypoints());
  cfg.certificates = relative_certificates_from(c).absolute(d, noise);
  cfg.adds_threshold = c.get_double("experiment.adds_threshold", cfg.adds_threshold) * d;
  cfg.auc_max = c.get_double("experiment.auc_max", cfg.auc_max) * d;
  cfg.seed = run.globals.seed;
  cfg.jobs = run.globals.jobs;
  guarantee_banner(cfg.certificates);

  std::vector<Scene> dataset;
  const std::string kind = c.get_string("evaluate.dataset", "random");
  const int count = c.get_int("evaluate.count", 200);
  if (kind == "random")
    dataset = scenes_from(run, model, "evaluate.count", count, 5);
  else if (kind == "handle_views")
    dataset = handle_view_dataset(model, count, c.get_double("evaluate.occluded_fraction", 0.5),
                                  c.get_int("scenes.points", 500), noise, mix_seed(run.globals.seed, 5));
  else
    throw UsageError("evaluate.dataset must be 'random' or 'handle_views'");

  Detector detector = NoisyOracleDetector{};
  if (c.get_string("detector.kind", "oracle") == "soft_attention") {
    const std::string path = c.get_string("detector.weights", "");
    if (path.empty()) throw UsageError("detector.kind = soft_attention needs detector.weights");
    run.input(path);
    detector = load_weights(path);
  } else {
    NoisyOracleDetector oracle;
    oracle.perturbation.sigma = c.get_double("detector.sigma", 0.0);
    oracle.perturbation.fraction = c.get_double("detector.fraction", 0.8);
    oracle.perturbation.seed = run.globals.seed;
    detector = oracle;
  }
  const CertificateTable table = certificate_table(detector, dataset, model, cfg);
  run.output("evaluate_table.csv", to_text([&](std::ostream& o) { write_table_csv(o, table); }));
  run.output("evaluate_scenes.csv", to_text([&](std::ostream& o) { write_rows_csv(o, table.scenes); }));
  std::cout << to_text([&](std::ostream& o) { write_table_csv(o, table); });
  if (table.soundness_violations > 0)
    std::cerr << table.soundness_violations << " certified scenes exceed the Hausdorff bound\n";
  return 0;
}

int cmd_gradient_check(Run& run) {
  const GradientCheckReport r = run_gradient_checks(run.globals.seed);
  std::printf("correction_jacobian_max_abs_error %.3e\n", r.correction_jacobian_error);
  std::printf("registration_jacobian_max_abs_error %.3e\n", r.registration_jacobian_error);
  std::printf("objective_gradient_max_rel_error %.3e\n", r.objective_gradient_error);
  nlohmann::ordered_json j;
  j["correction_jacobian_max_abs_error"] = r.correction_jacobian_error;
  j["registration_jacobian_max_abs_error"] = r.registration_jacobian_error;
  j["objective_gradient_max_rel_error"] = r.objective_gradient_error;
  run.output("gradient_check.json", j.dump(2) + "\n");
  return r.correction_jacobian_error < 5e-3 ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certipose: certifiable keypoint-based pose estimation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config_path, "Settings file ([section] key = value)");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--set", g.overrides, "Override a setting: section.key=value (repeatable)");
  app.add_option("--jobs", g.jobs, "Worker threads (0: available parallelism)")->check(CLI::NonNegativeNumber);

  auto* gen_model = app.add_subcommand("gen-model", "Write a builtin object model");
  std::string kind;
  gen_model->add_option("--kind", kind, "box | mug_like | cap_like | chair_like");
  auto* gen_scenes = app.add_subcommand("gen-scenes", "Render random scenes of a model");
  auto* analysis = app.add_subcommand("corrector-analysis", "Naive vs corrected registration under keypoint noise");
  auto* certify_cmd = app.add_subcommand("certify", "Run the pipeline and print certificates as JSON lines");
  std::string model_path, detections_path;
  std::vector<std::string> scene_paths;
  certify_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  certify_cmd->add_option("--scene", scene_paths, "Scene file (repeatable)")->required()->check(CLI::ExistingFile);
  certify_cmd->add_option("--detections", detections_path, "XYZ file of detected keypoints")->check(CLI::ExistingFile);
  auto* self_train = app.add_subcommand("self-train", "Certificate-gated self-training of the attention detector");
  auto* evaluate = app.add_subcommand("evaluate", "Certificate-filtered ADD-S table");
  auto* gradient_check = app.add_subcommand("gradient-check", "Finite-difference checks of the derivatives");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  Run run;
  run.globals = g;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (!g.config_path.empty()) {
      if (!fs::is_regular_file(g.config_path)) throw UsageError("config file not found: " + g.config_path);
      run.input(g.config_path);
      run.config = Config::load(g.config_path);
    }
    for (const std::string& o : g.overrides) run.config.set_override(o);
    if (!kind.empty()) run.config.set("model.kind", kind);
    run.config.check_known(kKnownKeys);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  int code = 0;
  try {
    CLI::App* sub = app.get_subcommands().front();
    run.manifest.subcommand = sub->get_name();
    if (sub == gen_model)
      code = cmd_gen_model(run);
    else if (sub == gen_scenes)
      code = cmd_gen_scenes(run);
    else if (sub == analysis)
      code = cmd_corrector_analysis(run);
    else if (sub == certify_cmd)
      code = cmd_certify(run, model_path, scene_paths, detections_path);
    else if (sub == self_train)
      code = cmd_self_train(run);
    else if (sub == evaluate)
      code = cmd_evaluate(run);
    else if (sub == gradient_check)
      code = cmd_gradient_check(run);
    run.commit(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return code;
}
