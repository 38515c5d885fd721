#include "certipose/selftrain.hpp"

#include "certipose/errors.hpp"
#include "certipose/metrics.hpp"
#include "certipose/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace certipose {

PipelineResult run_pipeline(const Keypoints& detected, const Scene& scene, const ObjectModel& model,
                            const CorrectorConfig& corrector, const CertificateConfig& certificates) {
  PipelineResult r;
  r.detected = detected;
  r.correction = solve(detected, scene.input, model, corrector);
  r.pose = r.correction.pose;
  r.certificate = certify(scene.input, model, r.pose, certificates);
  return r;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (!(theta > 0.0)) throw std::invalid_argument("theta must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("validation_fraction must be in [0, 1)");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  corrector.validate();
  certificates.validate();
}

InstanceLoss instance_loss(const Scene& scene, const SoftAttentionDetector& detector, const ObjectModel& model,
                           const TrainConfig& cfg) {
  InstanceLoss out;
  out.gradient = Eigen::MatrixXd::Zero(detector.num_keypoints(), kFeatureDim);
  const double d2 = model.diameter() * model.diameter();
  const DetectorOutput det = detect(detector, scene.input);
  PipelineResult p;
  try {
    p = run_pipeline(det.keypoints, scene, model, cfg.corrector, cfg.certificates);
  } catch (const Error&) {
    out.diverged = true;
    return out;
  }
  const Keypoints& y = p.correction.corrected;
  const PosedOutputs posed = posed_outputs(p.pose, model);
  out.loss = (half_chamfer(scene.input, posed.cloud) + cfg.theta * (y - posed.keypoints).squaredNorm()) / d2;
  out.oc = p.certificate.oc;
  out.margin = p.certificate.oc_margin / model.diameter();
  if (out.oc) {
    // Corrected keypoints are a constant target: d/dy~ theta ||y~ - y||^2.
    const Keypoints upstream = (2.0 * cfg.theta / d2) * (det.keypoints - y);
    out.gradient = detector_gradient(detector, scene.input, upstream);
  }
  return out;
}

std::vector<std::size_t> validation_indices(std::size_t size, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0xA11));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(size))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

double percent_oc(const SoftAttentionDetector& detector, const std::vector<Scene>& dataset,
                  const std::vector<std::size_t>& subset, const ObjectModel& model, const TrainConfig& cfg) {
  if (subset.empty()) return 0.0;
  std::vector<char> oc(subset.size(), 0);
  parallel_for(subset.size(), cfg.jobs, [&](std::size_t i) {
    const Scene& s = dataset[subset[i]];
    try {
      oc[i] = run_pipeline(detect(detector, s.input).keypoints, s, model, cfg.corrector, cfg.certificates)
                  .certificate.oc;
    } catch (const Error&) {
      oc[i] = 0;
    }
  });
  return static_cast<double>(std::count(oc.begin(), oc.end(), 1)) / static_cast<double>(subset.size());
}

}  // namespace

TrainResult train(SoftAttentionDetector detector, const std::vector<Scene>& dataset, const ObjectModel& model,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (detector.num_keypoints() != model.num_keypoints())
    throw std::invalid_argument("train: detector and model keypoint counts differ");

  const std::vector<std::size_t> validation = validation_indices(dataset.size(), cfg.validation_fraction, cfg.seed);
  std::vector<std::size_t> training;
  for (std::size_t i = 0, v = 0; i < dataset.size(); ++i) {
    if (v < validation.size() && validation[v] == i) {
      ++v;
      continue;
    }
    training.push_back(i);
  }
  if (training.empty()) throw std::invalid_argument("train: no training scenes after the validation split");

  TrainResult result{detector, {}};
  result.stats.initial_validation_oc = percent_oc(detector, dataset, validation, model, cfg);
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(detector.num_keypoints(), kFeatureDim);
  int iter = 0;
  int streak = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = training;
    std::shuffle(order.begin(), order.end(), rng);
    int epoch_oc = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<InstanceLoss> losses(stop - start);
      parallel_for(losses.size(), cfg.jobs,
                   [&](std::size_t i) { losses[i] = instance_loss(dataset[order[start + i]], detector, model, cfg); });

      IterationStats st;
      st.iter = ++iter;
      st.epoch = epoch;
      Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(detector.num_keypoints(), kFeatureDim);
      int oc = 0;
      double loss_sum = 0.0, margin_sum = 0.0;
      int counted = 0;
      for (const InstanceLoss& l : losses) {
        if (l.diverged) {
          ++st.excluded;
          continue;
        }
        ++counted;
        margin_sum += l.margin;
        if (!l.oc) continue;
        ++oc;
        loss_sum += l.loss;
        grad += l.gradient;
      }
      st.frac_oc = static_cast<double>(oc) / static_cast<double>(losses.size());
      st.masked_loss = oc > 0 ? loss_sum / oc : 0.0;
      st.mean_margin = counted > 0 ? margin_sum / counted : 0.0;
      result.stats.iterations.push_back(st);
      epoch_oc += oc;

      velocity = cfg.momentum * velocity - cfg.learning_rate * grad;
      detector.mutable_weights() += velocity;
    }
    if (epoch_oc == 0)
      throw TrainingStalledError("no observably correct instance in epoch " + std::to_string(epoch) + " of " +
                                 std::to_string(training.size()) + " training scenes (initial validation oc " +
                                 std::to_string(result.stats.initial_validation_oc) + ")");
    const double val = percent_oc(detector, dataset, validation, model, cfg);
    result.stats.validation_oc.push_back(val);
    streak = val >= cfg.target_oc ? streak + 1 : 0;
    if (streak >= cfg.patience) break;
  }
  result.detector = detector;
  return result;
}

double eval_percent_oc(const Detector& detector, const std::vector<Scene>& dataset, const ObjectModel& model,
                       const CorrectorConfig& corrector, const CertificateConfig& certificates, std::uint64_t seed,
                       int jobs) {
  if (dataset.empty()) throw std::invalid_argument("eval_percent_oc: empty dataset");
  std::vector<char> oc(dataset.size(), 0);
  parallel_for(dataset.size(), jobs, [&](std::size_t i) {
    try {
      const Keypoints y = detect(detector, dataset[i], model.diameter(), mix_seed(seed, i)).keypoints;
      oc[i] = run_pipeline(y, dataset[i], model, corrector, certificates).certificate.oc;
    } catch (const Error&) {
      oc[i] = 0;
    }
  });
  return static_cast<double>(std::count(oc.begin(), oc.end(), 1)) / static_cast<double>(dataset.size());
}

void write_stats_csv(std::ostream& out, const TrainStats& stats) {
  out << "iter,epoch,frac_oc,masked_loss,mean_margin\n";
  char line[160];
  for (const IterationStats& s : stats.iterations) {
    std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g,%.17g\n", s.iter, s.epoch, s.frac_oc, s.masked_loss,
                  s.mean_margin);
    out << line;
  }
}

std::vector<Scene> make_dataset(const ObjectModel& model, const PoseRegime& regime, int count, int num_points,
                                double noise_bound, std::uint64_t seed, int jobs) {
  if (count < 1) throw std::invalid_argument("make_dataset: count must be >= 1");
  std::vector<std::optional<Scene>> scenes(static_cast<std::size_t>(count));
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    scenes[i] = generate_scene(model, regime, num_points, noise_bound, mix_seed(seed, i));
  });
  std::vector<Scene> out;
  out.reserve(scenes.size());
  for (auto& s : scenes) out.push_back(std::move(*s));
  return out;
}

SoftAttentionDetector pretrain_supervised(SoftAttentionDetector detector, const std::vector<Scene>& scenes,
                                          double diameter, int epochs, double learning_rate, std::uint64_t seed) {
  if (scenes.empty()) throw std::invalid_argument("pretrain_supervised: no scenes");
  const double d2 = diameter * diameter;
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(detector.num_keypoints(), kFeatureDim);
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  constexpr std::size_t kBatch = 25;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += kBatch) {
      const std::size_t stop = std::min(order.size(), start + kBatch);
      Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(detector.num_keypoints(), kFeatureDim);
      for (std::size_t i = start; i < stop; ++i) {
        const Scene& s = scenes[order[i]];
        const Keypoints y = detect(detector, s.input).keypoints;
        grad += detector_gradient(detector, s.input, (2.0 / d2) * (y - s.gt_keypoints));
      }
      grad /= static_cast<double>(stop - start);
      velocity = 0.9 * velocity - learning_rate * grad;
      detector.mutable_weights() += velocity;
    }
  }
  return detector;
}

SoftAttentionDetector blend(const SoftAttentionDetector& a, const SoftAttentionDetector& b, double alpha) {
  if (a.weights().rows() != b.weights().rows()) throw std::invalid_argument("blend: shape mismatch");
  return SoftAttentionDetector((1.0 - alpha) * a.weights() + alpha * b.weights());
}

SoftAttentionDetector permute_keypoints(const SoftAttentionDetector& detector, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != detector.num_keypoints())
    throw std::invalid_argument("permute_keypoints: permutation has the wrong length");
  Eigen::MatrixXd w(detector.weights().rows(), detector.weights().cols());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    if (perm[k] < 0 || perm[k] >= detector.num_keypoints()) throw std::out_of_range("permute_keypoints: bad index");
    w.row(static_cast<Eigen::Index>(k)) = detector.weights().row(perm[k]);
  }
  return SoftAttentionDetector(std::move(w));
}

double calibrate_blend(const SoftAttentionDetector& good, const SoftAttentionDetector& bad,
                       const std::vector<Scene>& scenes, const ObjectModel& model, const CorrectorConfig& corrector,
                       const CertificateConfig& certificates, double low, double high, int iterations, int jobs) {
  if (!(low <= high)) throw std::invalid_argument("calibrate_blend: empty target interval");
  double lo = 0.0, hi = 1.0, alpha = 0.5;
  for (int it = 0; it < iterations; ++it) {
    alpha = 0.5 * (lo + hi);
    const double oc = eval_percent_oc(blend(good, bad, alpha), scenes, model, corrector, certificates, 0, jobs);
    if (oc > high)
      lo = alpha;
    else if (oc < low)
      hi = alpha;
    else
      break;
  }
  return alpha;
}

}  // namespace certipose
