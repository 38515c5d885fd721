#pragma once

#include "certipose/certificates.hpp"
#include "certipose/corrector.hpp"
#include "certipose/detector.hpp"
#include "certipose/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace certipose {

/// Detector output pushed through corrector, registration and certificates.
struct PipelineResult {
  Keypoints detected;
  CorrectorResult correction;
  RigidTransform pose;
  CertificateResult certificate;
};

PipelineResult run_pipeline(const Keypoints& detected, const Scene& scene, const ObjectModel& model,
                            const CorrectorConfig& corrector, const CertificateConfig& certificates);

/**
 * Settings of certificate-gated self-training.
 *
 * Losses are divided by d^2 so the learning rate does not depend on the
 * object's scale.
 */
struct TrainConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  int batch_size = 50;
  int max_epochs = 20;
  double theta = 1.0;
  double validation_fraction = 0.1;
  double target_oc = 0.99;  ///< early stop once validation reaches this ...
  int patience = 2;         ///< ... for this many consecutive epochs
  CorrectorConfig corrector;
  CertificateConfig certificates;
  std::uint64_t seed = 0;
  int jobs = 0;
  void validate() const;
};

struct InstanceLoss {
  double loss = 0.0;         ///< (half-Chamfer + theta ||y - yhat||^2) / d^2
  Eigen::MatrixXd gradient;  ///< d/dW of theta ||y~ - stopgrad(y)||^2 / d^2; zero unless oc
  bool oc = false;
  double margin = 0.0;       ///< oc margin / d
  bool diverged = false;     ///< corrector failed; excluded from the batch
};

InstanceLoss instance_loss(const Scene& scene, const SoftAttentionDetector& detector, const ObjectModel& model,
                           const TrainConfig& cfg);

struct IterationStats {
  int iter = 0;
  int epoch = 0;
  double frac_oc = 0.0;
  double masked_loss = 0.0;  ///< mean loss over the oc instances of the batch
  double mean_margin = 0.0;
  int excluded = 0;          ///< instances dropped for corrector failure
};

struct TrainStats {
  std::vector<IterationStats> iterations;
  double initial_validation_oc = 0.0;
  std::vector<double> validation_oc;  ///< after each epoch
};

struct TrainResult {
  SoftAttentionDetector detector;
  TrainStats stats;
};

/**
 * @brief Momentum SGD on the oc-masked sum of instance losses.
 *
 * A seeded 10% of the dataset is held out for validation. Throws
 * TrainingStalledError when an epoch sees no oc instance.
 */
TrainResult train(SoftAttentionDetector detector, const std::vector<Scene>& dataset, const ObjectModel& model,
                  const TrainConfig& cfg);

/// Fraction of scenes whose pipeline output is observably correct.
double eval_percent_oc(const Detector& detector, const std::vector<Scene>& dataset, const ObjectModel& model,
                       const CorrectorConfig& corrector, const CertificateConfig& certificates,
                       std::uint64_t seed = 0, int jobs = 0);

/// Indices of the validation part of a dataset of `size` scenes.
std::vector<std::size_t> validation_indices(std::size_t size, double fraction, std::uint64_t seed);

/// iter,epoch,frac_oc,masked_loss,mean_margin
void write_stats_csv(std::ostream& out, const TrainStats& stats);

/// `count` scenes with independent seeds; degenerate views are resampled.
std::vector<Scene> make_dataset(const ObjectModel& model, const PoseRegime& regime, int count, int num_points,
                                double noise_bound, std::uint64_t seed, int jobs = 0);

/// Supervised fit to ground-truth keypoints on simulated scenes (plain momentum SGD, mean loss).
SoftAttentionDetector pretrain_supervised(SoftAttentionDetector detector, const std::vector<Scene>& scenes,
                                          double diameter, int epochs, double learning_rate, std::uint64_t seed);

/// (1 - alpha) * a + alpha * b, elementwise on the weights.
SoftAttentionDetector blend(const SoftAttentionDetector& a, const SoftAttentionDetector& b, double alpha);

/// Detector whose keypoint k uses row perm[k] of the given weights.
SoftAttentionDetector permute_keypoints(const SoftAttentionDetector& detector, const std::vector<int>& perm);

/**
 * @brief Bisects the blend factor between `good` and `bad` until the oc
 * fraction on `scenes` falls in [low, high].
 *
 * Assumes the oc fraction decreases as the factor grows. Returns the last
 * factor tried when `iterations` run out.
 */
double calibrate_blend(const SoftAttentionDetector& good, const SoftAttentionDetector& bad,
                       const std::vector<Scene>& scenes, const ObjectModel& model, const CorrectorConfig& corrector,
                       const CertificateConfig& certificates, double low, double high, int iterations = 12,
                       int jobs = 0);

}  // namespace certipose
