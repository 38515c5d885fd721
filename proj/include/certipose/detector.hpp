#pragma once

#include "certipose/geometry.hpp"
#include "certipose/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>

namespace certipose {

/// Per-point feature dimension of the soft-attention detector.
inline constexpr int kFeatureDim = 12;
/// Radial basis functions in the feature map.
inline constexpr int kRadialCenters = 7;

/**
 * @brief Per-point features, one column per point (kFeatureDim x n).
 *
 * Rows: offset from the centroid (3), distance to the centroid (1),
 * Gaussian bumps of the normalized distance r / r_max centered at k/6
 * with width 0.15 (7), constant 1 (1).
 */
Eigen::MatrixXd point_features(const PointCloud& x);

/// Stand-in for a simulation-trained detector: ground-truth keypoints
/// perturbed by the keypoint perturbation protocol.
struct NoisyOracleDetector {
  PerturbationConfig perturbation;
};

/**
 * @brief Trainable detector: each keypoint is an attention-weighted mean of
 * the input points.
 *
 * Scores S = W * phi(X) (N x n), attention A = row-wise softmax(S),
 * keypoints y~ = X * A^T. Outputs always lie in the convex hull of X.
 */
class SoftAttentionDetector {
 public:
  explicit SoftAttentionDetector(Eigen::MatrixXd weights);
  /// Weights drawn i.i.d. normal with standard deviation `scale`.
  static SoftAttentionDetector random(int num_keypoints, double scale, std::uint64_t seed);

  int num_keypoints() const { return static_cast<int>(weights_.rows()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& mutable_weights() { return weights_; }

  friend bool operator==(const SoftAttentionDetector& a, const SoftAttentionDetector& b) {
    return a.weights_ == b.weights_;
  }

 private:
  Eigen::MatrixXd weights_;
};

using Detector = std::variant<NoisyOracleDetector, SoftAttentionDetector>;

struct DetectorOutput {
  Keypoints keypoints;
  Eigen::MatrixXd attention;  ///< N x n, empty for the noisy oracle
};

DetectorOutput detect(const SoftAttentionDetector& detector, const PointCloud& x);
/// The oracle perturbs the scene's ground-truth keypoints with
/// `perturbation.seed` mixed with `instance_seed`.
DetectorOutput detect(const NoisyOracleDetector& detector, const Scene& scene, double diameter,
                      std::uint64_t instance_seed);
DetectorOutput detect(const Detector& detector, const Scene& scene, double diameter, std::uint64_t instance_seed);

/// dL/dW for the soft-attention detector given dL/dy~ (3 x N).
Eigen::MatrixXd detector_gradient(const SoftAttentionDetector& detector, const PointCloud& x,
                                  const Keypoints& upstream);

/// Header: uint64 rows, uint64 cols; then rows*cols little-endian f64, row-major.
void write_weights(std::ostream& out, const SoftAttentionDetector& detector);
SoftAttentionDetector read_weights(std::istream& in);
void save_weights(const SoftAttentionDetector& detector, const std::string& path);
SoftAttentionDetector load_weights(const std::string& path);

}  // namespace certipose
