#include "certipose/detector.hpp"

#include "certipose/cloud_io.hpp"
#include "certipose/errors.hpp"
#include "binary_io.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace certipose {

namespace {
constexpr double kRadialWidth = 0.15;
}

Eigen::MatrixXd point_features(const PointCloud& x) {
  if (x.empty()) throw std::invalid_argument("point_features: empty cloud");
  const Vec3 c = x.centroid();
  const Eigen::Index n = x.size();
  Eigen::MatrixXd phi(kFeatureDim, n);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 off = x[i] - c;
    phi.block<3, 1>(0, i) = off;
    r(i) = off.norm();
    phi(3, i) = r(i);
  }
  const double r_max = std::max(r.maxCoeff(), 1e-12);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = r(i) / r_max;
    for (int k = 0; k < kRadialCenters; ++k) {
      const double z = (s - k / double(kRadialCenters - 1)) / kRadialWidth;
      phi(4 + k, i) = std::exp(-0.5 * z * z);
    }
    phi(kFeatureDim - 1, i) = 1.0;
  }
  return phi;
}

SoftAttentionDetector::SoftAttentionDetector(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() < 1 || weights_.cols() != kFeatureDim)
    throw InvariantError("soft-attention weights must be N x " + std::to_string(kFeatureDim));
  if (!weights_.allFinite()) throw InvariantError("soft-attention weights must be finite");
}

SoftAttentionDetector SoftAttentionDetector::random(int num_keypoints, double scale, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd w(num_keypoints, kFeatureDim);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = g(rng);
  return SoftAttentionDetector(std::move(w));
}

namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd a = scores.colwise() - scores.rowwise().maxCoeff();
  a = a.array().exp();
  a.array().colwise() /= a.rowwise().sum().array();
  return a;
}

}  // namespace

DetectorOutput detect(const SoftAttentionDetector& detector, const PointCloud& x) {
  if (x.empty()) throw std::invalid_argument("detect: empty input cloud");
  DetectorOutput out;
  out.attention = softmax_rows(detector.weights() * point_features(x));
  out.keypoints = x.matrix() * out.attention.transpose();
  return out;
}

DetectorOutput detect(const NoisyOracleDetector& detector, const Scene& scene, double diameter,
                      std::uint64_t instance_seed) {
  if (scene.gt_keypoints.cols() == 0) throw std::invalid_argument("noisy oracle needs ground-truth keypoints");
  PerturbationConfig cfg = detector.perturbation;
  cfg.seed = mix_seed(detector.perturbation.seed, instance_seed);
  DetectorOutput out;
  out.keypoints = perturb_keypoints(scene.gt_keypoints, diameter, cfg);
  return out;
}

DetectorOutput detect(const Detector& detector, const Scene& scene, double diameter, std::uint64_t instance_seed) {
  if (const auto* oracle = std::get_if<NoisyOracleDetector>(&detector))
    return detect(*oracle, scene, diameter, instance_seed);
  return detect(std::get<SoftAttentionDetector>(detector), scene.input);
}

Eigen::MatrixXd detector_gradient(const SoftAttentionDetector& detector, const PointCloud& x,
                                  const Keypoints& upstream) {
  if (upstream.cols() != detector.num_keypoints())
    throw std::invalid_argument("detector_gradient: upstream has the wrong keypoint count");
  const Eigen::MatrixXd phi = point_features(x);
  const Eigen::MatrixXd a = softmax_rows(detector.weights() * phi);
  const Keypoints y = x.matrix() * a.transpose();
  // dL/dS(k, i) = A(k, i) * g_k . (x_i - y_k)
  const Eigen::MatrixXd gx = upstream.transpose() * x.matrix();  // N x n
  const Eigen::VectorXd gy = (upstream.array() * y.array()).colwise().sum().transpose();
  const Eigen::MatrixXd ds = a.array() * (gx.colwise() - gy).array();
  return ds * phi.transpose();
}

void write_weights(std::ostream& out, const SoftAttentionDetector& detector) {
  const Eigen::MatrixXd& w = detector.weights();
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(w.rows()));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) detail::put<double>(out, w(i, j));
}

SoftAttentionDetector read_weights(std::istream& in) {
  const auto rows = detail::get<std::uint64_t>(in);
  const auto cols = detail::get<std::uint64_t>(in);
  if (rows == 0 || rows > 100000 || cols != static_cast<std::uint64_t>(kFeatureDim))
    throw ParseError("weights header has shape " + std::to_string(rows) + " x " + std::to_string(cols));
  Eigen::MatrixXd w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = detail::get<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after weights");
  return SoftAttentionDetector(std::move(w));
}

void save_weights(const SoftAttentionDetector& detector, const std::string& path) {
  std::ostringstream os(std::ios::binary);
  write_weights(os, detector);
  write_file_atomically(path, os.str());
}

SoftAttentionDetector load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  return read_weights(in);
}

}  // namespace certipose
