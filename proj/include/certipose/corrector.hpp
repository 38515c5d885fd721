#pragma once

#include "certipose/geometry.hpp"
#include "certipose/models.hpp"
#include "certipose/registration.hpp"

#include <optional>
#include <string>
#include <vector>

namespace certipose {

enum class CorrectorSolver { constant_step_gd, trust_region };
enum class GradientMode { analytic, finite_difference };

CorrectorSolver parse_corrector_solver(const std::string& s);
GradientMode parse_gradient_mode(const std::string& s);
std::string to_string(CorrectorSolver s);
std::string to_string(GradientMode m);

/**
 * Settings for the keypoint corrector.
 *
 * The objective is measured in squared model units, so `step_size` is the
 * plain gradient-descent step; `grad_tol` is compared against the gradient
 * norm divided by the model diameter.
 */
struct CorrectorConfig {
  double gamma = 1.25;     ///< keypoint-consistency weight
  double step_size = 0.4;
  int max_iters = 400;
  double grad_tol = 1e-6;
  CorrectorSolver solver = CorrectorSolver::constant_step_gd;
  GradientMode gradient_mode = GradientMode::analytic;

  /// gamma = 10/N and step_size = 1/(2 gamma).
  static CorrectorConfig defaults_for(int num_keypoints);
  void validate() const;
};

struct CorrectorResult {
  Keypoints correction;   ///< delta y*
  Keypoints corrected;    ///< y~ + delta y*
  RigidTransform pose;    ///< registration of the corrected keypoints
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;           ///< at the returned iterate, divided by the diameter
  std::vector<double> objective_trace;  ///< accepted objectives, starting at delta y = 0
  bool converged = false;               ///< gradient_norm <= grad_tol
};

/**
 * @brief The corrector objective as a function of the correction delta y.
 *
 * f(dy) = half_chamfer(X, T(y) * B) + gamma * ||y - T(y) * b||^2 with
 * y = y~ + dy and T(y) the closed-form registration of b onto y.
 * Nearest neighbors are found in the model frame, where the dense index
 * is built once.
 */
class CorrectorProblem {
 public:
  CorrectorProblem(const Keypoints& detected, const PointCloud& input, const ObjectModel& model, double gamma);

  struct Terms {
    double chamfer = 0.0;
    double keypoint = 0.0;  ///< already multiplied by gamma
    double total() const { return chamfer + keypoint; }
    RegistrationResult registration;
  };

  Terms evaluate(const Keypoints& correction) const;
  double objective(const Keypoints& correction) const { return evaluate(correction).total(); }

  /// Analytic gradient: nearest-neighbor assignments are held fixed
  /// (piecewise-smooth subgradient), registration is differentiated exactly.
  double gradient(const Keypoints& correction, Keypoints& grad) const;
  /// Central differences with step `step` on every coordinate.
  double gradient_fd(const Keypoints& correction, Keypoints& grad, double step) const;

  /// Gauss-Newton linearization around `correction`: objective, gradient
  /// J^T r and normal matrix J^T J over the 3N stacked coordinates.
  struct Linearization {
    double objective = 0.0;
    Eigen::VectorXd half_gradient;  ///< J^T r (the objective gradient is twice this)
    Eigen::MatrixXd normal;         ///< J^T J
  };
  Linearization linearize(const Keypoints& correction) const;

  /// Nearest-model-point index for each input point under `pose`.
  std::vector<Eigen::Index> assignments(const RigidTransform& pose) const;

  const Keypoints& detected() const { return detected_; }
  const ObjectModel& model() const { return model_; }
  double gamma() const { return gamma_; }

 private:
  const Keypoints& detected_;
  const PointCloud& input_;
  const ObjectModel& model_;
  double gamma_;
};

double corrector_objective(const Keypoints& correction, const Keypoints& detected, const PointCloud& input,
                           const ObjectModel& model, double gamma);

/// Minimizes the corrector objective from delta y = 0 and returns the best
/// iterate seen. Throws SolverDivergedError on a non-finite objective.
CorrectorResult solve(const Keypoints& detected, const PointCloud& input, const ObjectModel& model,
                      const CorrectorConfig& cfg);

struct CorrectorInstance {
  Keypoints detected;
  PointCloud input;
};

struct BatchOutcome {
  std::optional<CorrectorResult> result;
  std::string error;  ///< set when result is empty
};

/// Solves every item independently on `jobs` workers; a failing item does
/// not affect the others. Results are in input order.
std::vector<BatchOutcome> solve_batch(const std::vector<CorrectorInstance>& batch, const ObjectModel& model,
                                      const CorrectorConfig& cfg, int jobs = 0);

/// Central-difference Jacobian (3N x 3N) of the solved correction with
/// respect to the detected keypoints; column 3i+c perturbs detected(c, i).
Eigen::MatrixXd correction_jacobian_fd(const Keypoints& detected, const PointCloud& input, const ObjectModel& model,
                                       const CorrectorConfig& cfg, double step);

/**
 * @brief Backward rule of the corrector: d(delta y*)/d(y~) = -I.
 *
 * Returns -upstream. The rule assumes a stationary solution; a warning is
 * emitted when `result` did not converge.
 */
Keypoints backprop_rule(const CorrectorResult& result, const Keypoints& upstream);

}  // namespace certipose
