#include "certipose/corrector.hpp"

#include "certipose/errors.hpp"
#include "certipose/logging.hpp"
#include "certipose/parallel.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace certipose {

CorrectorSolver parse_corrector_solver(const std::string& s) {
  if (s == "constant_step_gd" || s == "gd") return CorrectorSolver::constant_step_gd;
  if (s == "trust_region" || s == "tr") return CorrectorSolver::trust_region;
  throw std::invalid_argument("unknown corrector solver '" + s + "'");
}

GradientMode parse_gradient_mode(const std::string& s) {
  if (s == "analytic") return GradientMode::analytic;
  if (s == "finite_difference" || s == "fd") return GradientMode::finite_difference;
  throw std::invalid_argument("unknown gradient mode '" + s + "'");
}

std::string to_string(CorrectorSolver s) {
  return s == CorrectorSolver::constant_step_gd ? "constant_step_gd" : "trust_region";
}

std::string to_string(GradientMode m) { return m == GradientMode::analytic ? "analytic" : "finite_difference"; }

CorrectorConfig CorrectorConfig::defaults_for(int num_keypoints) {
  CorrectorConfig cfg;
  cfg.gamma = 10.0 / std::max(1, num_keypoints);
  cfg.step_size = 1.0 / (2.0 * cfg.gamma);
  return cfg;
}

void CorrectorConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("corrector gamma must be positive");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw std::invalid_argument("corrector step_size must be positive");
  if (max_iters < 1) throw std::invalid_argument("corrector max_iters must be >= 1");
  if (!(grad_tol > 0.0)) throw std::invalid_argument("corrector grad_tol must be positive");
}

CorrectorProblem::CorrectorProblem(const Keypoints& detected, const PointCloud& input, const ObjectModel& model,
                                   double gamma)
    : detected_(detected), input_(input), model_(model), gamma_(gamma) {
  if (detected.cols() != model.num_keypoints())
    throw std::invalid_argument("corrector: detected keypoint count does not match the model");
  if (input.empty()) throw std::invalid_argument("corrector: empty input cloud");
}

std::vector<Eigen::Index> CorrectorProblem::assignments(const RigidTransform& pose) const {
  const RigidTransform inv = pose.inverse();
  std::vector<Eigen::Index> nn(static_cast<std::size_t>(input_.size()));
  for (Eigen::Index i = 0; i < input_.size(); ++i)
    nn[static_cast<std::size_t>(i)] = model_.dense_index().nearest(inv.apply(Vec3(input_[i]))).index;
  return nn;
}

CorrectorProblem::Terms CorrectorProblem::evaluate(const Keypoints& correction) const {
  Terms terms;
  const Keypoints y = detected_ + correction;
  terms.registration = register_keypoints(y, model_.keypoints());
  const RigidTransform inv = terms.registration.pose.inverse();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < input_.size(); ++i)
    sum += model_.dense_index().nearest(inv.apply(Vec3(input_[i]))).squared_distance;
  terms.chamfer = sum / static_cast<double>(input_.size());
  terms.keypoint = gamma_ * terms.registration.residual;
  return terms;
}

double CorrectorProblem::gradient(const Keypoints& correction, Keypoints& grad) const {
  const Keypoints y = detected_ + correction;
  const RegistrationDerivative deriv = registration_gradient(y, model_.keypoints());
  const RigidTransform& pose = deriv.registration.pose;
  const Mat3& rot = pose.rotation();
  const RigidTransform inv = pose.inverse();

  Vec3 g_rot = Vec3::Zero(), g_trans = Vec3::Zero();
  double chamfer = 0.0;
  for (Eigen::Index i = 0; i < input_.size(); ++i) {
    const Vec3 xi = input_[i];
    const Neighbor nb = model_.dense_index().nearest(inv.apply(xi));
    const Vec3 p = rot * model_.dense()[nb.index];
    const Vec3 r = xi - p - pose.translation();
    g_rot += p.cross(r);
    g_trans += r;
    chamfer += nb.squared_distance;
  }
  const double inv_n = 1.0 / static_cast<double>(input_.size());
  Eigen::Matrix<double, 6, 1> g_pose;
  g_pose << -2.0 * inv_n * g_rot, -2.0 * inv_n * g_trans;

  // Registration is an exact minimizer of ||y - T b||^2, so the keypoint
  // term's gradient only has its explicit part.
  const Keypoints residual = y - pose.apply(model_.keypoints());
  grad.resize(3, y.cols());
  Eigen::Map<Eigen::VectorXd>(grad.data(), grad.size()) =
      deriv.jacobian.transpose() * g_pose + 2.0 * gamma_ * Eigen::Map<const Eigen::VectorXd>(residual.data(), residual.size());
  return chamfer * inv_n + gamma_ * residual.squaredNorm();
}

double CorrectorProblem::gradient_fd(const Keypoints& correction, Keypoints& grad, double step) const {
  grad.resize(3, correction.cols());
  Keypoints probe = correction;
  for (Eigen::Index i = 0; i < correction.cols(); ++i)
    for (int c = 0; c < 3; ++c) {
      probe(c, i) = correction(c, i) + step;
      const double plus = objective(probe);
      probe(c, i) = correction(c, i) - step;
      const double minus = objective(probe);
      probe(c, i) = correction(c, i);
      grad(c, i) = (plus - minus) / (2.0 * step);
    }
  return objective(correction);
}

CorrectorProblem::Linearization CorrectorProblem::linearize(const Keypoints& correction) const {
  const Keypoints y = detected_ + correction;
  const RegistrationDerivative deriv = registration_gradient(y, model_.keypoints());
  const PoseJacobian& jac = deriv.jacobian;
  const RigidTransform& pose = deriv.registration.pose;
  const Mat3& rot = pose.rotation();
  const RigidTransform inv = pose.inverse();
  const Eigen::Index dim = 3 * y.cols();

  // Chamfer residuals (x_i - xhat_nn) / sqrt(n), each with d/d(w, t) = [hat(p), -I].
  Eigen::Matrix<double, 6, 6> gram = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> pose_grad = Eigen::Matrix<double, 6, 1>::Zero();
  double chamfer = 0.0;
  for (Eigen::Index i = 0; i < input_.size(); ++i) {
    const Vec3 xi = input_[i];
    const Neighbor nb = model_.dense_index().nearest(inv.apply(xi));
    const Vec3 p = rot * model_.dense()[nb.index];
    const Vec3 r = xi - p - pose.translation();
    Eigen::Matrix<double, 3, 6> c;
    c << hat(p), -Mat3::Identity();
    gram.noalias() += c.transpose() * c;
    pose_grad.noalias() += c.transpose() * r;
    chamfer += nb.squared_distance;
  }
  const double inv_n = 1.0 / static_cast<double>(input_.size());
  gram *= inv_n;
  pose_grad *= inv_n;

  // Keypoint residuals sqrt(gamma) (y - T b), Jacobian I + Q J.
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd e(dim);
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    const Vec3 q = rot * model_.keypoints().col(i);
    e.segment<3>(3 * i) = y.col(i) - q - pose.translation();
    Eigen::Matrix<double, 3, 6> qrow;
    qrow << hat(q), -Mat3::Identity();
    k.middleRows<3>(3 * i).noalias() += qrow * jac;
  }

  Linearization lin;
  lin.objective = chamfer * inv_n + gamma_ * e.squaredNorm();
  lin.half_gradient = jac.transpose() * pose_grad + gamma_ * k.transpose() * e;
  lin.normal = jac.transpose() * gram * jac + gamma_ * k.transpose() * k;
  return lin;
}

double corrector_objective(const Keypoints& correction, const Keypoints& detected, const PointCloud& input,
                           const ObjectModel& model, double gamma) {
  return CorrectorProblem(detected, input, model, gamma).objective(correction);
}

namespace {

void check_finite(double f, const std::vector<double>& trace) {
  if (!std::isfinite(f)) throw SolverDivergedError("corrector objective became non-finite", trace);
}

void finish(const CorrectorProblem& problem, const Keypoints& best, double gnorm, const CorrectorConfig& cfg,
            CorrectorResult& out) {
  out.correction = best;
  out.corrected = problem.detected() + best;
  out.pose = register_keypoints(out.corrected, problem.model().keypoints()).pose;
  out.final_objective = out.objective_trace.back();
  out.gradient_norm = gnorm;
  out.converged = gnorm <= cfg.grad_tol;
}

CorrectorResult solve_gradient_descent(const CorrectorProblem& problem, const CorrectorConfig& cfg) {
  const double diameter = problem.model().diameter();
  const double fd_step = 1e-6 * diameter;
  auto grad_at = [&](const Keypoints& dy, Keypoints& g) {
    return cfg.gradient_mode == GradientMode::analytic ? problem.gradient(dy, g) : problem.gradient_fd(dy, g, fd_step);
  };

  CorrectorResult out;
  Keypoints dy = Keypoints::Zero(3, problem.detected().cols());
  Keypoints grad;
  double f = grad_at(dy, grad);
  out.objective_trace.push_back(f);
  check_finite(f, out.objective_trace);
  out.initial_objective = f;

  Keypoints candidate, candidate_grad;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    if (grad.norm() / diameter <= cfg.grad_tol) break;
    // Constant step, halved only when it would increase the objective.
    double step = cfg.step_size;
    bool accepted = false;
    for (int halving = 0; halving < 40 && !accepted; ++halving, step *= 0.5) {
      candidate = dy - step * grad;
      const double fc = grad_at(candidate, candidate_grad);
      check_finite(fc, out.objective_trace);
      if (fc <= f) {
        accepted = true;
        dy.swap(candidate);
        grad.swap(candidate_grad);
        f = fc;
      }
    }
    if (!accepted) break;
    out.objective_trace.push_back(f);
  }
  out.iterations = it;
  finish(problem, dy, grad.norm() / diameter, cfg, out);
  return out;
}

CorrectorResult solve_trust_region(const CorrectorProblem& problem, const CorrectorConfig& cfg) {
  const double diameter = problem.model().diameter();
  const Eigen::Index n = problem.detected().cols();
  const Eigen::Index dim = 3 * n;

  auto half_gradient = [&](const Keypoints& dy, CorrectorProblem::Linearization& lin) {
    lin = problem.linearize(dy);
    if (cfg.gradient_mode == GradientMode::finite_difference) {
      Keypoints g;
      problem.gradient_fd(dy, g, 1e-6 * diameter);
      lin.half_gradient = 0.5 * Eigen::Map<const Eigen::VectorXd>(g.data(), dim);
    }
  };

  CorrectorResult out;
  Keypoints dy = Keypoints::Zero(3, n);
  CorrectorProblem::Linearization lin;
  half_gradient(dy, lin);
  double f = lin.objective;
  out.objective_trace.push_back(f);
  check_finite(f, out.objective_trace);
  out.initial_objective = f;

  // Levenberg-Marquardt damping acts as the trust-region radius control.
  double mu = std::max(lin.normal.diagonal().maxCoeff(), 1e-12);
  double nu = 2.0;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    if (2.0 * lin.half_gradient.norm() / diameter <= cfg.grad_tol) break;
    Eigen::MatrixXd damped = lin.normal;
    damped.diagonal().array() += mu;
    const Eigen::VectorXd delta = damped.ldlt().solve(-lin.half_gradient);
    if (!delta.allFinite() || delta.norm() <= 1e-15 * diameter) break;

    Keypoints candidate = dy + Eigen::Map<const Keypoints>(delta.data(), 3, n);
    const double fc = problem.objective(candidate);
    check_finite(fc, out.objective_trace);
    const double predicted = -(2.0 * lin.half_gradient.dot(delta) + delta.dot(lin.normal * delta));
    const double rho = predicted > 0.0 ? (f - fc) / predicted : -1.0;
    // Near the optimum the predicted decrease drops below the rounding of f;
    // there a step is judged by the gradient norm instead.
    const bool unresolved = predicted > 0.0 && predicted < 1e-13 * std::abs(f) && fc <= f + 1e-13 * std::abs(f);
    if (unresolved) {
      CorrectorProblem::Linearization next;
      half_gradient(candidate, next);
      if (next.half_gradient.norm() < lin.half_gradient.norm()) {
        dy = candidate;
        f = std::min(f, fc);
        lin = std::move(next);
        out.objective_trace.push_back(f);
        continue;
      }
    }
    if (rho > 0.0 && fc <= f) {
      dy = candidate;
      f = fc;
      half_gradient(dy, lin);
      out.objective_trace.push_back(f);
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (mu > 1e20) break;
    }
  }
  out.iterations = it;
  finish(problem, dy, 2.0 * lin.half_gradient.norm() / diameter, cfg, out);
  return out;
}

}  // namespace

CorrectorResult solve(const Keypoints& detected, const PointCloud& input, const ObjectModel& model,
                      const CorrectorConfig& cfg) {
  cfg.validate();
  const CorrectorProblem problem(detected, input, model, cfg.gamma);
  return cfg.solver == CorrectorSolver::constant_step_gd ? solve_gradient_descent(problem, cfg)
                                                          : solve_trust_region(problem, cfg);
}

std::vector<BatchOutcome> solve_batch(const std::vector<CorrectorInstance>& batch, const ObjectModel& model,
                                      const CorrectorConfig& cfg, int jobs) {
  if (batch.empty()) throw std::invalid_argument("solve_batch: empty batch");
  cfg.validate();
  std::vector<BatchOutcome> out(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    try {
      out[i].result = solve(batch[i].detected, batch[i].input, model, cfg);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

Eigen::MatrixXd correction_jacobian_fd(const Keypoints& detected, const PointCloud& input, const ObjectModel& model,
                                       const CorrectorConfig& cfg, double step) {
  const Eigen::Index dim = 3 * detected.cols();
  Eigen::MatrixXd jac(dim, dim);
  Keypoints probe = detected;
  for (Eigen::Index col = 0; col < dim; ++col) {
    probe.data()[col] = detected.data()[col] + step;
    const Keypoints plus = solve(probe, input, model, cfg).correction;
    probe.data()[col] = detected.data()[col] - step;
    const Keypoints minus = solve(probe, input, model, cfg).correction;
    probe.data()[col] = detected.data()[col];
    jac.col(col) = Eigen::Map<const Eigen::VectorXd>(plus.data(), dim) - Eigen::Map<const Eigen::VectorXd>(minus.data(), dim);
    jac.col(col) /= 2.0 * step;
  }
  return jac;
}

Keypoints backprop_rule(const CorrectorResult& result, const Keypoints& upstream) {
  if (!result.converged)
    warn("corrector backward rule applied to a non-converged solution (gradient norm " +
         std::to_string(result.gradient_norm) + ")");
  return -upstream;
}

}  // namespace certipose
