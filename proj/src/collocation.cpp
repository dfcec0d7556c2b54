// Copyright 2026 The GaitForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Direct-collocation gait solver. Augmented-Lagrangian outer loop over the
// defect and periodicity constraints with an L-BFGS inner minimizer. Three
// pieces of standard numerical hygiene matter a lot here:
//   * the ground model makes some defect rows ~1e3 stiffer than others, so
//     constraint rows are equilibrated (weighted AL) and the contact
//     stiffness is ramped up over the early outer iterations;
//   * torques are a few hundred Nm while angles are O(1) rad, so controls
//     are rescaled before the inner solver sees them;
//   * the penalty Hessian is block-tridiagonal (plus periodicity corner
//     blocks), so its Gauss-Newton approximation is sparse-factorized and
//     used as the L-BFGS initial matrix. Without the preconditioner the
//     inner solver needs thousands of iterations per outer step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "gaitforge/trajopt.hpp"
#include "lbfgs.hpp"

namespace gaitforge {

namespace {

bool debug_log_enabled() {
  const char* env = std::getenv("GAITFORGE_LOG");
  return env != nullptr && std::strcmp(env, "debug") == 0;
}

// Internal scale for control variables: the inner solver works on tau/25 so
// torque and angle coordinates have comparable magnitudes.
constexpr double kControlScale = 25.0;

// Augmented-Lagrangian merit over the scaled decision vector y (states as
// is, controls divided by kControlScale):
//   L = J + lambda^T c + rho/2 |S c|^2 + bound penalties
// with c the stacked defects and periodicity residuals, lambda the physical
// multipliers, and S a diagonal row equilibration refreshed each outer
// iteration. Dynamics Jacobians are computed once per evaluation and shared
// between value and gradient.
class MeritFunction {
 public:
  explicit MeritFunction(const GaitProblem& problem) : obj_(&problem), dyn_(&problem) {
    const int n = obj_->num_knots;
    lambda_c = Eigen::VectorXd::Zero(18 * (n - 1));
    lambda_p = Vec18::Zero();
    row_scale_ = Eigen::VectorXd::Ones(18 * (n - 1));
    f_.resize(n);
    jac_.resize(n);
  }

  Eigen::VectorXd lambda_c;  // defect multipliers (physical units)
  Vec18 lambda_p;            // periodicity multipliers
  double rho = 1e2;
  double bound_weight = 1e2;

  void set_dynamics_problem(const GaitProblem& p) { dyn_ = &p; }
  const Eigen::VectorXd& row_scale() const { return row_scale_; }

  DecisionVector unscale(const Eigen::VectorXd& y) const {
    const int n = obj_->num_knots;
    DecisionVector dv = DecisionVector::from_flat(n, y);
    dv.z.tail(6 * n) *= kControlScale;
    return dv;
  }

  Eigen::VectorXd scale(const DecisionVector& dv) const {
    Eigen::VectorXd y = dv.z;
    y.tail(6 * obj_->num_knots) /= kControlScale;
    return y;
  }

  // Gauss-Newton model of the merit Hessian in the scaled variables:
  //   B = rho * J_c^T S^2 J_c + rho * J_p^T J_p + diag(objective) +
  //       diag(active bound curvature) + delta * I,
  // factorized once and applied as the inverse initial matrix of the inner
  // L-BFGS. J_c couples only adjacent knots, so B is block-banded apart
  // from the periodicity corner blocks and factors in milliseconds. The
  // delta shift keeps B positive definite on the merit's flat directions
  // (a rigid x-translation of the whole trajectory changes nothing).
  //
  // `lm_mu` is a Levenberg-Marquardt damping factor: B + mu * diag(B). Far
  // from the constraint manifold the pure Gauss-Newton step overshoots the
  // region where the linearization holds; damping shortens and re-scales
  // it, and the caller anneals mu from observed line-search behavior.
  void build_preconditioner(const DecisionVector& dv, double lm_mu) {
    const int n = obj_->num_knots;
    const double h = obj_->knot_spacing_s();
    const int dim = 24 * n;
    compute_dynamics(dv);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n - 1) * 48 * 48 + 4 * 18 + dim);

    Eigen::Matrix<double, 18, 48> J;
    std::array<int, 48> col{};
    for (int k = 0; k + 1 < n; ++k) {
      J.setZero();
      J.block<18, 18>(0, 0) = -Mat18::Identity() - 0.5 * h * jac_[k].A;
      J.block<18, 18>(0, 18) = Mat18::Identity() - 0.5 * h * jac_[k + 1].A;
      J.block<18, 6>(0, 36) = -0.5 * h * kControlScale * jac_[k].B;
      J.block<18, 6>(0, 42) = -0.5 * h * kControlScale * jac_[k + 1].B;
      J = row_scale_.segment<18>(18 * k).asDiagonal() * J;
      const Eigen::Matrix<double, 48, 48> G = rho * (J.transpose() * J);
      for (int i = 0; i < 18; ++i) col[i] = 18 * k + i;
      for (int i = 0; i < 18; ++i) col[18 + i] = 18 * (k + 1) + i;
      for (int j = 0; j < 6; ++j) col[36 + j] = 18 * n + 6 * k + j;
      for (int j = 0; j < 6; ++j) col[42 + j] = 18 * n + 6 * (k + 1) + j;
      for (int a = 0; a < 48; ++a)
        for (int b = 0; b < 48; ++b) trips.emplace_back(col[a], col[b], G(a, b));
    }

    // Periodicity residuals are linear: J_p = [-I ... +I] over the first and
    // last knot states.
    for (int i = 0; i < 18; ++i) {
      const int first = i, last = 18 * (n - 1) + i;
      trips.emplace_back(first, first, rho);
      trips.emplace_back(last, last, rho);
      trips.emplace_back(first, last, -rho);
      trips.emplace_back(last, first, -rho);
    }

    Eigen::VectorXd diag = Eigen::VectorXd::Zero(dim);
    const double effort_diag = 2.0 * obj_->weights.effort * h * kControlScale *
                               kControlScale / (obj_->tau_max_nm * obj_->tau_max_nm);
    for (int k = 0; k < n; ++k) {
      diag[18 * k + kPelvisPitch] += 2.0 * obj_->weights.head_stability * h;
      for (int j = 0; j < kNumActuated; ++j) diag[18 * n + 6 * k + j] += effort_diag;
    }
    Vec18 lo, hi;
    lo << obj_->bounds.q_min, obj_->bounds.qd_min;
    hi << obj_->bounds.q_max, obj_->bounds.qd_max;
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < 18; ++i) {
        const double v = dv.z[18 * k + i];
        if (v > hi[i] || v < lo[i]) diag[18 * k + i] += 2.0 * bound_weight;
      }
      for (int j = 0; j < kNumActuated; ++j) {
        if (std::abs(dv.z[18 * n + 6 * k + j]) > obj_->tau_max_nm) {
          diag[18 * n + 6 * k + j] += 2.0 * bound_weight * kControlScale * kControlScale;
        }
      }
    }
    const double delta = 1e-7 * rho + 1e-10;
    for (int i = 0; i < dim; ++i) trips.emplace_back(i, i, diag[i] + delta);

    Eigen::SparseMatrix<double> B(dim, dim);
    B.setFromTriplets(trips.begin(), trips.end());
    if (lm_mu > 0.0) {
      const Eigen::VectorXd d = B.diagonal();
      for (int i = 0; i < dim; ++i) B.coeffRef(i, i) += lm_mu * d[i];
    }
    precond_.compute(B);
    precond_ready_ = precond_.info() == Eigen::Success;
  }

  bool precondition_ready() const { return precond_ready_; }

  Eigen::VectorXd precondition(const Eigen::VectorXd& v) const {
    return precond_.solve(v);
  }

  // Equilibrates the velocity-row constraint scales to the current
  // linearization: rows whose Jacobian is dominated by the ground stiffness
  // are weighted down so the penalty Hessian curvature spread stays within
  // about kRowCurvatureCap^2. Full flattening would make violations of the
  // stiff rows too cheap, so the scale is capped rather than exact.
  // Position rows are already O(1).
  void refresh_row_scale(const DecisionVector& dv) {
    constexpr double kRowCurvatureCap = 50.0;
    const int n = obj_->num_knots;
    const double h = obj_->knot_spacing_s();
    compute_dynamics(dv);
    for (int k = 0; k + 1 < n; ++k) {
      for (int i = 0; i < kNumCoords; ++i) {
        double a = 0.0;
        for (int kk : {k, k + 1}) {
          a = std::max(a, jac_[kk].A.row(kNumCoords + i).cwiseAbs().maxCoeff());
          a = std::max(a, jac_[kk].B.row(kNumCoords + i).cwiseAbs().maxCoeff() * kControlScale);
        }
        row_scale_[18 * k + kNumCoords + i] = 1.0 / (1.0 + 0.5 * h * a / kRowCurvatureCap);
      }
    }
  }

  double operator()(const Eigen::VectorXd& y, Eigen::VectorXd& grad) {
    if (!y.allFinite()) return std::numeric_limits<double>::infinity();
    const int n = obj_->num_knots;
    const double h = obj_->knot_spacing_s();
    DecisionVector dv = unscale(y);

    try {
      compute_dynamics(dv);
    } catch (const SingularConfiguration&) {
      return std::numeric_limits<double>::infinity();
    }

    Eigen::VectorXd defects(18 * (n - 1));
    for (int k = 0; k + 1 < n; ++k) {
      defects.segment<18>(18 * k) =
          Vec18(dv.state(k + 1)) - Vec18(dv.state(k)) - 0.5 * h * (f_[k] + f_[k + 1]);
    }
    const Vec18 per = periodicity_residuals(*obj_, dv);

    const Eigen::VectorXd scaled = row_scale_.cwiseProduct(defects);
    double value = objective_eval(*obj_, dv) + lambda_c.dot(defects) +
                   0.5 * rho * scaled.squaredNorm() + lambda_p.dot(per) +
                   0.5 * rho * per.squaredNorm();
    grad = objective_gradient(*obj_, dv);

    // Adjoint pass with w_k = lambda_k + rho * S^2 c_k.
    for (int k = 0; k + 1 < n; ++k) {
      const Vec18 wk =
          lambda_c.segment<18>(18 * k) +
          rho * row_scale_.segment<18>(18 * k).array().square().matrix().cwiseProduct(
                    defects.segment<18>(18 * k));
      grad.segment<18>(18 * k) -= wk + 0.5 * h * (jac_[k].A.transpose() * wk);
      grad.segment<18>(18 * (k + 1)) += wk - 0.5 * h * (jac_[k + 1].A.transpose() * wk);
      grad.segment<6>(18 * n + 6 * k) -= 0.5 * h * (jac_[k].B.transpose() * wk);
      grad.segment<6>(18 * n + 6 * (k + 1)) -= 0.5 * h * (jac_[k + 1].B.transpose() * wk);
    }
    const Vec18 wp = lambda_p + rho * per;
    grad.segment<18>(18 * (n - 1)) += wp;
    grad.segment<18>(0) -= wp;

    // Soft box bounds: quadratic hinge on states and torques.
    Vec18 lo, hi;
    lo << obj_->bounds.q_min, obj_->bounds.qd_min;
    hi << obj_->bounds.q_max, obj_->bounds.qd_max;
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < 18; ++i) {
        const double v = dv.z[18 * k + i];
        if (v > hi[i]) {
          value += bound_weight * (v - hi[i]) * (v - hi[i]);
          grad[18 * k + i] += 2.0 * bound_weight * (v - hi[i]);
        } else if (v < lo[i]) {
          value += bound_weight * (lo[i] - v) * (lo[i] - v);
          grad[18 * k + i] -= 2.0 * bound_weight * (lo[i] - v);
        }
      }
      for (int j = 0; j < kNumActuated; ++j) {
        const double u = dv.z[18 * n + 6 * k + j];
        const double over = std::abs(u) - obj_->tau_max_nm;
        if (over > 0.0) {
          value += bound_weight * over * over;
          grad[18 * n + 6 * k + j] += 2.0 * bound_weight * over * (u > 0.0 ? 1.0 : -1.0);
        }
      }
    }

    // Chain rule into the scaled control variables.
    grad.tail(6 * n) *= kControlScale;
    return value;
  }

 private:
  void compute_dynamics(const DecisionVector& dv) {
    const int n = obj_->num_knots;
    for (int k = 0; k < n; ++k) {
      const State s = State::from_vector(dv.state(k));
      Control c;
      c.tau = dv.control(k);
      f_[k].head<kNumCoords>() = s.qd;
      f_[k].tail<kNumCoords>() = forward_dynamics(dyn_->model, s, c, dyn_->contact);
      jac_[k] = dynamics_jacobians(dyn_->model, s, c, dyn_->contact);
    }
  }

  const GaitProblem* obj_;  // objective, bounds, and true problem data
  const GaitProblem* dyn_;  // dynamics source (softened during continuation)
  Eigen::VectorXd row_scale_;
  std::vector<Vec18> f_;
  std::vector<StateJacobians> jac_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> precond_;
  bool precond_ready_ = false;
};

double log_lerp(double a, double b, double t) {
  return std::exp(std::log(a) + t * (std::log(b) - std::log(a)));
}

}  // namespace

DecisionVector make_initial_guess(const GaitProblem& problem, std::uint64_t seed,
                                  const CollocationOptions& options) {
  problem.validate();
  const int n = problem.num_knots;
  const double h = problem.knot_spacing_s();
  const double v = problem.target_speed_mps;
  const double standing =
      problem.model.standing_pelvis_height(problem.contact.contact_radius_m);

  DecisionVector dv(n);
  for (int k = 0; k < n; ++k) {
    auto x = dv.state(k);
    x[kPelvisX] = v * (k * h);
    x[kPelvisY] = standing;
    x[kNumCoords + kPelvisX] = v;
  }

  // Smooth, periodic, seed-driven noise on the angle coordinates and the
  // torques. The standing guess is left/right symmetric, which is a saddle
  // of the periodic gait problem; the noise pushes the solve off it. Using
  // offset + one sine harmonic keeps the perturbed guess consistent with
  // its own velocities, so the initial defects stay small.
  Rng rng(Rng::derive(seed, 0xC0110C));
  const double omega = 2.0 * kPi / problem.duration_s;
  for (int i = kPelvisPitch; i < kNumCoords; ++i) {
    const double offset = options.init_noise_angles_rad * rng.normal();
    const double amp = options.init_noise_angles_rad * rng.normal();
    const double phase = 2.0 * kPi * rng.uniform();
    for (int k = 0; k < n; ++k) {
      const double t = k * h;
      auto x = dv.state(k);
      x[i] += offset + amp * std::sin(omega * t + phase);
      x[kNumCoords + i] += amp * omega * std::cos(omega * t + phase);
    }
  }
  for (int j = 0; j < kNumActuated; ++j) {
    const double offset = options.init_noise_torque_nm * rng.normal();
    const double amp = options.init_noise_torque_nm * rng.normal();
    const double phase = 2.0 * kPi * rng.uniform();
    for (int k = 0; k < n; ++k) {
      dv.control(k)[j] = offset + amp * std::sin(omega * (k * h) + phase);
    }
  }
  return dv;
}

std::pair<GaitTrial, SolveReport> solve_collocation(const GaitProblem& problem,
                                                    std::uint64_t seed) {
  return solve_collocation(problem, seed, CollocationOptions{});
}

std::pair<GaitTrial, SolveReport> solve_collocation(const GaitProblem& problem,
                                                    std::uint64_t seed,
                                                    const CollocationOptions& options) {
  auto [dv, report] = solve_collocation_decision(problem, seed, options);
  GaitTrial trial = trial_from_decision(problem, dv, SolverKind::collocation);
  return {std::move(trial), report};
}

std::pair<DecisionVector, SolveReport> solve_collocation_decision(
    const GaitProblem& problem, std::uint64_t seed, const CollocationOptions& options) {
  problem.validate();

  MeritFunction merit(problem);
  merit.rho = options.rho_initial;
  merit.bound_weight = options.bound_weight;

  DecisionVector dv = make_initial_guess(problem, seed, options);
  SolveReport report;
  double prev_violation = std::numeric_limits<double>::infinity();
  double lm_mu = 1.0;  // annealed by the inner loop, persists across outers

  // The continuation problem for softened outer iterations: the ground
  // holds the soft parameters for the first third of the soft phase, then
  // ramps geometrically so the last soft outer reaches the true values.
  GaitProblem ramp = problem;
  const int plateau = options.soft_contact_outers / 3;

  for (int outer = 0; outer < options.outer_iterations; ++outer) {
    const bool softened = outer < options.soft_contact_outers;
    if (softened) {
      const double t =
          (outer < plateau)
              ? 0.0
              : static_cast<double>(outer - plateau + 1) /
                    std::max(1, options.soft_contact_outers - plateau);
      ramp.contact.stiffness_n_per_m = log_lerp(options.soft_contact_stiffness,
                                                problem.contact.stiffness_n_per_m, t);
      ramp.contact.smoothing_depth_m = log_lerp(options.soft_contact_smoothing_m,
                                                problem.contact.smoothing_depth_m, t);
    }
    const GaitProblem& active = softened ? ramp : problem;
    merit.set_dynamics_problem(active);
    merit.refresh_row_scale(dv);

    // Inner minimization in chunks: the Gauss-Newton preconditioner is
    // factorized at the current iterate, ridden for kPrecondRefresh L-BFGS
    // iterations, then rebuilt (the curvature history only matches one
    // operator, so each chunk restarts the recursion). The damping factor
    // anneals between chunks: truncated line searches mean the model step
    // overreaches (raise mu), full steps mean it can be trusted (lower mu).
    constexpr int kPrecondRefresh = 60;
    internal::LbfgsOptions inner;
    inner.grad_tolerance = options.inner_grad_tol;
    Eigen::VectorXd y = merit.scale(dv);
    int remaining = options.inner_iterations;
    int inner_used = 0;
    while (remaining > 0) {
      inner.max_iterations = std::min(kPrecondRefresh, remaining);
      merit.build_preconditioner(merit.unscale(y), lm_mu);
      std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h0;
      if (merit.precondition_ready()) {
        h0 = [&merit](const Eigen::VectorXd& v) { return merit.precondition(v); };
      }
      auto result = internal::lbfgs_minimize(std::ref(merit), std::move(y), inner, h0);
      y = std::move(result.x);
      remaining -= std::max(1, result.iterations);
      inner_used += result.iterations;
      if (result.mean_step < 0.25) {
        lm_mu = std::min(lm_mu * 8.0, 1e3);
      } else if (result.mean_step > 0.75) {
        lm_mu = std::max(lm_mu * 0.25, 1e-8);
      }
      if (result.converged || result.iterations < inner.max_iterations) break;
    }
    dv = merit.unscale(y);
    report.iterations += inner_used;

    const Eigen::VectorXd defects = transcribe_defects(active, dv);
    const Vec18 per = periodicity_residuals(active, dv);
    const double violation =
        std::max(defects.lpNorm<Eigen::Infinity>(), per.lpNorm<Eigen::Infinity>());

    // Safeguarded first-order updates: the multipliers move only when the
    // outer iteration contracted the violation, otherwise the penalty grows.
    // Updating multipliers from subproblems that did not restore
    // feasibility inflates them and destabilizes later outers; a frozen
    // penalty lets the iterate drift while the ground stiffness ramps. The
    // comparison is against the previous outer (not the best seen) so a
    // continuation step that displaces the iterate resets the bar instead
    // of locking the updates out.
    if (violation <= std::max(options.constraint_tol, 0.5 * prev_violation)) {
      merit.lambda_c +=
          merit.rho * merit.row_scale().array().square().matrix().cwiseProduct(defects);
      merit.lambda_p += merit.rho * per;
    } else {
      merit.rho = std::min(merit.rho * options.rho_growth, options.rho_max);
    }
    prev_violation = violation;

    const double true_violation =
        softened ? std::max(transcribe_defects(problem, dv).lpNorm<Eigen::Infinity>(),
                            periodicity_residuals(problem, dv).lpNorm<Eigen::Infinity>())
                 : violation;
    if (debug_log_enabled()) {
      std::fprintf(
          stderr,
          "[gaitforge] collocation outer %d: k %.2e rho %.1e mu %.1e viol %.3e "
          "(true %.3e) obj %.6f inner %d%s\n",
          outer, active.contact.stiffness_n_per_m, merit.rho, lm_mu, violation,
          true_violation, objective_eval(problem, dv), inner_used,
          softened ? " (ramp)" : "");
    }
    if (!softened && true_violation < 0.02 * options.constraint_tol) break;
  }

  report.max_defect = transcribe_defects(problem, dv).lpNorm<Eigen::Infinity>();
  report.max_periodicity_violation =
      periodicity_residuals(problem, dv).lpNorm<Eigen::Infinity>();
  report.final_objective = objective_eval(problem, dv);
  report.achieved_speed_mps =
      (dv.state(problem.num_knots - 1)[kPelvisX] - dv.state(0)[kPelvisX]) /
      problem.duration_s;
  report.converged = report.max_defect < options.constraint_tol &&
                     report.max_periodicity_violation < options.constraint_tol;
  return {std::move(dv), report};
}

}  // namespace gaitforge
