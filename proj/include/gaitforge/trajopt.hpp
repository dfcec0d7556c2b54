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

#ifndef GAITFORGE_TRAJOPT_HPP_
#define GAITFORGE_TRAJOPT_HPP_

// Periodic-gait optimal control, solved two ways:
//   * direct collocation — trapezoidal transcription, augmented-Lagrangian
//     outer loop over an L-BFGS (strong Wolfe) inner minimizer, with
//     hand-derived constraint Jacobian products;
//   * single shooting — per-joint periodic cubic-spline torques rolled out
//     with the fixed-step integrator and optimized by CMA-ES.
// Both are deterministic given their seeds.

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "gaitforge/dynamics.hpp"
#include "gaitforge/trial.hpp"

namespace gaitforge {

struct ObjectiveWeights {
  double effort = 1.0;           // normalized squared-torque integral
  double speed_tracking = 10.0;  // (mean forward pelvis speed - target)^2
  double head_stability = 1.0;   // pelvis-pitch squared integral
};

// Box bounds on states, enforced by the solvers as soft quadratic penalties.
struct StateBounds {
  Vec9 q_min = Vec9::Zero();
  Vec9 q_max = Vec9::Zero();
  Vec9 qd_min = Vec9::Zero();
  Vec9 qd_max = Vec9::Zero();
};

struct GaitProblem {
  SkeletalModel model;
  double duration_s = 2.0;
  double target_speed_mps = 1.3;
  int num_knots = 41;
  ObjectiveWeights weights;
  StateBounds bounds;
  double tau_max_nm = kDefaultTauMaxNm;
  ContactParams contact;

  double knot_spacing_s() const { return duration_s / (num_knots - 1); }
  // Throws PreconditionViolation on violated invariants (duration, knot
  // count >= 11, target speed in [0.4, 2.5], weight signs, bound ordering).
  void validate() const;
};

// Problem with bounds derived from the model: joint limits for angles, a
// corridor around the expected pelvis path for the floating coordinates.
GaitProblem make_problem(const SkeletalModel& model, double target_speed_mps,
                         double duration_s = 2.0, int num_knots = 41);

// Flat unknown vector [x_0 .. x_{N-1}, u_0 .. u_{N-1}]; x is 18 state values
// per knot, u is 6 torques per knot, so the length is N*24.
struct DecisionVector {
  int knots = 0;
  Eigen::VectorXd z;

  DecisionVector() = default;
  explicit DecisionVector(int num_knots)
      : knots(num_knots), z(Eigen::VectorXd::Zero(num_knots * 24)) {}
  static DecisionVector from_flat(int num_knots, Eigen::VectorXd flat);

  Eigen::VectorBlock<Eigen::VectorXd, 18> state(int k) { return z.segment<18>(18 * k); }
  Eigen::VectorBlock<const Eigen::VectorXd, 18> state(int k) const {
    return z.segment<18>(18 * k);
  }
  Eigen::VectorBlock<Eigen::VectorXd, 6> control(int k) {
    return z.segment<6>(18 * knots + 6 * k);
  }
  Eigen::VectorBlock<const Eigen::VectorXd, 6> control(int k) const {
    return z.segment<6>(18 * knots + 6 * k);
  }
};

// Trapezoidal defects, one 18-vector per interval, flattened to (N-1)*18:
//   defect_k = x_{k+1} - x_k - h/2 * (f(x_k,u_k) + f(x_{k+1},u_{k+1})).
Eigen::VectorXd transcribe_defects(const GaitProblem& problem, const DecisionVector& dv);

// cost = w_eff * h * sum_k sum_i (tau_ki / tau_max)^2
//      + w_speed * (mean forward pelvis speed - target)^2
//      + w_head * h * sum_k pitch_k^2
// where the mean speed is the trapezoidal average of the pelvis x-velocity
// knot values.
double objective_eval(const GaitProblem& problem, const DecisionVector& dv);
Eigen::VectorXd objective_gradient(const GaitProblem& problem, const DecisionVector& dv);

// 18 residuals: q(T) - q(0) - [v*T, 0, ..., 0] and qd(T) - qd(0).
Vec18 periodicity_residuals(const GaitProblem& problem, const DecisionVector& dv);

// Analytic Jacobian-vector products of the defect map (forward and adjoint),
// built from the dynamics A/B matrices at each knot.
Eigen::VectorXd defect_jvp(const GaitProblem& problem, const DecisionVector& dv,
                           const Eigen::VectorXd& dz);
Eigen::VectorXd defect_vjp(const GaitProblem& problem, const DecisionVector& dv,
                           const Eigen::VectorXd& w);

// Compares the analytic objective gradient and defect Jacobian-vector
// products against central finite differences; returns the max relative
// error. h_fd must lie in [1e-8, 1e-4].
double check_gradients(const GaitProblem& problem, const DecisionVector& dv, double h_fd);

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double final_objective = 0.0;
  double max_defect = 0.0;
  double max_periodicity_violation = 0.0;
  double achieved_speed_mps = 0.0;
};

struct CollocationOptions {
  int outer_iterations = 26;
  int inner_iterations = 700;     // L-BFGS budget per outer iteration
  double rho_initial = 3e2;       // penalty on constraint violation
  double rho_growth = 3.0;
  double rho_max = 3e7;
  double constraint_tol = 1e-3;   // defect and periodicity convergence bar
  double bound_weight = 5e2;      // soft box-bound penalty
  double inner_grad_tol = 1e-6;
  // Contact stiffness continuation: the first soft_contact_outers outer
  // iterations run on softened ground, holding the values below for the
  // first third and then ramping geometrically to the true parameters. The
  // smoothing depth does most of the work: it sets the width of the
  // force-onset transition, and with it the worst curvature (~2k/d0) the
  // inner solver must cross.
  int soft_contact_outers = 15;
  double soft_contact_stiffness = 1e4;
  double soft_contact_smoothing_m = 3e-2;
  double init_noise_angles_rad = 0.02;  // symmetry-breaking initial noise
  double init_noise_torque_nm = 2.0;
};

// Trapezoidal collocation with periodic boundary conditions. The seed only
// shapes the symmetry-breaking noise on the initial guess; the solve itself
// is deterministic. Reports non-convergence in the SolveReport instead of
// throwing, so batch callers can triage.
std::pair<GaitTrial, SolveReport> solve_collocation(const GaitProblem& problem,
                                                    std::uint64_t seed);
std::pair<GaitTrial, SolveReport> solve_collocation(const GaitProblem& problem,
                                                    std::uint64_t seed,
                                                    const CollocationOptions& options);
// Solver core returning the raw decision vector; the trial-returning wrapper
// above samples it. Exposed so reproducibility can be checked bitwise.
std::pair<DecisionVector, SolveReport> solve_collocation_decision(
    const GaitProblem& problem, std::uint64_t seed,
    const CollocationOptions& options = CollocationOptions{});

struct EsConfig {
  int population = 16;
  int max_generations = 250;
  double sigma0 = 1.0;            // step size in the scaled genome space
  double rollout_dt = 2.5e-3;
  double fall_height_fraction = 0.6;  // of standing pelvis height
  // Large enough that any surviving rollout, however wild, scores better
  // than the cleanest fall; the search must first stay upright and only
  // then shape the gait. Smaller values invert that ordering because the
  // periodicity term of a flailing survivor can reach 1e5.
  double fall_penalty = 1e6;
  double periodicity_weight = 5.0;    // pulls the rollout toward a cyclic gait
  // Rollout-cost weight on (mean speed − target)², replacing the problem's
  // own speed weight during the search. Sampling optimizers need the speed
  // error to dominate effort, or marching in place becomes the cheapest way
  // to survive; the convergence bar demands the target speed regardless.
  double speed_shaping_weight = 400.0;
  // Treadmill window: the rollout terminates (scored like a fall) once the
  // pelvis trails the target-speed reference point v·t by more than this.
  // Without it, standing in place is a survival strategy and a far larger
  // attractor than walking; with it, surviving longer means walking farther.
  double max_lag_m = 0.35;
  // Quadratic penalty per (rad² · s) of joint-limit excess. Rollouts have no
  // hard bounds, and without this term the search happily spins joints
  // through full revolutions to keep the pelvis up.
  double joint_limit_weight = 2e3;
  double speed_tol_fraction = 0.05;   // convergence bar on achieved speed
  std::uint64_t seed = 1;
};

// Single shooting: per-joint periodic cubic splines (spline_knots control
// points per joint) rolled out for one period and scored with the same
// objective terms plus a fall penalty; optimized by CMA-ES.
std::pair<GaitTrial, SolveReport> solve_shooting(const GaitProblem& problem, int spline_knots,
                                                 const EsConfig& config);
// Core of the shooting solver: best genome plus report, without the
// NoConvergence throw of the wrapper above. Exposed so reproducibility and
// partial progress can be inspected.
std::pair<Eigen::VectorXd, SolveReport> solve_shooting_genome(const GaitProblem& problem,
                                                              int spline_knots,
                                                              const EsConfig& config);

// Initial guess used by the collocation solver (standing pose advancing at
// the target speed, zero torques, seed-driven symmetry-breaking noise);
// exposed for tests.
DecisionVector make_initial_guess(const GaitProblem& problem, std::uint64_t seed,
                                  const CollocationOptions& options);

// Samples a decision vector into a trial: one frame per knot with angles in
// degrees and 3D joint centres from forward kinematics.
GaitTrial trial_from_decision(const GaitProblem& problem, const DecisionVector& dv,
                              SolverKind solver);

// Max violation of the model's joint limits over the trial's frames, radians.
double max_joint_limit_violation(const SkeletalModel& model, const DecisionVector& dv);

}  // namespace gaitforge

#endif  // GAITFORGE_TRAJOPT_HPP_
