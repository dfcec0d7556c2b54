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

// Transcription layer: defects, objective, periodicity, and their
// hand-derived first-order information. The solvers live in
// collocation.cpp and shooting.cpp.

#include <cmath>
#include <vector>

#include "gaitforge/trajopt.hpp"

namespace gaitforge {

namespace {

void require_finite(const DecisionVector& dv, const char* where) {
  if (!dv.z.allFinite()) {
    throw NonFiniteState(std::string(where) + " received a non-finite decision vector");
  }
  if (dv.z.size() != dv.knots * 24) {
    throw DimensionMismatch(std::string(where) + ": decision vector length " +
                            std::to_string(dv.z.size()) + " != knots*24");
  }
}

Vec18 state_derivative(const GaitProblem& p, const Vec18& x, const Vec6& u) {
  State s = State::from_vector(x);
  Control c;
  c.tau = u;
  Vec18 dx;
  dx.head<kNumCoords>() = s.qd;
  dx.tail<kNumCoords>() = forward_dynamics(p.model, s, c, p.contact);
  return dx;
}

// Trapezoidal quadrature weight for knot k over N knots (0.5 at the ends).
double trap_weight(int k, int n) { return (k == 0 || k == n - 1) ? 0.5 : 1.0; }

double mean_forward_speed(const DecisionVector& dv) {
  const int n = dv.knots;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += trap_weight(k, n) * dv.state(k)[kNumCoords + kPelvisX];
  return acc / (n - 1);
}

}  // namespace

DecisionVector DecisionVector::from_flat(int num_knots, Eigen::VectorXd flat) {
  if (flat.size() != num_knots * 24) {
    throw DimensionMismatch("decision vector length " + std::to_string(flat.size()) +
                            " != " + std::to_string(num_knots) + " knots * 24");
  }
  DecisionVector dv;
  dv.knots = num_knots;
  dv.z = std::move(flat);
  return dv;
}

void GaitProblem::validate() const {
  if (!(duration_s > 0.0)) throw PreconditionViolation("gait duration must be positive");
  if (num_knots < 11) {
    throw PreconditionViolation("need at least 11 knots, got " + std::to_string(num_knots));
  }
  if (!(target_speed_mps >= 0.4 && target_speed_mps <= 2.5)) {
    throw PreconditionViolation("target speed " + std::to_string(target_speed_mps) +
                                " outside [0.4, 2.5] m/s");
  }
  if (!(weights.effort > 0.0) || weights.speed_tracking < 0.0 ||
      weights.head_stability < 0.0) {
    throw PreconditionViolation("objective weights must be non-negative, effort positive");
  }
  for (int i = 0; i < kNumCoords; ++i) {
    if (!(bounds.q_min[i] < bounds.q_max[i]) || !(bounds.qd_min[i] < bounds.qd_max[i])) {
      throw PreconditionViolation(std::string("state bounds inverted for ") + coord_name(i));
    }
  }
  if (!(tau_max_nm > 0.0)) throw PreconditionViolation("torque bound must be positive");
  model.validate();
}

GaitProblem make_problem(const SkeletalModel& model, double target_speed_mps,
                         double duration_s, int num_knots) {
  GaitProblem p;
  p.model = model;
  p.target_speed_mps = target_speed_mps;
  p.duration_s = duration_s;
  p.num_knots = num_knots;

  const double standing = model.standing_pelvis_height(p.contact.contact_radius_m);
  const double stride = target_speed_mps * duration_s;
  p.bounds.q_min[kPelvisX] = -1.0;
  p.bounds.q_max[kPelvisX] = stride + 1.0;
  p.bounds.q_min[kPelvisY] = 0.4 * standing;
  p.bounds.q_max[kPelvisY] = 1.5 * standing;
  for (int i = kPelvisPitch; i < kNumCoords; ++i) {
    p.bounds.q_min[i] = model.joint_limits_rad[i].first;
    p.bounds.q_max[i] = model.joint_limits_rad[i].second;
  }
  p.bounds.qd_min[kPelvisX] = -2.0;
  p.bounds.qd_max[kPelvisX] = 2.0 * target_speed_mps + 2.0;
  p.bounds.qd_min[kPelvisY] = -3.0;
  p.bounds.qd_max[kPelvisY] = 3.0;
  for (int i = kPelvisPitch; i < kNumCoords; ++i) {
    p.bounds.qd_min[i] = -15.0;
    p.bounds.qd_max[i] = 15.0;
  }
  p.validate();
  return p;
}

Eigen::VectorXd transcribe_defects(const GaitProblem& problem, const DecisionVector& dv) {
  require_finite(dv, "transcribe_defects");
  const int n = dv.knots;
  const double h = problem.knot_spacing_s();

  std::vector<Vec18> f(n);
  for (int k = 0; k < n; ++k) f[k] = state_derivative(problem, dv.state(k), dv.control(k));

  Eigen::VectorXd defects(18 * (n - 1));
  for (int k = 0; k + 1 < n; ++k) {
    defects.segment<18>(18 * k) =
        Vec18(dv.state(k + 1)) - Vec18(dv.state(k)) - 0.5 * h * (f[k] + f[k + 1]);
  }
  return defects;
}

double objective_eval(const GaitProblem& problem, const DecisionVector& dv) {
  require_finite(dv, "objective_eval");
  const int n = dv.knots;
  const double h = problem.knot_spacing_s();

  double effort = 0.0;
  for (int k = 0; k < n; ++k) {
    const Vec6 u = dv.control(k) / problem.tau_max_nm;
    effort += u.squaredNorm();
  }
  effort *= h;

  const double dv_speed = mean_forward_speed(dv) - problem.target_speed_mps;

  double head = 0.0;
  for (int k = 0; k < n; ++k) {
    const double pitch = dv.state(k)[kPelvisPitch];
    head += pitch * pitch;
  }
  head *= h;

  return problem.weights.effort * effort + problem.weights.speed_tracking * dv_speed * dv_speed +
         problem.weights.head_stability * head;
}

Eigen::VectorXd objective_gradient(const GaitProblem& problem, const DecisionVector& dv) {
  require_finite(dv, "objective_gradient");
  const int n = dv.knots;
  const double h = problem.knot_spacing_s();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dv.z.size());

  const double tau2 = problem.tau_max_nm * problem.tau_max_nm;
  for (int k = 0; k < n; ++k) {
    g.segment<6>(18 * n + 6 * k) =
        problem.weights.effort * h * 2.0 / tau2 * Vec6(dv.control(k));
  }

  const double dspeed = mean_forward_speed(dv) - problem.target_speed_mps;
  for (int k = 0; k < n; ++k) {
    g[18 * k + kNumCoords + kPelvisX] +=
        2.0 * problem.weights.speed_tracking * dspeed * trap_weight(k, n) / (n - 1);
    g[18 * k + kPelvisPitch] +=
        2.0 * problem.weights.head_stability * h * dv.state(k)[kPelvisPitch];
  }
  return g;
}

Vec18 periodicity_residuals(const GaitProblem& problem, const DecisionVector& dv) {
  require_finite(dv, "periodicity_residuals");
  const Vec18 x0 = dv.state(0);
  const Vec18 xT = dv.state(dv.knots - 1);
  Vec18 r = xT - x0;
  r[kPelvisX] -= problem.target_speed_mps * problem.duration_s;
  return r;
}

namespace {

std::vector<StateJacobians> knot_jacobians(const GaitProblem& p, const DecisionVector& dv) {
  std::vector<StateJacobians> jac(dv.knots);
  for (int k = 0; k < dv.knots; ++k) {
    Control c;
    c.tau = dv.control(k);
    jac[k] = dynamics_jacobians(p.model, State::from_vector(dv.state(k)), c, p.contact);
  }
  return jac;
}

}  // namespace

Eigen::VectorXd defect_jvp(const GaitProblem& problem, const DecisionVector& dv,
                           const Eigen::VectorXd& dz) {
  require_finite(dv, "defect_jvp");
  if (dz.size() != dv.z.size()) throw DimensionMismatch("direction length mismatch");
  const int n = dv.knots;
  const double h = problem.knot_spacing_s();
  const auto jac = knot_jacobians(problem, dv);

  std::vector<Vec18> df(n);
  for (int k = 0; k < n; ++k) {
    df[k] = jac[k].A * Vec18(dz.segment<18>(18 * k)) +
            jac[k].B * Vec6(dz.segment<6>(18 * n + 6 * k));
  }
  Eigen::VectorXd out(18 * (n - 1));
  for (int k = 0; k + 1 < n; ++k) {
    out.segment<18>(18 * k) = Vec18(dz.segment<18>(18 * (k + 1))) -
                              Vec18(dz.segment<18>(18 * k)) - 0.5 * h * (df[k] + df[k + 1]);
  }
  return out;
}

Eigen::VectorXd defect_vjp(const GaitProblem& problem, const DecisionVector& dv,
                           const Eigen::VectorXd& w) {
  require_finite(dv, "defect_vjp");
  const int n = dv.knots;
  if (w.size() != 18 * (n - 1)) throw DimensionMismatch("adjoint length mismatch");
  const double h = problem.knot_spacing_s();
  const auto jac = knot_jacobians(problem, dv);

  Eigen::VectorXd g = Eigen::VectorXd::Zero(dv.z.size());
  for (int k = 0; k + 1 < n; ++k) {
    const Vec18 wk = w.segment<18>(18 * k);
    g.segment<18>(18 * k) -= wk + 0.5 * h * (jac[k].A.transpose() * wk);
    g.segment<18>(18 * (k + 1)) += wk;
    g.segment<18>(18 * (k + 1)) -= 0.5 * h * (jac[k + 1].A.transpose() * wk);
    g.segment<6>(18 * n + 6 * k) -= 0.5 * h * (jac[k].B.transpose() * wk);
    g.segment<6>(18 * n + 6 * (k + 1)) -= 0.5 * h * (jac[k + 1].B.transpose() * wk);
  }
  return g;
}

double check_gradients(const GaitProblem& problem, const DecisionVector& dv, double h_fd) {
  require_finite(dv, "check_gradients");
  if (!(h_fd >= 1e-8 && h_fd <= 1e-4)) {
    throw PreconditionViolation("finite-difference step must lie in [1e-8, 1e-4]");
  }
  double max_rel = 0.0;

  // Objective gradient, coordinate-wise central differences.
  const Eigen::VectorXd g = objective_gradient(problem, dv);
  Eigen::VectorXd g_fd(dv.z.size());
  {
    DecisionVector p = dv;
    for (int i = 0; i < dv.z.size(); ++i) {
      const double saved = p.z[i];
      p.z[i] = saved + h_fd;
      const double fp = objective_eval(problem, p);
      p.z[i] = saved - h_fd;
      const double fm = objective_eval(problem, p);
      p.z[i] = saved;
      g_fd[i] = (fp - fm) / (2.0 * h_fd);
    }
  }
  max_rel = std::max(max_rel, (g - g_fd).cwiseAbs().maxCoeff() /
                                  std::max(1.0, g_fd.cwiseAbs().maxCoeff()));

  // Defect Jacobian-vector products along a handful of fixed random
  // directions, against directional differences.
  Rng rng(0x9e3779b9u);
  for (int dir = 0; dir < 5; ++dir) {
    Eigen::VectorXd d(dv.z.size());
    for (int i = 0; i < d.size(); ++i) d[i] = rng.normal();
    d /= d.norm();

    const Eigen::VectorXd analytic = defect_jvp(problem, dv, d);
    DecisionVector p = dv, q = dv;
    p.z += h_fd * d;
    q.z -= h_fd * d;
    const Eigen::VectorXd fd =
        (transcribe_defects(problem, p) - transcribe_defects(problem, q)) / (2.0 * h_fd);
    max_rel = std::max(max_rel, (analytic - fd).cwiseAbs().maxCoeff() /
                                    std::max(1.0, fd.cwiseAbs().maxCoeff()));

    // Adjoint identity: <w, J d> must equal <J^T w, d>.
    Eigen::VectorXd w(analytic.size());
    for (int i = 0; i < w.size(); ++i) w[i] = rng.normal();
    const double lhs = w.dot(analytic);
    const double rhs = defect_vjp(problem, dv, w).dot(d);
    max_rel = std::max(max_rel, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  return max_rel;
}

GaitTrial trial_from_decision(const GaitProblem& problem, const DecisionVector& dv,
                              SolverKind solver) {
  GaitTrial trial;
  trial.subject_id = problem.model.source_subject;
  trial.trial_id = trial.subject_id + ":" + to_string(solver);
  trial.provenance = Provenance::simulated;
  trial.solver = solver;
  trial.scale_factor = problem.model.scale_factor;
  trial.duration_s = problem.duration_s;
  trial.frames.reserve(dv.knots);
  const double h = problem.knot_spacing_s();
  for (int k = 0; k < dv.knots; ++k) {
    TrialFrame frame;
    frame.t_s = k * h;
    const Vec18 x = dv.state(k);
    const Vec9 q = x.head<kNumCoords>();
    for (int c = 0; c < kNumAngleChannels; ++c) frame.angles_deg[c] = rad2deg(q[kHipL + c]);
    frame.joints_3d = landmarks_3d(problem.model, q);
    trial.frames.push_back(std::move(frame));
  }
  trial.validate();
  return trial;
}

double max_joint_limit_violation(const SkeletalModel& model, const DecisionVector& dv) {
  double worst = 0.0;
  for (int k = 0; k < dv.knots; ++k) {
    const Vec18 x = dv.state(k);
    for (int i = 0; i < kNumCoords; ++i) {
      worst = std::max(worst, model.joint_limits_rad[i].first - x[i]);
      worst = std::max(worst, x[i] - model.joint_limits_rad[i].second);
    }
  }
  return worst;
}

}  // namespace gaitforge
