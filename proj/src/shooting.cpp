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

// Single-shooting gait solver: per-joint periodic cubic-spline torques,
// fixed-step rollouts, CMA-ES over the spline values plus a handful of
// initial-posture tweaks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cmaes.hpp"
#include "gaitforge/trajopt.hpp"
#include "periodic_spline.hpp"

namespace gaitforge {

namespace {

bool debug_log_enabled() {
  const char* env = std::getenv("GAITFORGE_LOG");
  return env != nullptr && std::strcmp(env, "debug") == 0;
}

// Genome layout: 3 blocks of P spline torque values (hip, knee, ankle
// patterns — the right leg replays the left pattern phase-shifted by half
// the period, the strongest structural prior of steady gait), then 17
// initial-state tweaks: pelvis height, pitch and the six joint angles, then
// pelvis velocities and the seven angular rates. Velocity tweaks matter
// because a periodic gait passes any phase with specific nonzero joint
// rates; pinning the start to zero rates would force the end there too.
// All entries live in a unit-scaled space so a single CMA-ES step size
// covers them.
constexpr double kTorqueScaleNm = 30.0;
constexpr double kPoseScaleRad = 0.3;
constexpr double kHeightScaleM = 0.03;
constexpr double kPelvisRateScale = 0.3;  // m/s (and rad/s for pitch)
constexpr double kJointRateScale = 1.0;   // rad/s
constexpr int kNumTweaks = 17;
constexpr int kNumJointPatterns = 3;  // hip, knee, ankle (shared across legs)
// Converged gaits must respect joint limits to within this soft margin.
const double kLimitMarginRad = deg2rad(5.0);

int genome_dim(int spline_knots) {
  return kNumJointPatterns * spline_knots + kNumTweaks;
}

std::vector<internal::PeriodicCubicSpline> build_splines(const GaitProblem& problem,
                                                         int spline_knots,
                                                         const Eigen::VectorXd& genome) {
  std::vector<internal::PeriodicCubicSpline> splines;
  splines.reserve(kNumJointPatterns);
  for (int j = 0; j < kNumJointPatterns; ++j) {
    splines.emplace_back(problem.duration_s,
                         kTorqueScaleNm * genome.segment(j * spline_knots, spline_knots));
  }
  return splines;
}

// Actuator torques at time t: left leg reads the patterns in phase, the
// right leg half a period later.
Vec6 torques_at(const GaitProblem& problem,
                const std::vector<internal::PeriodicCubicSpline>& splines, double t) {
  const double half = 0.5 * problem.duration_s;
  Vec6 tau;
  for (int j = 0; j < kNumJointPatterns; ++j) {
    tau[j] = std::clamp(splines[j](t), -problem.tau_max_nm, problem.tau_max_nm);
    tau[kNumJointPatterns + j] =
        std::clamp(splines[j](t + half), -problem.tau_max_nm, problem.tau_max_nm);
  }
  return tau;
}

// Starting mean for the ES: a coarse textbook torque pattern — hip extension
// through stance flipping to a flexion burst at push-off, knee extension
// while loaded, an ankle plantarflexion ramp peaking at push-off — and no
// posture tweaks. The phase origin matches the mid-stride initial state
// below (left leg in late stance at t=0). Values are in units of
// kTorqueScaleNm and land well inside the walking basin, which matters
// because a zero mean makes the search spend hundreds of generations just
// discovering how not to fall.
Eigen::VectorXd nominal_genome(int spline_knots) {
  constexpr std::array<std::array<double, 6>, kNumJointPatterns> kPattern = {{
      {-0.83, -0.33, 0.93, 0.50, -0.40, -0.73},   // hip
      {-0.40, -0.27, 0.40, 0.20, -0.33, -0.40},   // knee
      {-0.50, -1.00, -0.27, 0.20, 0.13, -0.20},   // ankle
  }};
  Eigen::VectorXd g = Eigen::VectorXd::Zero(genome_dim(spline_knots));
  for (int j = 0; j < kNumJointPatterns; ++j) {
    for (int k = 0; k < spline_knots; ++k) {
      // Periodic linear interpolation of the 6-point pattern at phase k/P.
      const double u = 6.0 * k / spline_knots;
      const int i0 = static_cast<int>(u) % 6;
      const double w = u - std::floor(u);
      g[j * spline_knots + k] =
          (1.0 - w) * kPattern[static_cast<std::size_t>(j)][static_cast<std::size_t>(i0)] +
          w * kPattern[static_cast<std::size_t>(j)][static_cast<std::size_t>((i0 + 1) % 6)];
    }
  }
  return g;
}

Vec18 initial_state(const GaitProblem& problem, int spline_knots,
                    const Eigen::VectorXd& genome) {
  const double standing =
      problem.model.standing_pelvis_height(problem.contact.contact_radius_m);
  // Nominal start: a mid-stride posture (left leg trailing in stance, right
  // leg swinging through with a flexed knee, slight forward lean and
  // scissoring hip rates). Symmetric standing is a saddle of the periodic
  // gait problem and sits far from every walking limit cycle, so centering
  // the search there makes the ES fight the fall cliff from the worst spot.
  Vec18 x = Vec18::Zero();
  x[kPelvisY] = standing - 0.01;
  x[kPelvisPitch] = 0.03;
  x[kHipL] = -0.15;
  x[kKneeL] = 0.05;
  x[kHipR] = 0.35;
  x[kKneeR] = 0.35;
  x[kNumCoords + kPelvisX] = problem.target_speed_mps;
  x[kNumCoords + kHipL] = -1.2;
  x[kNumCoords + kKneeL] = 0.3;
  x[kNumCoords + kHipR] = 1.0;
  x[kNumCoords + kKneeR] = -1.5;
  const int base = kNumJointPatterns * spline_knots;
  x[kPelvisY] += kHeightScaleM * genome[base];
  for (int i = 0; i < 7; ++i) {
    x[kPelvisPitch + i] += kPoseScaleRad * genome[base + 1 + i];
  }
  x[kNumCoords + kPelvisX] += kPelvisRateScale * genome[base + 8];
  x[kNumCoords + kPelvisY] += kPelvisRateScale * genome[base + 9];
  x[kNumCoords + kPelvisPitch] += kPelvisRateScale * genome[base + 10];
  for (int i = 0; i < 6; ++i) {
    x[kNumCoords + kHipL + i] += kJointRateScale * genome[base + 11 + i];
  }
  // Tweaked poses must still be legal: starting outside a joint limit would
  // charge the limit penalty before the controller has done anything.
  for (int i = 0; i < kNumCoords; ++i) {
    const auto& [lo, hi] = problem.model.joint_limits_rad[i];
    x[i] = std::clamp(x[i], lo, hi);
  }
  return x;
}

struct Rollout {
  bool fell = false;
  double cost = 0.0;
  double speed = 0.0;    // zero when the model fell
  double t_alive = 0.0;  // time survived inside the window
  // Worst joint-limit violation over the knot-time samples. The convergence
  // margin is defined at knots (matching how collocation trials are judged);
  // between-knot excursions are still charged through the integral term.
  double max_limit_excess_rad = 0.0;
  Vec18 x_start = Vec18::Zero();
  Vec18 x_end = Vec18::Zero();
  std::vector<Vec18> knot_states;
  std::vector<Vec6> knot_controls;
};

Rollout roll(const GaitProblem& problem,
             const std::vector<internal::PeriodicCubicSpline>& splines, const Vec18& x0,
             const EsConfig& config, bool record) {
  const int n = problem.num_knots;
  const double h = problem.knot_spacing_s();
  const int steps_per_knot = std::max(1, static_cast<int>(std::lround(h / config.rollout_dt)));
  const double dt = h / steps_per_knot;
  const double standing =
      problem.model.standing_pelvis_height(problem.contact.contact_radius_m);
  const double fall_y = config.fall_height_fraction * standing;

  Rollout r;
  r.x_start = x0;
  State s = State::from_vector(x0);

  if (record) {
    r.knot_states.reserve(n);
    r.knot_controls.reserve(n);
    r.knot_states.push_back(x0);
    r.knot_controls.push_back(torques_at(problem, splines, 0.0));
  }

  double effort = 0.0, head = 0.0, limit = 0.0, hinge = 0.0;
  double t_fall = problem.duration_s;
  const int total_steps = (n - 1) * steps_per_knot;
  for (int step = 0; step < total_steps; ++step) {
    const double t = step * dt;
    Control c;
    c.tau = torques_at(problem, splines, t);
    effort += (c.tau / problem.tau_max_nm).squaredNorm();
    head += s.q[kPelvisPitch] * s.q[kPelvisPitch];
    const bool at_knot = (step + 1) % steps_per_knot == 0;
    for (int i = 0; i < kNumCoords; ++i) {
      const auto& [lo, hi] = problem.model.joint_limits_rad[i];
      const double ex = std::max({0.0, lo - s.q[i], s.q[i] - hi});
      limit += ex * ex;
      const double hx = ex - kLimitMarginRad;
      if (hx > 0.0) hinge += hx * hx;
      if (at_knot) r.max_limit_excess_rad = std::max(r.max_limit_excess_rad, ex);
    }
    try {
      s = integrate_step(problem.model, s, c, problem.contact, dt);
    } catch (const Error&) {  // blew up: treat like a fall at this instant
      r.fell = true;
      t_fall = t;
      break;
    }
    if (s.q[kPelvisY] < fall_y ||
        s.q[kPelvisX] - r.x_start[kPelvisX] <
            problem.target_speed_mps * ((step + 1) * dt) - config.max_lag_m) {
      r.fell = true;
      t_fall = (step + 1) * dt;
      break;
    }
    if (record && (step + 1) % steps_per_knot == 0) {
      r.knot_states.push_back(s.as_vector());
      r.knot_controls.push_back(torques_at(problem, splines, (step + 1) * dt));
    }
  }
  r.x_end = s.as_vector();
  r.t_alive = t_fall;

  // Three limit charges with distinct roles: the integral taxes all excess
  // mildly (leaning on a passive stop is otherwise free energy storage that
  // the effort term never sees), the knot-max term puts direct pressure on
  // the quantity the convergence margin checks, and the hinge makes excess
  // beyond the allowed margin nearly as bad as falling — the margin is a
  // contract, the band below it is legitimately usable compliance.
  r.cost = problem.weights.effort * dt * effort + problem.weights.head_stability * dt * head +
           config.joint_limit_weight *
               (dt * limit +
                problem.duration_s * r.max_limit_excess_rad * r.max_limit_excess_rad +
                100.0 * dt * hinge);
  if (r.fell) {
    // Earlier falls cost more, giving the search a gradient toward staying
    // upright for the whole period.
    r.cost += config.fall_penalty * (1.0 + (problem.duration_s - t_fall) / problem.duration_s);
  } else {
    r.speed = (r.x_end[kPelvisX] - r.x_start[kPelvisX]) / problem.duration_s;
    const double dspeed = r.speed - problem.target_speed_mps;
    r.cost += config.speed_shaping_weight * dspeed * dspeed;
    Vec18 per = r.x_end - r.x_start;
    per[kPelvisX] -= problem.target_speed_mps * problem.duration_s;
    r.cost += config.periodicity_weight * per.squaredNorm();
  }
  return r;
}

DecisionVector decision_from_rollout(const GaitProblem& problem, const Rollout& r) {
  DecisionVector dv(problem.num_knots);
  for (int k = 0; k < problem.num_knots; ++k) {
    dv.state(k) = r.knot_states[static_cast<std::size_t>(k)];
    dv.control(k) = r.knot_controls[static_cast<std::size_t>(k)];
  }
  return dv;
}

}  // namespace

std::pair<Eigen::VectorXd, SolveReport> solve_shooting_genome(const GaitProblem& problem,
                                                              int spline_knots,
                                                              const EsConfig& config) {
  if (spline_knots < 4) throw PreconditionViolation("need at least 4 spline knots per joint");
  if (config.population < 8) {
    throw PreconditionViolation("shooting population must be at least 8");
  }
  problem.validate();

  auto cost_fn = [&](const Eigen::VectorXd& genome) {
    return roll(problem, build_splines(problem, spline_knots, genome),
                initial_state(problem, spline_knots, genome), config, false)
        .cost;
  };

  // Stop as soon as the incumbent walks the whole period at an acceptable
  // speed; the detailed check runs only when the best cost improves.
  double last_checked = std::numeric_limits<double>::infinity();
  auto should_stop = [&](int gen, double best_f, const Eigen::VectorXd& best_x) {
    if (best_f >= last_checked) return false;
    last_checked = best_f;
    if (best_f >= config.fall_penalty) {
      if (debug_log_enabled()) {
        std::fprintf(stderr, "[gaitforge] shooting gen %d: best %.4f (falling)\n", gen,
                     best_f);
      }
      return false;
    }
    const Rollout r = roll(problem, build_splines(problem, spline_knots, best_x),
                           initial_state(problem, spline_knots, best_x), config, false);
    if (debug_log_enabled()) {
      std::fprintf(stderr,
                   "[gaitforge] shooting gen %d: best %.4f fell %d speed %.3f limit %.3f\n",
                   gen, best_f, r.fell ? 1 : 0, r.speed, r.max_limit_excess_rad);
    }
    return !r.fell && r.max_limit_excess_rad < kLimitMarginRad &&
           std::abs(r.speed - problem.target_speed_mps) <=
               config.speed_tol_fraction * problem.target_speed_mps;
  };

  internal::CmaesOptions copt;
  copt.population = config.population;
  copt.max_generations = config.max_generations;
  copt.sigma0 = config.sigma0;
  copt.seed = config.seed;
  const internal::CmaesResult res =
      internal::cmaes_minimize(cost_fn, nominal_genome(spline_knots), copt, should_stop);

  const Rollout final_roll =
      roll(problem, build_splines(problem, spline_knots, res.best_x),
           initial_state(problem, spline_knots, res.best_x), config, true);
  const DecisionVector dv = decision_from_rollout(problem, final_roll);

  SolveReport report;
  report.iterations = res.generations;
  report.achieved_speed_mps = final_roll.speed;
  report.converged = !final_roll.fell &&
                     final_roll.max_limit_excess_rad < kLimitMarginRad &&
                     std::abs(final_roll.speed - problem.target_speed_mps) <=
                         config.speed_tol_fraction * problem.target_speed_mps;
  report.final_objective = objective_eval(problem, dv);
  report.max_defect = transcribe_defects(problem, dv).lpNorm<Eigen::Infinity>();
  Vec18 per = final_roll.x_end - final_roll.x_start;
  per[kPelvisX] -= problem.target_speed_mps * problem.duration_s;
  report.max_periodicity_violation = per.lpNorm<Eigen::Infinity>();
  return {res.best_x, report};
}

std::pair<GaitTrial, SolveReport> solve_shooting(const GaitProblem& problem, int spline_knots,
                                                 const EsConfig& config) {
  auto [genome, report] = solve_shooting_genome(problem, spline_knots, config);
  if (!report.converged) {
    throw NoConvergence("shooting solver found no periodic gait after " +
                        std::to_string(report.iterations) + " generations (speed " +
                        std::to_string(report.achieved_speed_mps) + " m/s)");
  }
  const Rollout final_roll = roll(problem, build_splines(problem, spline_knots, genome),
                                  initial_state(problem, spline_knots, genome), config, true);
  GaitTrial trial =
      trial_from_decision(problem, decision_from_rollout(problem, final_roll),
                          SolverKind::shooting);
  return {std::move(trial), report};
}

}  // namespace gaitforge
