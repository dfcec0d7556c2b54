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

#ifndef GAITFORGE_DYNAMICS_HPP_
#define GAITFORGE_DYNAMICS_HPP_

// Planar rigid-body dynamics for the seven-segment walker.
//
// Frames and sign conventions (fixed; tests depend on them):
//   * World: x forward, y up, z to the subject's left. Gravity acts along -y.
//     The sagittal plane is x-y; the ground is the plane y = 0.
//   * The pelvis root (q[0], q[1]) is the hip joint centre. Both legs attach
//     there; in 3D the left/right hips sit at z = +/- pelvis_width/2.
//   * Absolute segment angles are measured counter-clockwise when the x-y
//     plane is viewed from +z.  A leg segment at absolute angle a points along
//     R(a)*(0,-1), so a = 0 is straight down and positive a swings the distal
//     end forward (+x).
//   * trunk angle   = pelvis_pitch                (trunk points up, R(a)*(0,+1))
//   * thigh angle   = pelvis_pitch + hip          (positive hip = flexion)
//   * shank angle   = thigh angle  - knee         (positive knee = flexion)
//   * foot  angle   = shank angle  + ankle        (positive ankle = dorsiflexion)
//   * The foot frame has its origin at the ankle with x along the sole; at
//     foot angle 0 the sole is horizontal.  heel_local / toe_local from the
//     model are expressed in this frame.
//
// The equations of motion are assembled per body from point Jacobians:
//   M(q) qdd + bias(q, qd) = S tau + Jc^T f_contact
// where S injects the six joint torques into rows 3..8 and bias contains the
// velocity-product and gravity loads.

#include <array>
#include <Eigen/Dense>

#include "gaitforge/common.hpp"
#include "gaitforge/model.hpp"

namespace gaitforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, kNumCoords, 1>;
using Vec18 = Eigen::Matrix<double, 2 * kNumCoords, 1>;
using Mat9 = Eigen::Matrix<double, kNumCoords, kNumCoords>;
using Mat18 = Eigen::Matrix<double, 2 * kNumCoords, 2 * kNumCoords>;

// Full mechanical state: generalized positions and velocities.
struct State {
  Vec9 q = Vec9::Zero();
  Vec9 qd = Vec9::Zero();

  Vec18 as_vector() const;
  static State from_vector(const Vec18& x);
  bool is_finite() const;
};

// Joint torques for the six actuated coordinates, ordered hip_L, knee_L,
// ankle_L, hip_R, knee_R, ankle_R (matching coordinates 3..8).
struct Control {
  Vec6 tau = Vec6::Zero();
};

// Per-actuator torque bound used by the synthesis objective and solvers.
inline constexpr double kDefaultTauMaxNm = 250.0;

// Largest step the fixed-step integrator accepts.
inline constexpr double kMaxStepSeconds = 5e-3;

// Compliant ground contact.  Each heel/toe is a sphere of contact_radius_m;
// penetration depth d = radius - point_y.  The normal force is
//   f_n = stiffness * phi(d) * max(0, 1 + dissipation * d_dot)
// with phi(d) = d^2 / (d + smoothing_depth_m), which is C1 at touchdown, and
// the tangential force is regularized Coulomb friction
//   f_t = -friction_mu * f_n * tanh(v_x / transition_vel_mps).
struct ContactParams {
  double stiffness_n_per_m = 1e5;
  double dissipation_s_per_m = 1.0;
  double friction_mu = 0.9;
  double contact_radius_m = 0.02;
  double smoothing_depth_m = 1e-5;
  double transition_vel_mps = 0.05;
};

// Sagittal-plane positions of the joint centres and foot extremes.
// Two-element arrays are indexed 0 = left, 1 = right.
struct PlanarLandmarks {
  Vec2 pelvis = Vec2::Zero();     // pelvis root = hip joint centre
  Vec2 trunk_top = Vec2::Zero();  // distal end of the trunk segment
  std::array<Vec2, 2> knee{};
  std::array<Vec2, 2> ankle{};
  std::array<Vec2, 2> heel{};
  std::array<Vec2, 2> toe{};
};

// Same landmarks lifted to 3D with the legs offset along z by half the pelvis
// width (left at +z). The pelvis/trunk points sit on the midline.
struct Landmarks3 {
  Vec3 pelvis = Vec3::Zero();
  Vec3 trunk_top = Vec3::Zero();
  std::array<Vec3, 2> hip{};
  std::array<Vec3, 2> knee{};
  std::array<Vec3, 2> ankle{};
  std::array<Vec3, 2> heel{};
  std::array<Vec3, 2> toe{};
};

PlanarLandmarks forward_kinematics(const SkeletalModel& model, const Vec9& q);
Landmarks3 landmarks_3d(const SkeletalModel& model, const Vec9& q);

// Mass matrix and bias vector of M qdd + bias = S tau + Jc^T f.
// Throws SingularConfiguration if the mass matrix is not safely invertible.
struct DynamicsTerms {
  Mat9 mass_matrix = Mat9::Zero();
  Vec9 bias = Vec9::Zero();
};

DynamicsTerms dynamics_terms(const SkeletalModel& model, const Vec9& q, const Vec9& qd);

// One resolved ground-contact point (world-frame force on the body).
struct ContactPointForce {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 force = Vec2::Zero();
  double penetration_m = 0.0;  // <= 0 means not in contact
};

struct ContactResult {
  // Order: heel_L, toe_L, heel_R, toe_R.
  std::array<ContactPointForce, 4> points{};
  Vec9 generalized = Vec9::Zero();  // sum of Jc^T f over active points
};

ContactResult contact_forces(const SkeletalModel& model, const Vec9& q, const Vec9& qd,
                             const ContactParams& contact);

// Generalized accelerations qdd.  Throws NonFiniteState on bad input and
// SingularConfiguration if the mass matrix cannot be factorized.
Vec9 forward_dynamics(const SkeletalModel& model, const State& state, const Control& control,
                      const ContactParams& contact);

// Classic fixed-step RK4 with zero-order-hold controls.  dt must lie in
// (0, kMaxStepSeconds].
State integrate_step(const SkeletalModel& model, const State& state, const Control& control,
                     const ContactParams& contact, double dt);

// Exact linearization of xdot = f(x, u) with x = [q; qd], u = tau:
//   A = df/dx (18x18), B = df/du (18x6).
// Assembled from hand-derived partials of the mass matrix, bias and contact
// forces; validated against finite differences in the test-suite.
struct StateJacobians {
  Mat18 A = Mat18::Zero();
  Eigen::Matrix<double, 2 * kNumCoords, 6> B = Eigen::Matrix<double, 2 * kNumCoords, 6>::Zero();
};

StateJacobians dynamics_jacobians(const SkeletalModel& model, const State& state,
                                  const Control& control, const ContactParams& contact);

// Kinetic plus gravitational potential energy; contact stores none of it, so
// this is conserved in flight with zero torques.
double total_energy(const SkeletalModel& model, const State& state);

}  // namespace gaitforge

#endif  // GAITFORGE_DYNAMICS_HPP_
