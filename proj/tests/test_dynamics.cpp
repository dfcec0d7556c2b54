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

#include "gaitforge/dynamics.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace gaitforge;

namespace {

SkeletalModel canonical_model() {
  AnthropometricProfile p;
  p.subject_id = "S01";
  p.thigh_len_m = 0.45;
  p.shank_len_m = 0.43;
  p.foot_len_m = 0.26;
  p.total_mass_kg = 73.68;
  return build_model(p);
}

Vec9 random_pose(Rng& rng) {
  Vec9 q;
  q[kPelvisX] = rng.uniform(-1.0, 1.0);
  q[kPelvisY] = rng.uniform(0.8, 1.1);
  q[kPelvisPitch] = rng.uniform(-0.3, 0.3);
  for (int hip : {kHipL, kHipR}) q[hip] = rng.uniform(-0.6, 0.6);
  for (int knee : {kKneeL, kKneeR}) q[knee] = rng.uniform(0.0, 1.2);
  for (int ankle : {kAnkleL, kAnkleR}) q[ankle] = rng.uniform(-0.4, 0.4);
  return q;
}

Vec9 random_rates(Rng& rng, double mag) {
  Vec9 qd;
  for (int i = 0; i < kNumCoords; ++i) qd[i] = rng.uniform(-mag, mag);
  return qd;
}

// ---------------------------------------------------------------------------
// Independent kinematics oracle built from 3x3 homogeneous transforms. The
// library assembles points as sums of rotated vectors; this multiplies frame
// transforms down the chain instead, so agreement is strong evidence both are
// right.
// ---------------------------------------------------------------------------

Eigen::Matrix3d h_trans(double x, double y) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 2) = x;
  t(1, 2) = y;
  return t;
}

Eigen::Matrix3d h_rot(double a) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = std::cos(a);
  t(0, 1) = -std::sin(a);
  t(1, 0) = std::sin(a);
  t(1, 1) = std::cos(a);
  return t;
}

Vec2 h_apply(const Eigen::Matrix3d& t, const Vec2& p) {
  const Eigen::Vector3d r = t * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return Vec2(r.x(), r.y());
}

struct OracleLandmarks {
  Vec2 trunk_top;
  std::array<Vec2, 2> knee, ankle, heel, toe;
  // COM positions, used by the mass-matrix reduction checks below.
  Vec2 trunk_com;
  std::array<Vec2, 2> thigh_com, shank_com, foot_com;
};

OracleLandmarks oracle_fk(const SkeletalModel& m, const Vec9& q) {
  const double lt = m.segment(SegmentName::thigh_L).length_m;
  const double ls = m.segment(SegmentName::shank_L).length_m;
  const Eigen::Matrix3d pelvis = h_trans(q[kPelvisX], q[kPelvisY]);
  const Eigen::Matrix3d trunk = pelvis * h_rot(q[kPelvisPitch]);

  OracleLandmarks o;
  o.trunk_top = h_apply(trunk, Vec2(0.0, m.segment(SegmentName::pelvis).length_m));
  o.trunk_com = h_apply(trunk, Vec2(0.0, m.segment(SegmentName::pelvis).com_offset_m));
  for (int side = 0; side < 2; ++side) {
    const int hip = side == 0 ? kHipL : kHipR;
    const int knee = side == 0 ? kKneeL : kKneeR;
    const int ankle = side == 0 ? kAnkleL : kAnkleR;
    const Eigen::Matrix3d thigh = trunk * h_rot(q[hip]);
    const Eigen::Matrix3d shank = thigh * h_trans(0.0, -lt) * h_rot(-q[knee]);
    const Eigen::Matrix3d foot = shank * h_trans(0.0, -ls) * h_rot(q[ankle]);
    o.knee[side] = h_apply(thigh, Vec2(0.0, -lt));
    o.ankle[side] = h_apply(shank, Vec2(0.0, -ls));
    o.heel[side] = h_apply(foot, m.heel_local_m);
    o.toe[side] = h_apply(foot, m.toe_local_m);
    o.thigh_com[side] =
        h_apply(thigh, Vec2(0.0, -m.segment(SegmentName::thigh_L).com_offset_m));
    o.shank_com[side] =
        h_apply(shank, Vec2(0.0, -m.segment(SegmentName::shank_L).com_offset_m));
    o.foot_com[side] = h_apply(
        foot, Vec2(m.segment(SegmentName::foot_L).com_offset_m, m.heel_local_m.y()));
  }
  return o;
}

}  // namespace

TEST_CASE("forward kinematics matches the homogeneous-transform oracle") {
  const SkeletalModel m = canonical_model();
  Rng rng(811);
  for (int trial = 0; trial < 60; ++trial) {
    const Vec9 q = random_pose(rng);
    const PlanarLandmarks lm = forward_kinematics(m, q);
    const OracleLandmarks o = oracle_fk(m, q);
    CHECK((lm.trunk_top - o.trunk_top).norm() < 1e-12);
    for (int s = 0; s < 2; ++s) {
      CHECK((lm.knee[s] - o.knee[s]).norm() < 1e-12);
      CHECK((lm.ankle[s] - o.ankle[s]).norm() < 1e-12);
      CHECK((lm.heel[s] - o.heel[s]).norm() < 1e-12);
      CHECK((lm.toe[s] - o.toe[s]).norm() < 1e-12);
    }
  }
}

TEST_CASE("forward kinematics: standing and bent-leg fixtures") {
  const SkeletalModel m = canonical_model();
  Vec9 q = Vec9::Zero();
  q[kPelvisY] = 0.952;

  PlanarLandmarks lm = forward_kinematics(m, q);
  CHECK(lm.knee[0].x() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(lm.knee[0].y() == doctest::Approx(0.502));
  CHECK(lm.ankle[1].y() == doctest::Approx(0.072));
  CHECK(lm.heel[0].x() == doctest::Approx(-0.065));
  CHECK(lm.heel[0].y() == doctest::Approx(0.02));
  CHECK(lm.toe[0].x() == doctest::Approx(0.195));
  CHECK(lm.toe[0].y() == doctest::Approx(0.02));

  // Hip and knee at 90 degrees: thigh horizontal forward, shank vertical.
  q[kHipL] = kPi / 2.0;
  q[kKneeL] = kPi / 2.0;
  lm = forward_kinematics(m, q);
  CHECK(lm.knee[0].x() == doctest::Approx(0.45));
  CHECK(lm.knee[0].y() == doctest::Approx(0.952));
  CHECK(lm.ankle[0].x() == doctest::Approx(0.45));
  CHECK(lm.ankle[0].y() == doctest::Approx(0.952 - 0.43));

  // Sign conventions: positive hip moves the knee forward, positive ankle
  // (dorsiflexion) lifts the toes above the ankle's sole level.
  q = Vec9::Zero();
  q[kPelvisY] = 0.952;
  q[kHipR] = 0.3;
  q[kAnkleL] = 0.4;
  lm = forward_kinematics(m, q);
  CHECK(lm.knee[1].x() > 0.1);
  CHECK(lm.toe[0].y() - lm.ankle[0].y() > -0.052 + 0.05);
}

TEST_CASE("3D landmarks put the legs half a pelvis width off the midline") {
  const SkeletalModel m = canonical_model();
  Rng rng(5150);
  const Vec9 q = random_pose(rng);
  const PlanarLandmarks lm = forward_kinematics(m, q);
  const Landmarks3 l3 = landmarks_3d(m, q);
  CHECK(l3.pelvis.z() == 0.0);
  CHECK(l3.hip[0].z() == doctest::Approx(0.12));
  CHECK(l3.hip[1].z() == doctest::Approx(-0.12));
  CHECK(l3.knee[0].x() == doctest::Approx(lm.knee[0].x()));
  CHECK(l3.knee[0].y() == doctest::Approx(lm.knee[0].y()));
  CHECK(l3.ankle[1].z() == doctest::Approx(-0.12));
  CHECK(l3.hip[0].x() == doctest::Approx(q[kPelvisX]));
}

TEST_CASE("mass matrix: symmetry, translational blocks, pendulum reductions") {
  const SkeletalModel m = canonical_model();
  const double mtot = m.total_mass_kg();
  Rng rng(90210);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec9 q = random_pose(rng);
    const Vec9 qd = random_rates(rng, 3.0);
    const DynamicsTerms dt = dynamics_terms(m, q, qd);
    const Mat9& M = dt.mass_matrix;

    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(M(kPelvisX, kPelvisX) == doctest::Approx(mtot).epsilon(1e-12));
    CHECK(M(kPelvisY, kPelvisY) == doctest::Approx(mtot).epsilon(1e-12));
    CHECK(std::abs(M(kPelvisX, kPelvisY)) < 1e-12);

    // Positive definite at every sampled pose.
    Eigen::LLT<Mat9> llt(M);
    CHECK(llt.info() == Eigen::Success);

    // Rotating the whole left leg about the hip: the diagonal entry must be
    // the parallel-axis sum over the leg bodies, with COM positions taken
    // from the independent oracle.
    const OracleLandmarks o = oracle_fk(m, q);
    const Vec2 hip(q[kPelvisX], q[kPelvisY]);
    const double mt = m.segment(SegmentName::thigh_L).mass_kg;
    const double ms = m.segment(SegmentName::shank_L).mass_kg;
    const double mf = m.segment(SegmentName::foot_L).mass_kg;
    const double it = m.segment(SegmentName::thigh_L).inertia_zz;
    const double is = m.segment(SegmentName::shank_L).inertia_zz;
    const double iff = m.segment(SegmentName::foot_L).inertia_zz;
    const double hip_inertia = mt * (o.thigh_com[0] - hip).squaredNorm() + it +
                               ms * (o.shank_com[0] - hip).squaredNorm() + is +
                               mf * (o.foot_com[0] - hip).squaredNorm() + iff;
    CHECK(M(kHipL, kHipL) == doctest::Approx(hip_inertia).epsilon(1e-10));

    // Same reduction for the foot about the ankle.
    const double ankle_inertia = mf * (o.foot_com[1] - o.ankle[1]).squaredNorm() + iff;
    CHECK(M(kAnkleR, kAnkleR) == doctest::Approx(ankle_inertia).epsilon(1e-10));
  }
}

TEST_CASE("bias at rest reproduces generalized gravity loads") {
  const SkeletalModel m = canonical_model();
  Rng rng(140);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec9 q = random_pose(rng);
    const DynamicsTerms dt = dynamics_terms(m, q, Vec9::Zero());
    const OracleLandmarks o = oracle_fk(m, q);
    const Vec2 root(q[kPelvisX], q[kPelvisY]);

    CHECK(std::abs(dt.bias[kPelvisX]) < 1e-10);
    CHECK(dt.bias[kPelvisY] == doctest::Approx(m.total_mass_kg() * kGravity).epsilon(1e-12));

    // Hip row: gravity moment of the leg bodies about the hip.
    const double mt = m.segment(SegmentName::thigh_L).mass_kg;
    const double ms = m.segment(SegmentName::shank_L).mass_kg;
    const double mf = m.segment(SegmentName::foot_L).mass_kg;
    const double hip_row = kGravity * (mt * (o.thigh_com[0].x() - root.x()) +
                                       ms * (o.shank_com[0].x() - root.x()) +
                                       mf * (o.foot_com[0].x() - root.x()));
    CHECK(dt.bias[kHipL] == doctest::Approx(hip_row).epsilon(1e-9));

    // Pitch row: every body rotates about the pelvis root.
    double pitch_row = m.segment(SegmentName::pelvis).mass_kg * (o.trunk_com.x() - root.x());
    for (int s = 0; s < 2; ++s) {
      pitch_row += mt * (o.thigh_com[s].x() - root.x()) +
                   ms * (o.shank_com[s].x() - root.x()) +
                   mf * (o.foot_com[s].x() - root.x());
    }
    CHECK(dt.bias[kPelvisPitch] == doctest::Approx(kGravity * pitch_row).epsilon(1e-9));
  }
}

TEST_CASE("free fall above the ground is an exact parabola") {
  const SkeletalModel m = canonical_model();
  State s;
  s.q = Vec9::Zero();
  s.q[kPelvisY] = 5.0;
  s.q[kHipL] = 0.4;
  s.q[kKneeR] = 0.7;
  s.qd[kPelvisX] = 1.3;
  s.qd[kPelvisY] = 0.2;

  const State s0 = s;
  const double dt = 0.004;
  const int steps = 100;  // 0.4 s of flight
  for (int i = 0; i < steps; ++i) {
    s = integrate_step(m, s, Control{}, ContactParams{}, dt);
  }
  const double t = steps * dt;
  CHECK(s.q[kPelvisX] == doctest::Approx(s0.q[kPelvisX] + 1.3 * t).epsilon(1e-12));
  CHECK(s.q[kPelvisY] ==
        doctest::Approx(s0.q[kPelvisY] + 0.2 * t - 0.5 * kGravity * t * t).epsilon(1e-12));
  CHECK(s.qd[kPelvisY] == doctest::Approx(0.2 - kGravity * t).epsilon(1e-12));
  for (int i = kPelvisPitch; i < kNumCoords; ++i) {
    CHECK(s.q[i] == doctest::Approx(s0.q[i]).epsilon(1e-12));
    CHECK(std::abs(s.qd[i]) < 1e-12);
  }
}

TEST_CASE("energy is conserved during a half-second tumbling flight") {
  const SkeletalModel m = canonical_model();
  State s;
  s.q = Vec9::Zero();
  s.q[kPelvisY] = 6.5;  // stays clear of the ground throughout
  // Joints start mid-range and swing gently: the passive joint stops hold
  // energy of their own, so a conservative audit must stay inside the travel
  // limits (tracked below).
  s.q[kHipL] = 0.3;
  s.q[kKneeL] = 0.7;
  s.q[kHipR] = 0.3;
  s.q[kKneeR] = 0.4;  // clear of the knee's tight extension limit
  s.q[kAnkleR] = 0.3;
  s.qd[kPelvisPitch] = 0.4;
  s.qd[kHipL] = -0.6;
  s.qd[kKneeL] = 0.5;
  s.qd[kHipR] = 0.3;

  const double e0 = total_energy(m, s);
  REQUIRE(e0 > 100.0);
  double max_drift = 0.0;
  double max_excess = 0.0;
  const double dt = 1e-3;
  for (int i = 0; i < 500; ++i) {
    s = integrate_step(m, s, Control{}, ContactParams{}, dt);
    max_drift = std::max(max_drift, std::abs(total_energy(m, s) - e0));
    for (int j = kHipL; j <= kAnkleR; ++j) {
      max_excess = std::max({max_excess, m.joint_limits_rad[j].first - s.q[j],
                             s.q[j] - m.joint_limits_rad[j].second});
    }
  }
  CHECK(s.q[kPelvisY] > 0.6);   // really was in flight throughout
  REQUIRE(max_excess <= 0.0);   // stops never engaged, so the audit is fair
  CHECK(max_drift / std::abs(e0) < 1e-4);
}

TEST_CASE("integrator converges at fourth order (Richardson ratio)") {
  const SkeletalModel m = canonical_model();
  State s0;
  s0.q = Vec9::Zero();
  s0.q[kPelvisY] = 8.0;
  // Rates sized so no joint reaches a travel limit within the 0.2 s window:
  // the joint-stop torque is only C¹ there, which would dilute the clean
  // fourth-order signal this fixture measures.
  s0.q[kKneeL] = 0.7;
  s0.q[kKneeR] = 0.5;
  s0.qd[kPelvisPitch] = 4.0;
  s0.qd[kHipL] = 2.0;
  s0.qd[kKneeL] = -2.0;
  s0.qd[kHipR] = -1.5;
  s0.qd[kKneeR] = 2.0;
  s0.qd[kAnkleL] = 1.5;

  auto rollout = [&](double dt, int n) {
    State s = s0;
    for (int i = 0; i < n; ++i) s = integrate_step(m, s, Control{}, ContactParams{}, dt);
    return s.as_vector();
  };
  const Vec18 ref = rollout(5e-5, 4000);   // 0.2 s
  const Vec18 coarse = rollout(2e-3, 100);
  const Vec18 fine = rollout(1e-3, 200);
  const double e_coarse = (coarse - ref).cwiseAbs().maxCoeff();
  const double e_fine = (fine - ref).cwiseAbs().maxCoeff();
  REQUIRE(e_coarse > 1e-13);  // above round-off, so the ratio is meaningful
  const double ratio = e_coarse / e_fine;
  CHECK(ratio > 10.0);
  CHECK(ratio < 24.0);
}

TEST_CASE("contact: hand-evaluated normal force at 1 mm penetration") {
  const SkeletalModel m = canonical_model();
  ContactParams cp;  // stiffness 1e5, radius 0.02, smoothing 1e-5

  // Standing pose lowered so every sole point sits 1 mm into the ground.
  Vec9 q = Vec9::Zero();
  q[kPelvisY] = 0.952 - 0.001;
  const ContactResult cr = contact_forces(m, q, Vec9::Zero(), cp);

  const double d = 1e-3;
  const double expected = 1e5 * d * d / (d + 1e-5);  // 99.0099...
  for (const auto& p : cr.points) {
    CHECK(p.penetration_m == doctest::Approx(d).epsilon(1e-9));
    CHECK(p.force.y() == doctest::Approx(expected).epsilon(1e-9));
    CHECK(std::abs(p.force.x()) < 1e-12);  // no slip, no friction
    // The smoothed law stays within 1 N of the ideal linear spring here.
    CHECK(std::abs(p.force.y() - 100.0) < 1.0);
  }
  CHECK(cr.generalized[kPelvisY] == doctest::Approx(4.0 * expected).epsilon(1e-9));
  CHECK(cr.generalized[kPelvisX] == doctest::Approx(0.0));
}

TEST_CASE("contact: dissipation scales with penetration rate and clamps at zero") {
  const SkeletalModel m = canonical_model();
  ContactParams cp;
  Vec9 q = Vec9::Zero();
  q[kPelvisY] = 0.952 - 0.001;
  const double fstatic = 1e5 * 1e-6 / (1e-3 + 1e-5);

  Vec9 qd = Vec9::Zero();
  qd[kPelvisY] = -0.5;  // sinking at 0.5 m/s -> damp factor 1.5
  ContactResult cr = contact_forces(m, q, qd, cp);
  CHECK(cr.points[0].force.y() == doctest::Approx(1.5 * fstatic).epsilon(1e-9));

  qd[kPelvisY] = 2.0;  // separating fast -> clamped, never adhesive
  cr = contact_forces(m, q, qd, cp);
  for (const auto& p : cr.points) CHECK(p.force.y() == 0.0);
}

TEST_CASE("contact: regularized friction opposes slip") {
  const SkeletalModel m = canonical_model();
  ContactParams cp;
  Vec9 q = Vec9::Zero();
  q[kPelvisY] = 0.952 - 0.001;
  const double fn = 1e5 * 1e-6 / (1e-3 + 1e-5);

  Vec9 qd = Vec9::Zero();
  qd[kPelvisX] = 1.0;  // fast slip: tanh saturates
  ContactResult cr = contact_forces(m, q, qd, cp);
  CHECK(cr.points[0].force.x() ==
        doctest::Approx(-0.9 * fn * std::tanh(1.0 / 0.05)).epsilon(1e-12));
  CHECK(cr.points[0].force.x() == doctest::Approx(-0.9 * fn).epsilon(1e-6));

  qd[kPelvisX] = -0.05;  // slow slip inside the transition band
  cr = contact_forces(m, q, qd, cp);
  CHECK(cr.points[0].force.x() ==
        doctest::Approx(0.9 * fn * std::tanh(1.0)).epsilon(1e-12));

  // No normal force, no friction.
  q[kPelvisY] = 1.2;
  qd[kPelvisX] = 1.0;
  cr = contact_forces(m, q, qd, cp);
  for (const auto& p : cr.points) CHECK(p.force.norm() == 0.0);
}

TEST_CASE("analytic state jacobians match central finite differences") {
  const SkeletalModel m = canonical_model();
  const ContactParams cp;

  auto fd_check = [&](const State& s, const Control& u) {
    const StateJacobians j = dynamics_jacobians(m, s, u, cp);
    const double h = 1e-6;

    Mat18 a_fd = Mat18::Zero();
    for (int i = 0; i < 18; ++i) {
      Vec18 xp = s.as_vector(), xm = s.as_vector();
      xp[i] += h;
      xm[i] -= h;
      Vec18 fp, fm;
      const State sp = State::from_vector(xp), sm = State::from_vector(xm);
      fp.head<9>() = sp.qd;
      fp.tail<9>() = forward_dynamics(m, sp, u, cp);
      fm.head<9>() = sm.qd;
      fm.tail<9>() = forward_dynamics(m, sm, u, cp);
      a_fd.col(i) = (fp - fm) / (2.0 * h);
    }
    const double a_scale = std::max(1.0, a_fd.cwiseAbs().maxCoeff());
    CHECK((j.A - a_fd).cwiseAbs().maxCoeff() / a_scale < 1e-4);

    Eigen::Matrix<double, 18, 6> b_fd;
    for (int i = 0; i < 6; ++i) {
      Control up = u, um = u;
      up.tau[i] += h;
      um.tau[i] -= h;
      Vec18 fp = Vec18::Zero(), fm = Vec18::Zero();
      fp.tail<9>() = forward_dynamics(m, s, up, cp);
      fm.tail<9>() = forward_dynamics(m, s, um, cp);
      fp.head<9>() = s.qd;
      fm.head<9>() = s.qd;
      b_fd.col(i) = (fp - fm) / (2.0 * h);
    }
    const double b_scale = std::max(1.0, b_fd.cwiseAbs().maxCoeff());
    CHECK((j.B - b_fd).cwiseAbs().maxCoeff() / b_scale < 1e-4);
  };

  SUBCASE("airborne, tumbling, torqued") {
    State s;
    s.q = Vec9::Zero();
    s.q[kPelvisY] = 3.0;
    s.q[kPelvisPitch] = 0.2;
    s.q[kHipL] = 0.5;
    s.q[kKneeL] = 0.8;
    s.q[kHipR] = -0.3;
    s.q[kKneeR] = 0.2;
    s.q[kAnkleL] = -0.2;
    s.qd = Vec9::Ones() * 0.7;
    Control u;
    u.tau << 20, -15, 5, -10, 25, -5;
    fd_check(s, u);
  }

  SUBCASE("in contact, asymmetric stance with slip") {
    State s;
    s.q = Vec9::Zero();
    s.q[kPelvisPitch] = 0.05;
    s.q[kHipL] = 0.25;
    s.q[kKneeL] = 0.35;
    s.q[kAnkleL] = -0.1;
    s.q[kHipR] = -0.15;
    s.q[kKneeR] = 0.1;
    s.q[kAnkleR] = 0.12;
    s.q[kPelvisY] = 1.0;
    // Drop the pelvis so the lowest sole point is 4 mm under the ground,
    // comfortably deeper than the finite-difference step.
    const PlanarLandmarks lm = forward_kinematics(m, s.q);
    double lowest = 1e9;
    for (int side = 0; side < 2; ++side) {
      lowest = std::min({lowest, lm.heel[side].y(), lm.toe[side].y()});
    }
    s.q[kPelvisY] += cp.contact_radius_m - 0.004 - lowest;
    s.qd << 0.3, -0.2, 0.5, 1.0, -0.8, 0.4, -1.0, 0.6, -0.3;
    Control u;
    u.tau << -30, 12, 40, 8, -22, 15;
    fd_check(s, u);
  }
}

TEST_CASE("PD-held standing posture settles on the compliant feet") {
  // Passive joints buckle (a multi-link inverted pendulum cannot balance), so
  // hold the six joints with a PD loop and let the floating pelvis coordinates
  // find the rocking equilibrium on the foot springs.
  const SkeletalModel m = canonical_model();
  const ContactParams cp;
  State s;
  s.q = Vec9::Zero();
  s.q[kPelvisY] = m.standing_pelvis_height(cp.contact_radius_m) - 0.001;

  for (int i = 0; i < 1200; ++i) {
    Control u;
    // Gains sized so the fastest closed-loop pole (damping on the light foot
    // about the ankle) stays inside the RK4 stability region at dt = 1 ms.
    for (int j = 0; j < kNumActuated; ++j) {
      u.tau[j] = -300.0 * s.q[kHipL + j] - 8.0 * s.qd[kHipL + j];
    }
    s = integrate_step(m, s, u, cp, 1e-3);
  }
  CHECK(s.q[kPelvisY] > 0.935);
  CHECK(s.q[kPelvisY] < 0.96);
  CHECK(std::abs(s.q[kPelvisX]) < 0.05);
  CHECK(std::abs(s.q[kPelvisPitch]) < 0.05);
  CHECK(std::abs(s.qd[kPelvisY]) < 0.3);
  CHECK(s.is_finite());
}

TEST_CASE("guards: step size, finite state, degenerate inertia") {
  const SkeletalModel m = canonical_model();
  State s;
  s.q[kPelvisY] = 1.0;

  CHECK_THROWS_AS(integrate_step(m, s, Control{}, ContactParams{}, 0.0),
                  PreconditionViolation);
  CHECK_THROWS_AS(integrate_step(m, s, Control{}, ContactParams{}, 6e-3),
                  PreconditionViolation);
  CHECK_NOTHROW(integrate_step(m, s, Control{}, ContactParams{}, 5e-3));

  State bad = s;
  bad.q[kHipL] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward_dynamics(m, bad, Control{}, ContactParams{}), NonFiniteState);
  Control bad_u;
  bad_u.tau[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(forward_dynamics(m, s, bad_u, ContactParams{}), NonFiniteState);

  // A vanishing distal segment makes the mass matrix numerically singular.
  SkeletalModel degenerate = m;
  degenerate.segments[5].mass_kg = 1e-300;
  degenerate.segments[5].inertia_zz = 1e-300;
  degenerate.segments[6].mass_kg = 1e-300;
  degenerate.segments[6].inertia_zz = 1e-300;
  CHECK_THROWS_AS(forward_dynamics(degenerate, s, Control{}, ContactParams{}),
                  SingularConfiguration);
}

TEST_CASE("total energy: hand-checked kinetic and potential pieces") {
  const SkeletalModel m = canonical_model();
  State rest;
  rest.q = Vec9::Zero();
  rest.q[kPelvisY] = 0.952;

  // Potential energy from oracle COM heights.
  const OracleLandmarks o = oracle_fk(m, rest.q);
  double pe = m.segment(SegmentName::pelvis).mass_kg * o.trunk_com.y();
  for (int s = 0; s < 2; ++s) {
    pe += m.segment(SegmentName::thigh_L).mass_kg * o.thigh_com[s].y() +
          m.segment(SegmentName::shank_L).mass_kg * o.shank_com[s].y() +
          m.segment(SegmentName::foot_L).mass_kg * o.foot_com[s].y();
  }
  pe *= kGravity;
  CHECK(total_energy(m, rest) == doctest::Approx(pe).epsilon(1e-12));

  // Pure translation adds exactly one half m v squared.
  State moving = rest;
  moving.qd[kPelvisX] = 1.5;
  CHECK(total_energy(m, moving) - total_energy(m, rest) ==
        doctest::Approx(0.5 * m.total_mass_kg() * 1.5 * 1.5).epsilon(1e-12));
}
