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

#include <cmath>

namespace gaitforge {

Vec18 State::as_vector() const {
  Vec18 x;
  x.head<kNumCoords>() = q;
  x.tail<kNumCoords>() = qd;
  return x;
}

State State::from_vector(const Vec18& x) {
  State s;
  s.q = x.head<kNumCoords>();
  s.qd = x.tail<kNumCoords>();
  return s;
}

bool State::is_finite() const { return q.allFinite() && qd.allFinite(); }

namespace {

// Every point of interest is pelvis_root + sum_t R(phi_t) * v_t over a short
// chain of (constant local vector, absolute angle) terms.  The seven absolute
// angles are linear in q with weights +/-1, which keeps every derivative a
// sum of rotated constant vectors.
enum Angle {
  kAngTrunk = 0,
  kAngThighL,
  kAngShankL,
  kAngFootL,
  kAngThighR,
  kAngShankR,
  kAngFootR,
  kNumAngles
};

struct WeightTerm {
  int coord;
  double sign;
};

using Weights = std::array<WeightTerm, 4>;  // padded with coord = -1

struct AngleDef {
  Weights w;
  int n;  // number of valid weight terms
};

const std::array<AngleDef, kNumAngles>& angle_defs() {
  static const std::array<AngleDef, kNumAngles> defs = [] {
    std::array<AngleDef, kNumAngles> d{};
    auto set = [&](int a, std::initializer_list<WeightTerm> terms) {
      int i = 0;
      for (const auto& t : terms) d[a].w[i++] = t;
      d[a].n = i;
    };
    set(kAngTrunk, {{kPelvisPitch, 1.0}});
    set(kAngThighL, {{kPelvisPitch, 1.0}, {kHipL, 1.0}});
    set(kAngShankL, {{kPelvisPitch, 1.0}, {kHipL, 1.0}, {kKneeL, -1.0}});
    set(kAngFootL, {{kPelvisPitch, 1.0}, {kHipL, 1.0}, {kKneeL, -1.0}, {kAnkleL, 1.0}});
    set(kAngThighR, {{kPelvisPitch, 1.0}, {kHipR, 1.0}});
    set(kAngShankR, {{kPelvisPitch, 1.0}, {kHipR, 1.0}, {kKneeR, -1.0}});
    set(kAngFootR, {{kPelvisPitch, 1.0}, {kHipR, 1.0}, {kKneeR, -1.0}, {kAnkleR, 1.0}});
    return d;
  }();
  return defs;
}

struct AngleState {
  double phi = 0.0;
  double phidot = 0.0;
  Eigen::Matrix2d R;   // rotation by phi
  Eigen::Matrix2d Rp;  // d R / d phi
};

struct KinCache {
  std::array<AngleState, kNumAngles> ang;
};

KinCache make_cache(const Vec9& q, const Vec9& qd) {
  KinCache cache;
  const auto& defs = angle_defs();
  for (int a = 0; a < kNumAngles; ++a) {
    double phi = 0.0, phidot = 0.0;
    for (int i = 0; i < defs[a].n; ++i) {
      phi += defs[a].w[i].sign * q[defs[a].w[i].coord];
      phidot += defs[a].w[i].sign * qd[defs[a].w[i].coord];
    }
    const double c = std::cos(phi), s = std::sin(phi);
    cache.ang[a].phi = phi;
    cache.ang[a].phidot = phidot;
    cache.ang[a].R << c, -s, s, c;
    cache.ang[a].Rp << -s, -c, c, -s;
  }
  return cache;
}

struct ChainTerm {
  Vec2 v;
  int angle;
};

// No chain is longer than thigh + shank + foot.
struct Chain {
  std::array<ChainTerm, 3> terms{};
  int n = 0;
  void push(const Vec2& v, int angle) { terms[n++] = {v, angle}; }
};

using JacMat = Eigen::Matrix<double, 2, kNumCoords>;

struct PointKin {
  Vec2 p = Vec2::Zero();
  Vec2 vel = Vec2::Zero();
  Vec2 a_vel = Vec2::Zero();  // velocity-product part of the acceleration
  JacMat J = JacMat::Zero();
};

PointKin eval_point(const KinCache& cache, const Chain& chain, const Vec2& base,
                    const Vec9& qd) {
  const auto& defs = angle_defs();
  PointKin out;
  out.p = base;
  out.J(0, 0) = 1.0;
  out.J(1, 1) = 1.0;
  for (int t = 0; t < chain.n; ++t) {
    const auto& ang = cache.ang[chain.terms[t].angle];
    const auto& def = defs[chain.terms[t].angle];
    const Vec2 rv = ang.R * chain.terms[t].v;
    const Vec2 rpv = ang.Rp * chain.terms[t].v;
    out.p += rv;
    out.a_vel -= ang.phidot * ang.phidot * rv;
    for (int i = 0; i < def.n; ++i) out.J.col(def.w[i].coord) += def.w[i].sign * rpv;
  }
  out.vel = out.J * qd;
  return out;
}

// Partials of J and a_vel with respect to q and qd.  Only angle coordinates
// produce nonzero blocks but we keep the dense layout for clarity.
struct PointDerivs {
  std::array<JacMat, kNumCoords> dJ{};  // dJ/dq_l
  JacMat da_dq = JacMat::Zero();
  JacMat da_dqd = JacMat::Zero();
};

PointDerivs eval_point_derivs(const KinCache& cache, const Chain& chain) {
  const auto& defs = angle_defs();
  PointDerivs out;
  for (auto& m : out.dJ) m.setZero();
  for (int t = 0; t < chain.n; ++t) {
    const auto& ang = cache.ang[chain.terms[t].angle];
    const auto& def = defs[chain.terms[t].angle];
    const Vec2 rv = ang.R * chain.terms[t].v;
    const Vec2 rpv = ang.Rp * chain.terms[t].v;
    for (int i = 0; i < def.n; ++i) {
      const int ci = def.w[i].coord;
      const double si = def.w[i].sign;
      out.da_dq.col(ci) -= ang.phidot * ang.phidot * si * rpv;
      out.da_dqd.col(ci) -= 2.0 * ang.phidot * si * rv;
      for (int j = 0; j < def.n; ++j) {
        out.dJ[def.w[j].coord].col(ci) -= si * def.w[j].sign * rv;
      }
    }
  }
  return out;
}

struct BodyChain {
  double mass = 0.0;
  double inertia = 0.0;
  int angle = 0;  // absolute angle whose rate is the body's angular velocity
  Chain com;
};

struct ModelChains {
  std::array<BodyChain, 7> bodies{};
  std::array<Chain, 4> contacts{};  // heel_L, toe_L, heel_R, toe_R
  Chain trunk_top;
  std::array<Chain, 2> knee{}, ankle{}, heel{}, toe{};
};

ModelChains build_chains(const SkeletalModel& model) {
  ModelChains mc;
  const auto& pelvis = model.segment(SegmentName::pelvis);

  auto fill_body = [](BodyChain& b, const BodySegment& s, int angle) {
    b.mass = s.mass_kg;
    b.inertia = s.inertia_zz;
    b.angle = angle;
  };

  fill_body(mc.bodies[0], pelvis, kAngTrunk);
  mc.bodies[0].com.push(Vec2(0.0, pelvis.com_offset_m), kAngTrunk);

  for (int side = 0; side < 2; ++side) {
    const int a_thigh = side == 0 ? kAngThighL : kAngThighR;
    const int a_shank = side == 0 ? kAngShankL : kAngShankR;
    const int a_foot = side == 0 ? kAngFootL : kAngFootR;
    const auto& th = model.segment(side == 0 ? SegmentName::thigh_L : SegmentName::thigh_R);
    const auto& sh = model.segment(side == 0 ? SegmentName::shank_L : SegmentName::shank_R);
    const auto& ft = model.segment(side == 0 ? SegmentName::foot_L : SegmentName::foot_R);

    BodyChain& bt = mc.bodies[1 + side];
    fill_body(bt, th, a_thigh);
    bt.com.push(Vec2(0.0, -th.com_offset_m), a_thigh);

    BodyChain& bs = mc.bodies[3 + side];
    fill_body(bs, sh, a_shank);
    bs.com.push(Vec2(0.0, -th.length_m), a_thigh);
    bs.com.push(Vec2(0.0, -sh.com_offset_m), a_shank);

    BodyChain& bf = mc.bodies[5 + side];
    fill_body(bf, ft, a_foot);
    bf.com.push(Vec2(0.0, -th.length_m), a_thigh);
    bf.com.push(Vec2(0.0, -sh.length_m), a_shank);
    bf.com.push(Vec2(ft.com_offset_m, model.heel_local_m.y()), a_foot);

    auto leg_chain = [&](const Vec2& tip) {
      Chain c;
      c.push(Vec2(0.0, -th.length_m), a_thigh);
      c.push(Vec2(0.0, -sh.length_m), a_shank);
      c.push(tip, a_foot);
      return c;
    };
    mc.contacts[2 * side] = leg_chain(model.heel_local_m);
    mc.contacts[2 * side + 1] = leg_chain(model.toe_local_m);
    mc.heel[side] = mc.contacts[2 * side];
    mc.toe[side] = mc.contacts[2 * side + 1];

    Chain knee;
    knee.push(Vec2(0.0, -th.length_m), a_thigh);
    mc.knee[side] = knee;
    Chain ankle = knee;
    ankle.push(Vec2(0.0, -sh.length_m), a_shank);
    mc.ankle[side] = ankle;
  }

  mc.trunk_top.push(Vec2(0.0, pelvis.length_m), kAngTrunk);
  return mc;
}

// Torque slot j drives generalized coordinate 3 + j (hip_L .. ankle_R).
inline int actuated_coord(int j) { return kHipL + j; }

struct ContactForceDerivs {
  Eigen::Matrix2d df_dp = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d df_dv = Eigen::Matrix2d::Zero();
};

ContactPointForce resolve_contact(const PointKin& pk, const ContactParams& cp,
                                  ContactForceDerivs* derivs) {
  ContactPointForce out;
  out.position = pk.p;
  out.velocity = pk.vel;
  out.penetration_m = cp.contact_radius_m - pk.p.y();
  const double d = out.penetration_m;
  if (d <= 0.0) return out;

  const double d0 = cp.smoothing_depth_m;
  const double phi = d * d / (d + d0);
  const double dphi = (d * d + 2.0 * d * d0) / ((d + d0) * (d + d0));
  const double ddot = -pk.vel.y();
  const double damp = 1.0 + cp.dissipation_s_per_m * ddot;
  const double damp_pos = std::max(0.0, damp);
  const double fn = cp.stiffness_n_per_m * phi * damp_pos;

  const double th = std::tanh(pk.vel.x() / cp.transition_vel_mps);
  const double ft = -cp.friction_mu * fn * th;
  out.force = Vec2(ft, fn);

  if (derivs != nullptr) {
    const double dfn_dpy = -cp.stiffness_n_per_m * dphi * damp_pos;
    const double dfn_dvy =
        damp > 0.0 ? -cp.stiffness_n_per_m * phi * cp.dissipation_s_per_m : 0.0;
    const double dft_dvx =
        -cp.friction_mu * fn * (1.0 - th * th) / cp.transition_vel_mps;
    derivs->df_dp << 0.0, -cp.friction_mu * th * dfn_dpy, 0.0, dfn_dpy;
    derivs->df_dv << dft_dvx, -cp.friction_mu * th * dfn_dvy, 0.0, dfn_dvy;
  }
  return out;
}

// Passive joint-stop torques and their diagonal partials. Each coordinate
// beyond its travel limit feels
//   tau = stiffness·ex²·dir − damping·ex²·qd
// with ex ≥ 0 the excess depth and dir pointing back into the range. The
// quadratic depth makes tau and dtau/dq vanish at the boundary (C¹), and the
// damping term can only dissipate (power = −damping·ex²·qd²).
struct JointStopTerms {
  Vec9 tau = Vec9::Zero();
  Vec9 dtau_dq = Vec9::Zero();   // diagonal of the q partial
  Vec9 dtau_dqd = Vec9::Zero();  // diagonal of the qd partial
};

JointStopTerms joint_stop_torques(const SkeletalModel& model, const Vec9& q, const Vec9& qd) {
  JointStopTerms out;
  // Only the six anatomical joints carry stops: a stop on a relative joint
  // coordinate is an internal action–reaction pair, while one on the pelvis
  // coordinates would torque the body against the world and break momentum
  // conservation in flight. Pelvis limits stay solver-side bounds.
  for (int i = kHipL; i <= kAnkleR; ++i) {
    const auto& [lo, hi] = model.joint_limits_rad[i];
    double ex, dir;
    if (q[i] < lo) {
      ex = lo - q[i];
      dir = 1.0;
    } else if (q[i] > hi) {
      ex = q[i] - hi;
      dir = -1.0;
    } else {
      continue;
    }
    const double k = model.joint_stop_stiffness;
    const double c = model.joint_stop_damping;
    out.tau[i] = k * ex * ex * dir - c * ex * ex * qd[i];
    out.dtau_dq[i] = -2.0 * k * ex + 2.0 * c * ex * dir * qd[i];  // d(ex)/dq = −dir
    out.dtau_dqd[i] = -c * ex * ex;
  }
  return out;
}

Eigen::LDLT<Mat9> factorize(const Mat9& M) {
  Eigen::LDLT<Mat9> ldlt(M);
  const auto d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const double dmin = d.cwiseAbs().minCoeff();
  if (ldlt.info() != Eigen::Success || !(dmin > 0.0) || dmax / dmin > 1e12 ||
      d.minCoeff() <= 0.0) {
    throw SingularConfiguration("mass matrix is not safely positive definite");
  }
  return ldlt;
}

}  // namespace

PlanarLandmarks forward_kinematics(const SkeletalModel& model, const Vec9& q) {
  const ModelChains mc = build_chains(model);
  const KinCache cache = make_cache(q, Vec9::Zero());
  const Vec2 base(q[kPelvisX], q[kPelvisY]);
  const Vec9 zero = Vec9::Zero();

  PlanarLandmarks lm;
  lm.pelvis = base;
  lm.trunk_top = eval_point(cache, mc.trunk_top, base, zero).p;
  for (int side = 0; side < 2; ++side) {
    lm.knee[side] = eval_point(cache, mc.knee[side], base, zero).p;
    lm.ankle[side] = eval_point(cache, mc.ankle[side], base, zero).p;
    lm.heel[side] = eval_point(cache, mc.heel[side], base, zero).p;
    lm.toe[side] = eval_point(cache, mc.toe[side], base, zero).p;
  }
  return lm;
}

Landmarks3 landmarks_3d(const SkeletalModel& model, const Vec9& q) {
  const PlanarLandmarks lm = forward_kinematics(model, q);
  const double half_w = 0.5 * model.pelvis_width_m;
  auto lift = [](const Vec2& p, double z) { return Vec3(p.x(), p.y(), z); };

  Landmarks3 out;
  out.pelvis = lift(lm.pelvis, 0.0);
  out.trunk_top = lift(lm.trunk_top, 0.0);
  for (int side = 0; side < 2; ++side) {
    const double z = side == 0 ? half_w : -half_w;
    out.hip[side] = lift(lm.pelvis, z);
    out.knee[side] = lift(lm.knee[side], z);
    out.ankle[side] = lift(lm.ankle[side], z);
    out.heel[side] = lift(lm.heel[side], z);
    out.toe[side] = lift(lm.toe[side], z);
  }
  return out;
}

DynamicsTerms dynamics_terms(const SkeletalModel& model, const Vec9& q, const Vec9& qd) {
  const ModelChains mc = build_chains(model);
  const KinCache cache = make_cache(q, qd);
  const Vec2 base(q[kPelvisX], q[kPelvisY]);
  const Vec2 minus_g(0.0, kGravity);  // a_vel - g_vec with g_vec = (0, -g)
  const auto& defs = angle_defs();

  DynamicsTerms out;
  for (const auto& body : mc.bodies) {
    const PointKin pk = eval_point(cache, body.com, base, qd);
    out.mass_matrix.noalias() += body.mass * pk.J.transpose() * pk.J;
    Vec9 w = Vec9::Zero();
    const auto& def = defs[body.angle];
    for (int i = 0; i < def.n; ++i) w[def.w[i].coord] = def.w[i].sign;
    out.mass_matrix.noalias() += body.inertia * w * w.transpose();
    out.bias.noalias() += body.mass * pk.J.transpose() * (pk.a_vel + minus_g);
  }
  return out;
}

ContactResult contact_forces(const SkeletalModel& model, const Vec9& q, const Vec9& qd,
                             const ContactParams& contact) {
  const ModelChains mc = build_chains(model);
  const KinCache cache = make_cache(q, qd);
  const Vec2 base(q[kPelvisX], q[kPelvisY]);

  ContactResult out;
  for (int i = 0; i < 4; ++i) {
    const PointKin pk = eval_point(cache, mc.contacts[i], base, qd);
    out.points[i] = resolve_contact(pk, contact, nullptr);
    if (out.points[i].penetration_m > 0.0) {
      out.generalized.noalias() += pk.J.transpose() * out.points[i].force;
    }
  }
  return out;
}

Vec9 forward_dynamics(const SkeletalModel& model, const State& state, const Control& control,
                      const ContactParams& contact) {
  if (!state.is_finite() || !control.tau.allFinite()) {
    throw NonFiniteState("forward dynamics received a non-finite state or control");
  }
  const DynamicsTerms terms = dynamics_terms(model, state.q, state.qd);
  const ContactResult cr = contact_forces(model, state.q, state.qd, contact);

  Vec9 rhs = cr.generalized + joint_stop_torques(model, state.q, state.qd).tau - terms.bias;
  for (int j = 0; j < kNumActuated; ++j) rhs[actuated_coord(j)] += control.tau[j];
  return factorize(terms.mass_matrix).solve(rhs);
}

State integrate_step(const SkeletalModel& model, const State& state, const Control& control,
                     const ContactParams& contact, double dt) {
  if (!(dt > 0.0) || dt > kMaxStepSeconds) {
    throw PreconditionViolation("integration step must lie in (0, " +
                                std::to_string(kMaxStepSeconds) + "] seconds");
  }
  auto deriv = [&](const State& s) {
    Vec18 dx;
    dx.head<kNumCoords>() = s.qd;
    dx.tail<kNumCoords>() = forward_dynamics(model, s, control, contact);
    return dx;
  };
  auto shift = [](const State& s, const Vec18& dx, double h) {
    return State::from_vector(s.as_vector() + h * dx);
  };

  const Vec18 k1 = deriv(state);
  const Vec18 k2 = deriv(shift(state, k1, 0.5 * dt));
  const Vec18 k3 = deriv(shift(state, k2, 0.5 * dt));
  const Vec18 k4 = deriv(shift(state, k3, dt));
  State next = shift(state, k1 + 2.0 * k2 + 2.0 * k3 + k4, dt / 6.0);
  if (!next.is_finite()) {
    throw NonFiniteState("integration produced a non-finite state");
  }
  return next;
}

StateJacobians dynamics_jacobians(const SkeletalModel& model, const State& state,
                                  const Control& control, const ContactParams& contact) {
  if (!state.is_finite() || !control.tau.allFinite()) {
    throw NonFiniteState("jacobian evaluation received a non-finite state or control");
  }
  const ModelChains mc = build_chains(model);
  const KinCache cache = make_cache(state.q, state.qd);
  const Vec2 base(state.q[kPelvisX], state.q[kPelvisY]);
  const Vec2 minus_g(0.0, kGravity);
  const auto& defs = angle_defs();

  Mat9 M = Mat9::Zero();
  Vec9 bias = Vec9::Zero();
  std::array<Mat9, kNumCoords> dM{};
  for (auto& m : dM) m.setZero();
  Mat9 dbias_dq = Mat9::Zero();
  Mat9 dbias_dqd = Mat9::Zero();

  for (const auto& body : mc.bodies) {
    const PointKin pk = eval_point(cache, body.com, base, state.qd);
    const PointDerivs pd = eval_point_derivs(cache, body.com);
    M.noalias() += body.mass * pk.J.transpose() * pk.J;
    Vec9 w = Vec9::Zero();
    const auto& def = defs[body.angle];
    for (int i = 0; i < def.n; ++i) w[def.w[i].coord] = def.w[i].sign;
    M.noalias() += body.inertia * w * w.transpose();
    bias.noalias() += body.mass * pk.J.transpose() * (pk.a_vel + minus_g);

    for (int l = 0; l < kNumCoords; ++l) {
      dM[l].noalias() +=
          body.mass * (pd.dJ[l].transpose() * pk.J + pk.J.transpose() * pd.dJ[l]);
      dbias_dq.col(l).noalias() +=
          body.mass * (pd.dJ[l].transpose() * (pk.a_vel + minus_g) +
                       pk.J.transpose() * pd.da_dq.col(l));
      dbias_dqd.col(l).noalias() += body.mass * pk.J.transpose() * pd.da_dqd.col(l);
    }
  }

  Vec9 qc = Vec9::Zero();
  Mat9 dqc_dq = Mat9::Zero();
  Mat9 dqc_dqd = Mat9::Zero();
  for (int i = 0; i < 4; ++i) {
    const PointKin pk = eval_point(cache, mc.contacts[i], base, state.qd);
    ContactForceDerivs fd;
    const ContactPointForce cpf = resolve_contact(pk, contact, &fd);
    if (cpf.penetration_m <= 0.0) continue;
    const PointDerivs pd = eval_point_derivs(cache, mc.contacts[i]);
    qc.noalias() += pk.J.transpose() * cpf.force;
    for (int l = 0; l < kNumCoords; ++l) {
      const Vec2 dp = pk.J.col(l);
      const Vec2 dv = pd.dJ[l] * state.qd;
      dqc_dq.col(l).noalias() += pd.dJ[l].transpose() * cpf.force +
                                 pk.J.transpose() * (fd.df_dp * dp + fd.df_dv * dv);
      dqc_dqd.col(l).noalias() += pk.J.transpose() * (fd.df_dv * pk.J.col(l));
    }
  }

  const JointStopTerms stops = joint_stop_torques(model, state.q, state.qd);
  qc += stops.tau;
  dqc_dq += stops.dtau_dq.asDiagonal();
  dqc_dqd += stops.dtau_dqd.asDiagonal();

  Vec9 rhs = qc - bias;
  for (int j = 0; j < kNumActuated; ++j) rhs[actuated_coord(j)] += control.tau[j];
  const Eigen::LDLT<Mat9> ldlt = factorize(M);
  const Vec9 accel = ldlt.solve(rhs);

  Mat9 da_dq;
  Mat9 da_dqd;
  for (int l = 0; l < kNumCoords; ++l) {
    da_dq.col(l) = ldlt.solve(Vec9(dqc_dq.col(l) - dbias_dq.col(l) - dM[l] * accel));
    da_dqd.col(l) = ldlt.solve(Vec9(dqc_dqd.col(l) - dbias_dqd.col(l)));
  }

  StateJacobians out;
  out.A.topRightCorner<kNumCoords, kNumCoords>().setIdentity();
  out.A.bottomLeftCorner<kNumCoords, kNumCoords>() = da_dq;
  out.A.bottomRightCorner<kNumCoords, kNumCoords>() = da_dqd;
  Eigen::Matrix<double, kNumCoords, kNumActuated> S =
      Eigen::Matrix<double, kNumCoords, kNumActuated>::Zero();
  for (int j = 0; j < kNumActuated; ++j) S(actuated_coord(j), j) = 1.0;
  out.B.bottomRows<kNumCoords>() = ldlt.solve(S);
  return out;
}

double total_energy(const SkeletalModel& model, const State& state) {
  const ModelChains mc = build_chains(model);
  const KinCache cache = make_cache(state.q, state.qd);
  const Vec2 base(state.q[kPelvisX], state.q[kPelvisY]);

  double energy = 0.0;
  for (const auto& body : mc.bodies) {
    const PointKin pk = eval_point(cache, body.com, base, state.qd);
    const double omega = cache.ang[body.angle].phidot;
    energy += 0.5 * body.mass * pk.vel.squaredNorm() + 0.5 * body.inertia * omega * omega;
    energy += body.mass * kGravity * pk.p.y();
  }
  return energy;
}

}  // namespace gaitforge
