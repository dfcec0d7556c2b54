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

#ifndef GAITFORGE_MODEL_HPP_
#define GAITFORGE_MODEL_HPP_

#include <array>
#include <string>

#include <Eigen/Core>

#include "gaitforge/common.hpp"

namespace gaitforge {

// Per-subject measurements of the lower extremity. Lengths in meters, mass in
// kilograms. height_m may be <= 0 to mean "absent"; it is then estimated from
// leg length when a model is built.
struct AnthropometricProfile {
  std::string subject_id;
  double pelvis_width_m = 0.24;
  double thigh_len_m = 0.0;
  double shank_len_m = 0.0;
  double foot_len_m = 0.0;
  double total_mass_kg = 0.0;
  double height_m = 0.0;  // optional; derived if absent

  // Throws NonPositiveDimension / PreconditionViolation on invalid data.
  void validate() const;
};

enum class SegmentName { pelvis, thigh_L, thigh_R, shank_L, shank_R, foot_L, foot_R };

const char* to_string(SegmentName n);

struct BodySegment {
  SegmentName name = SegmentName::pelvis;
  double length_m = 0.0;
  double mass_kg = 0.0;
  double com_offset_m = 0.0;  // from the proximal joint, along the segment
  double inertia_zz = 0.0;    // about the COM, kg m^2
};

// Generalized coordinate layout, fixed across the library:
//   0 pelvis_x [m], 1 pelvis_y [m], 2 pelvis_pitch [rad],
//   3 hip_L, 4 knee_L, 5 ankle_L, 6 hip_R, 7 knee_R, 8 ankle_R [rad].
// Sign conventions: hip flexion swings the thigh forward, knee flexion folds
// the shank backward, ankle dorsiflexion tips the toes up. At q = 0 the model
// stands with both legs vertical and feet flat.
inline constexpr int kNumCoords = 9;
inline constexpr int kNumActuated = 6;

enum Coord {
  kPelvisX = 0,
  kPelvisY = 1,
  kPelvisPitch = 2,
  kHipL = 3,
  kKneeL = 4,
  kAnkleL = 5,
  kHipR = 6,
  kKneeR = 7,
  kAnkleR = 8,
};

const char* coord_name(int dof);

// Planar 7-segment rigid-body linkage. Immutable after construction; copy
// freely across threads.
struct SkeletalModel {
  std::array<BodySegment, 7> segments;  // indexed by SegmentName order
  std::array<std::pair<double, double>, kNumCoords> joint_limits_rad;
  Eigen::Vector2d heel_local_m{0, 0};  // in foot frame, origin at the ankle
  Eigen::Vector2d toe_local_m{0, 0};
  double pelvis_width_m = 0.0;  // lateral hip spacing for the 3D embedding
  double scale_factor = 1.0;
  std::string source_subject;
  // Passive joint stops: beyond a travel limit each coordinate feels a smooth
  // restoring torque k·ex² plus depth-scaled damping c·ex²·qd (ex = excess in
  // rad). Zero inside the range, so in-range dynamics are untouched; quadratic
  // depth keeps the torque C¹ at the boundary for the solver Jacobians.
  double joint_stop_stiffness = 2000.0;  // N·m per rad²
  double joint_stop_damping = 100.0;     // N·m·s per rad³

  const BodySegment& segment(SegmentName n) const {
    return segments[static_cast<int>(n)];
  }
  double total_mass_kg() const;
  // Pelvis height in the reference standing pose (feet resting on the ground
  // with a contact sphere of the given radius).
  double standing_pelvis_height(double contact_radius_m) const;

  // Throws on violated invariants (mass sum, limits ordering, positivity).
  void validate(double expected_total_mass_kg = -1.0) const;
};

// Builds the unit-scale model for a subject. Masses are distributed by fixed
// anthropometric fractions, segments are treated as uniform rods for COM and
// inertia. Throws NonPositiveDimension on degenerate measurements.
SkeletalModel build_model(const AnthropometricProfile& profile);

// Applies a homogeneous scale factor: lengths, COM offsets and contact point
// offsets scale by s, masses by s^3, inertias by s^5. Guard band keeps the
// factor near the physically sensible range. Throws ScaleOutOfRange.
SkeletalModel scale_model(const SkeletalModel& model, double s);

inline constexpr double kScaleGuardMin = 0.5;
inline constexpr double kScaleGuardMax = 1.5;

// Mass fractions of total body mass. The lumped pelvis segment carries
// everything above the hips (trunk, head, arms), so the seven fractions sum
// to exactly 1.
inline constexpr double kMassFracThigh = 0.100;
inline constexpr double kMassFracShank = 0.0465;
inline constexpr double kMassFracFoot = 0.0145;
inline constexpr double kMassFracPelvis =
    1.0 - 2.0 * (kMassFracThigh + kMassFracShank + kMassFracFoot);  // 0.678

// Geometry ratios used by build_model.
inline constexpr double kTrunkLengthOverHeight = 0.288;
inline constexpr double kLegLengthOverHeight = 0.491;  // thigh + shank
inline constexpr double kHeelBackOverFootLen = 0.25;
inline constexpr double kToeForwardOverFootLen = 0.75;
inline constexpr double kAnkleHeightOverFootLen = 0.20;

// Default joint limits, degrees, applied by build_model.
struct JointLimitDefaults {
  double hip_min_deg = -30.0, hip_max_deg = 70.0;
  double knee_min_deg = -5.0, knee_max_deg = 90.0;
  double ankle_min_deg = -30.0, ankle_max_deg = 30.0;
  double pitch_min_deg = -45.0, pitch_max_deg = 45.0;
};

SkeletalModel build_model(const AnthropometricProfile& profile,
                          const JointLimitDefaults& limits);

}  // namespace gaitforge

#endif  // GAITFORGE_MODEL_HPP_
