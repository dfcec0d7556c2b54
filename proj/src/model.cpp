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

#include "gaitforge/model.hpp"

#include <cmath>

namespace gaitforge {

const char* to_string(SegmentName n) {
  switch (n) {
    case SegmentName::pelvis: return "pelvis";
    case SegmentName::thigh_L: return "thigh_L";
    case SegmentName::thigh_R: return "thigh_R";
    case SegmentName::shank_L: return "shank_L";
    case SegmentName::shank_R: return "shank_R";
    case SegmentName::foot_L: return "foot_L";
    case SegmentName::foot_R: return "foot_R";
  }
  return "?";
}

const char* coord_name(int dof) {
  static const char* names[kNumCoords] = {"pelvis_x", "pelvis_y",  "pelvis_pitch",
                                          "hip_L",    "knee_L",    "ankle_L",
                                          "hip_R",    "knee_R",    "ankle_R"};
  return (dof >= 0 && dof < kNumCoords) ? names[dof] : "?";
}

void AnthropometricProfile::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw NonPositiveDimension(std::string("profile field must be positive: ") + what);
    }
  };
  positive(pelvis_width_m, "pelvis_width_m");
  positive(thigh_len_m, "thigh_len_m");
  positive(shank_len_m, "shank_len_m");
  positive(foot_len_m, "foot_len_m");
  positive(total_mass_kg, "total_mass_kg");
  if (height_m > 0.0 && thigh_len_m + shank_len_m >= height_m) {
    throw PreconditionViolation("leg length exceeds stated height for subject " + subject_id);
  }
}

double SkeletalModel::total_mass_kg() const {
  double m = 0.0;
  for (const auto& s : segments) m += s.mass_kg;
  return m;
}

double SkeletalModel::standing_pelvis_height(double contact_radius_m) const {
  return segment(SegmentName::thigh_L).length_m + segment(SegmentName::shank_L).length_m -
         heel_local_m.y() + contact_radius_m;
}

void SkeletalModel::validate(double expected_total_mass_kg) const {
  for (const auto& s : segments) {
    if (!(s.length_m > 0.0) || !(s.mass_kg > 0.0)) {
      throw NonPositiveDimension(std::string("segment has non-positive dimension: ") +
                                 to_string(s.name));
    }
    if (s.com_offset_m < 0.0 || s.com_offset_m > s.length_m) {
      throw PreconditionViolation(std::string("COM offset outside segment: ") +
                                  to_string(s.name));
    }
    if (!(s.inertia_zz > 0.0)) {
      throw NonPositiveDimension(std::string("segment inertia must be positive: ") +
                                 to_string(s.name));
    }
  }
  for (int i = 0; i < kNumCoords; ++i) {
    if (!(joint_limits_rad[i].first < joint_limits_rad[i].second)) {
      throw PreconditionViolation(std::string("joint limit min >= max for ") + coord_name(i));
    }
  }
  if (expected_total_mass_kg > 0.0) {
    const double sum = total_mass_kg();
    if (std::abs(sum - expected_total_mass_kg) > 1e-9 * expected_total_mass_kg) {
      throw PreconditionViolation("segment masses do not sum to subject mass");
    }
  }
}

namespace {

BodySegment make_rod(SegmentName name, double length, double mass) {
  BodySegment s;
  s.name = name;
  s.length_m = length;
  s.mass_kg = mass;
  s.com_offset_m = 0.5 * length;
  s.inertia_zz = mass * length * length / 12.0;
  return s;
}

}  // namespace

SkeletalModel build_model(const AnthropometricProfile& profile) {
  return build_model(profile, JointLimitDefaults{});
}

SkeletalModel build_model(const AnthropometricProfile& profile,
                          const JointLimitDefaults& limits) {
  profile.validate();

  const double height = profile.height_m > 0.0
                            ? profile.height_m
                            : (profile.thigh_len_m + profile.shank_len_m) / kLegLengthOverHeight;
  const double trunk_len = kTrunkLengthOverHeight * height;
  const double m = profile.total_mass_kg;

  SkeletalModel model;
  model.segments[0] = make_rod(SegmentName::pelvis, trunk_len, kMassFracPelvis * m);
  model.segments[1] = make_rod(SegmentName::thigh_L, profile.thigh_len_m, kMassFracThigh * m);
  model.segments[2] = make_rod(SegmentName::thigh_R, profile.thigh_len_m, kMassFracThigh * m);
  model.segments[3] = make_rod(SegmentName::shank_L, profile.shank_len_m, kMassFracShank * m);
  model.segments[4] = make_rod(SegmentName::shank_R, profile.shank_len_m, kMassFracShank * m);
  model.segments[5] = make_rod(SegmentName::foot_L, profile.foot_len_m, kMassFracFoot * m);
  model.segments[6] = make_rod(SegmentName::foot_R, profile.foot_len_m, kMassFracFoot * m);

  // Foot frame: origin at the ankle, x forward along the sole, y up. The sole
  // sits ankle-height below the joint; the COM offset records the forward
  // shift of the foot COM (midway between heel and toe).
  const double lf = profile.foot_len_m;
  const double ankle_h = kAnkleHeightOverFootLen * lf;
  model.heel_local_m = Eigen::Vector2d(-kHeelBackOverFootLen * lf, -ankle_h);
  model.toe_local_m = Eigen::Vector2d(kToeForwardOverFootLen * lf, -ankle_h);
  for (auto idx : {5, 6}) {
    model.segments[idx].com_offset_m =
        0.5 * (kToeForwardOverFootLen - kHeelBackOverFootLen) * lf;
  }

  model.pelvis_width_m = profile.pelvis_width_m;
  model.scale_factor = 1.0;
  model.source_subject = profile.subject_id;

  const auto deg_pair = [](double lo, double hi) {
    return std::make_pair(deg2rad(lo), deg2rad(hi));
  };
  model.joint_limits_rad[kPelvisX] = {-1e3, 1e3};
  model.joint_limits_rad[kPelvisY] = {0.05, 3.0};
  model.joint_limits_rad[kPelvisPitch] = deg_pair(limits.pitch_min_deg, limits.pitch_max_deg);
  for (auto hip : {kHipL, kHipR}) {
    model.joint_limits_rad[hip] = deg_pair(limits.hip_min_deg, limits.hip_max_deg);
  }
  for (auto knee : {kKneeL, kKneeR}) {
    model.joint_limits_rad[knee] = deg_pair(limits.knee_min_deg, limits.knee_max_deg);
  }
  for (auto ankle : {kAnkleL, kAnkleR}) {
    model.joint_limits_rad[ankle] = deg_pair(limits.ankle_min_deg, limits.ankle_max_deg);
  }

  model.validate(profile.total_mass_kg);
  return model;
}

SkeletalModel scale_model(const SkeletalModel& model, double s) {
  if (!(s >= kScaleGuardMin && s <= kScaleGuardMax)) {
    throw ScaleOutOfRange("scale factor " + std::to_string(s) + " outside guard band [" +
                          std::to_string(kScaleGuardMin) + ", " + std::to_string(kScaleGuardMax) +
                          "]");
  }
  const double s3 = s * s * s;
  const double s5 = s3 * s * s;

  SkeletalModel out = model;
  for (auto& seg : out.segments) {
    seg.length_m *= s;
    seg.com_offset_m *= s;
    seg.mass_kg *= s3;
    seg.inertia_zz *= s5;
  }
  out.heel_local_m *= s;
  out.toe_local_m *= s;
  out.pelvis_width_m *= s;
  out.scale_factor = model.scale_factor * s;
  return out;
}

}  // namespace gaitforge
