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

#ifndef GAITFORGE_TRIAL_HPP_
#define GAITFORGE_TRIAL_HPP_

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gaitforge/dynamics.hpp"

namespace gaitforge {

// Fixed channel order used everywhere a trial exposes its six joint angles or
// joint positions: hip_L, knee_L, ankle_L, hip_R, knee_R, ankle_R.
inline constexpr int kNumAngleChannels = 6;
extern const std::array<const char*, kNumAngleChannels> kAngleChannelNames;

enum class Provenance { real, simulated };
enum class SolverKind { collocation, shooting, none };

const char* to_string(Provenance p);
const char* to_string(SolverKind s);

struct TrialFrame {
  double t_s = 0.0;
  // Joint angles in degrees, canonical channel order.
  std::array<double, kNumAngleChannels> angles_deg{};
  // World-frame joint centres; z carries the lateral leg offset.
  Landmarks3 joints_3d;
  // Pixel coordinates of the six joints after projection, channel order;
  // absent until a camera has been applied.
  std::optional<std::array<Vec2, kNumAngleChannels>> joints_2d;
};

// One walking sequence, real (measured / imported) or simulated (synthesized
// by a solver on a scaled model).
struct GaitTrial {
  std::string trial_id;
  std::string subject_id;
  std::map<std::string, std::string> labels;  // e.g. gender, identity
  Provenance provenance = Provenance::simulated;
  SolverKind solver = SolverKind::none;
  double scale_factor = 1.0;
  std::optional<double> view_deg;
  double duration_s = 0.0;
  std::vector<TrialFrame> frames;
  // Unknown top-level JSON fields from loaded files, kept verbatim (as a
  // serialized JSON object) so round-trips preserve them.
  std::string extras_json;

  // Throws PreconditionViolation / LengthMismatch on invariant violations:
  // at least two frames, strictly increasing timestamps, finite angles, and
  // simulated trials must name their solver.
  void validate() const;
};

}  // namespace gaitforge

#endif  // GAITFORGE_TRIAL_HPP_
