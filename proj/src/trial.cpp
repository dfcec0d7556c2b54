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

#include "gaitforge/trial.hpp"

#include <cmath>

namespace gaitforge {

const std::array<const char*, kNumAngleChannels> kAngleChannelNames = {
    "hip_L", "knee_L", "ankle_L", "hip_R", "knee_R", "ankle_R"};

const char* to_string(Provenance p) {
  return p == Provenance::real ? "real" : "simulated";
}

const char* to_string(SolverKind s) {
  switch (s) {
    case SolverKind::collocation: return "collocation";
    case SolverKind::shooting: return "shooting";
    case SolverKind::none: return "none";
  }
  return "?";
}

void GaitTrial::validate() const {
  if (frames.size() < 2) {
    throw LengthMismatch("trial " + trial_id + " needs at least 2 frames, has " +
                         std::to_string(frames.size()));
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0 && !(frames[i].t_s > frames[i - 1].t_s)) {
      throw PreconditionViolation("trial " + trial_id +
                                  " timestamps not strictly increasing at frame " +
                                  std::to_string(i));
    }
    for (double a : frames[i].angles_deg) {
      if (!std::isfinite(a)) {
        throw PreconditionViolation("trial " + trial_id + " has a non-finite angle at frame " +
                                    std::to_string(i));
      }
    }
  }
  if (provenance == Provenance::simulated && solver == SolverKind::none) {
    throw PreconditionViolation("simulated trial " + trial_id + " must record its solver");
  }
}

}  // namespace gaitforge
