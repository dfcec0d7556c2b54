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

#ifndef GAITFORGE_COMMON_HPP_
#define GAITFORGE_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gaitforge {

inline constexpr double kGravity = 9.81;      // m/s^2
inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// ---------------------------------------------------------------------------
// Error hierarchy. All library errors derive from Error so callers can catch
// coarsely; specific types exist where the contract names them.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct PreconditionViolation : Error {
  using Error::Error;
};

struct NonPositiveDimension : Error {
  using Error::Error;
};
struct ScaleOutOfRange : Error {
  using Error::Error;
};
struct SingularConfiguration : Error {
  using Error::Error;
};
struct NonFiniteState : Error {
  using Error::Error;
};
struct NoConvergence : Error {
  using Error::Error;
};
struct MissingChannel : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct NonFiniteLoss : Error {
  using Error::Error;
};
struct InsufficientSubjects : Error {
  using Error::Error;
};
struct EmptyCohort : Error {
  using Error::Error;
};
struct EmptyConfusion : Error {
  using Error::Error;
};
struct BehindCamera : Error {
  using Error::Error;
};
struct ParseError : Error {
  ParseError(const std::string& msg, int line) : Error(msg), line_number(line) {}
  int line_number;
};
struct SchemaMismatch : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomness in the library flows through this type so
// runs are reproducible bit-for-bit from explicit seeds; the raw engine output
// is mapped to doubles by hand (the std <random> distributions are
// implementation-defined).
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  // splitmix64 step; good enough statistics for simulation seeding and
  // classifier subsampling.
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (no cached spare; keeps state a single word)
  double normal() {
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Derive an independent stream for a labelled sub-task.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0x632be59bd9b4e019ULL * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

template <typename Vec>
void fisher_yates_shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

}  // namespace gaitforge

#endif  // GAITFORGE_COMMON_HPP_
