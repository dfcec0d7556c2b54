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

// Internal uniform periodic cubic spline used to parametrize joint torques
// in the shooting solver. C2-continuous across the period boundary.

#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "gaitforge/common.hpp"

namespace gaitforge::internal {

// Interpolates P values placed at t_i = i*period/P, wrapping around so that
// the curve and its first two derivatives are continuous at t = 0 == period.
class PeriodicCubicSpline {
 public:
  PeriodicCubicSpline(double period, Eigen::VectorXd values)
      : period_(period), y_(std::move(values)) {
    const int p = static_cast<int>(y_.size());
    if (p < 3) throw PreconditionViolation("periodic spline needs at least 3 knots");
    if (!(period > 0.0)) throw PreconditionViolation("spline period must be positive");
    h_ = period_ / p;

    // Second derivatives from the cyclic tridiagonal system
    //   m_{i-1} + 4 m_i + m_{i+1} = 6 (y_{i-1} - 2 y_i + y_{i+1}) / h^2.
    // P is small here, so a dense solve keeps this obviously correct.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs(p);
    for (int i = 0; i < p; ++i) {
      const int prev = (i + p - 1) % p;
      const int next = (i + 1) % p;
      a(i, prev) += 1.0;
      a(i, i) += 4.0;
      a(i, next) += 1.0;
      rhs[i] = 6.0 * (y_[prev] - 2.0 * y_[i] + y_[next]) / (h_ * h_);
    }
    m2_ = a.partialPivLu().solve(rhs);
  }

  double period() const { return period_; }

  double operator()(double t) const {
    double s = std::fmod(t, period_);
    if (s < 0.0) s += period_;
    const int p = static_cast<int>(y_.size());
    int i = static_cast<int>(s / h_);
    if (i >= p) i = p - 1;  // guard against s == period_ after fmod rounding
    const int next = (i + 1) % p;
    const double a = (i + 1) * h_ - s;  // distance to the right knot
    const double b = s - i * h_;        // distance from the left knot
    return m2_[i] * a * a * a / (6.0 * h_) + m2_[next] * b * b * b / (6.0 * h_) +
           (y_[i] / h_ - m2_[i] * h_ / 6.0) * a + (y_[next] / h_ - m2_[next] * h_ / 6.0) * b;
  }

 private:
  double period_;
  double h_;
  Eigen::VectorXd y_;
  Eigen::VectorXd m2_;
};

}  // namespace gaitforge::internal
