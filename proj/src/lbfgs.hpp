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

// Internal limited-memory BFGS with a strong-Wolfe line search. Used as the
// inner solver of the augmented-Lagrangian gait optimizer; not part of the
// public API.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <utility>

#include <Eigen/Dense>

namespace gaitforge::internal {

struct LbfgsOptions {
  int max_iterations = 400;
  int memory = 15;
  double grad_tolerance = 1e-7;
  // Relative decrease below which we declare stagnation (after a few strikes).
  double f_tolerance = 1e-15;
  int max_line_search = 60;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;  // true when the gradient tolerance was reached
  double mean_step = 0.0;  // mean accepted line-search step length
};

// Minimizes fg(x, grad) -> f starting from x0. The callable must fill `grad`
// on every invocation; non-finite objective values are treated as out of
// bounds and rejected by the line search.
//
// `apply_h0`, when provided, replaces the usual gamma-scaled identity as the
// initial inverse-Hessian estimate of the two-loop recursion. It must be a
// fixed symmetric positive-definite operator; the caller is responsible for
// refreshing it (with a fresh lbfgs_minimize call, since the curvature
// history is only valid for one operator).
template <typename F>
LbfgsResult lbfgs_minimize(
    F&& fg, Eigen::VectorXd x0, const LbfgsOptions& opt = {},
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_h0 = {}) {
  const double kC1 = 1e-4;
  const double kC2 = 0.9;
  const auto n = x0.size();

  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(n), g_trial(n);
  double f = fg(x, g);
  if (!std::isfinite(f)) {
    LbfgsResult bad;
    bad.x = std::move(x);
    return bad;
  }

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd p(n), x_trial(n);
  int stagnant = 0;
  double step_sum = 0.0;

  LbfgsResult res;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tolerance) {
      res.converged = true;
      break;
    }

    // Two-loop recursion for the search direction p = -H g.
    p = -g;
    const int m = static_cast<int>(s_hist.size());
    Eigen::VectorXd alpha_hist(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha_hist[i] = rho_hist[i] * s_hist[i].dot(p);
      p -= alpha_hist[i] * y_hist[i];
    }
    if (apply_h0) {
      p = apply_h0(p);
    } else if (m > 0) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      p *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(p);
      p += (alpha_hist[i] - beta) * s_hist[i];
    }

    double dphi0 = g.dot(p);
    if (!(dphi0 < 0.0)) {  // not a descent direction: drop the history
      p = apply_h0 ? Eigen::VectorXd(-apply_h0(g)) : Eigen::VectorXd(-g);
      dphi0 = g.dot(p);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      if (!(dphi0 < 0.0)) break;  // preconditioner numerically defective
    }

    // Strong-Wolfe line search (bracket then zoom, bisection safeguarded).
    const double phi0 = f;
    auto eval = [&](double a) {
      x_trial = x + a * p;
      return fg(x_trial, g_trial);
    };

    // Without curvature history the raw steepest-descent step can overshoot
    // by orders of magnitude on stiff problems; start the search at a step
    // sized to the gradient instead. A preconditioned direction is already
    // Newton-like, so it starts at the unit step.
    const double alpha0 =
        (s_hist.empty() && !apply_h0)
            ? std::min(1.0, 1.0 / std::max(1.0, g.lpNorm<Eigen::Infinity>()))
            : 1.0;
    double alpha = alpha0, alpha_prev = 0.0, phi_prev = phi0, dphi_prev = dphi0;
    double lo = 0.0, hi = -1.0, phi_lo = phi0, dphi_lo = dphi0;
    double phi_hi = std::numeric_limits<double>::infinity();
    double accepted = -1.0, phi_acc = phi0;
    bool bracketed = false;
    for (int ls = 0; ls < opt.max_line_search; ++ls) {
      double phi = eval(alpha);
      if (!std::isfinite(phi)) {  // stepped out of the finite region: shrink
        alpha = 0.5 * (alpha_prev + alpha);
        continue;
      }
      double dphi = g_trial.dot(p);
      if (phi > phi0 + kC1 * alpha * dphi0 || (phi >= phi_prev && alpha_prev > 0.0)) {
        lo = alpha_prev;
        phi_lo = phi_prev;
        dphi_lo = dphi_prev;
        hi = alpha;
        phi_hi = phi;
        bracketed = true;
        break;
      }
      if (std::abs(dphi) <= -kC2 * dphi0) {
        accepted = alpha;
        phi_acc = phi;
        break;
      }
      if (dphi >= 0.0) {
        lo = alpha;
        phi_lo = phi;
        dphi_lo = dphi;
        hi = alpha_prev;
        phi_hi = phi_prev;
        bracketed = true;
        break;
      }
      alpha_prev = alpha;
      phi_prev = phi;
      dphi_prev = dphi;
      alpha *= 2.0;
    }
    if (bracketed) {
      for (int z = 0; z < opt.max_line_search && accepted < 0.0; ++z) {
        // Quadratic interpolation through (lo, phi_lo, dphi_lo) and
        // (hi, phi_hi), safeguarded to the middle 80% of the bracket. On
        // stiff problems the minimizer can sit orders of magnitude below
        // hi, and interpolation reaches it in a few steps where bisection
        // needs tens.
        double a = 0.5 * (lo + hi);
        const double span = hi - lo;
        if (std::isfinite(phi_hi)) {
          const double den = 2.0 * (phi_hi - phi_lo - dphi_lo * span);
          if (den > 0.0) {
            const double cand = lo - dphi_lo * span * span / den;
            const double lb = std::min(lo, hi) + 0.1 * std::abs(span);
            const double ub = std::max(lo, hi) - 0.1 * std::abs(span);
            if (cand >= lb && cand <= ub) a = cand;
          }
        }
        const double phi = eval(a);
        double dphi = std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(phi)) dphi = g_trial.dot(p);
        if (!std::isfinite(phi) || phi > phi0 + kC1 * a * dphi0 || phi >= phi_lo) {
          hi = a;
          phi_hi = phi;
        } else {
          if (std::abs(dphi) <= -kC2 * dphi0) {
            accepted = a;
            phi_acc = phi;
            break;
          }
          if (dphi * (hi - lo) >= 0.0) {
            hi = lo;
            phi_hi = phi_lo;
          }
          lo = a;
          phi_lo = phi;
          dphi_lo = dphi;
        }
        if (std::abs(hi - lo) < 1e-16) break;
      }
      // Fall back to the sufficient-decrease point even without curvature.
      if (accepted < 0.0 && lo > 0.0 && phi_lo < phi0) {
        accepted = lo;
        phi_acc = eval(lo);
      }
    }
    if (accepted <= 0.0) break;  // line search failed: give up at current x

    // Every accept path above ends with eval(accepted), so x_trial and
    // g_trial already describe the accepted point.
    Eigen::VectorXd s = x_trial - x;
    Eigen::VectorXd y = g_trial - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double decrease = f - phi_acc;
    x.swap(x_trial);
    g.swap(g_trial);
    f = phi_acc;
    res.iterations = it + 1;  // completed steps, not loop entries
    step_sum += accepted;
    if (decrease < opt.f_tolerance * std::max(1.0, std::abs(f))) {
      if (++stagnant >= 5) break;
    } else {
      stagnant = 0;
    }
  }

  res.x = std::move(x);
  res.f = f;
  if (res.iterations > 0) res.mean_step = step_sum / res.iterations;
  return res;
}

}  // namespace gaitforge::internal
