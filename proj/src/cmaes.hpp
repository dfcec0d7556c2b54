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

// Internal covariance-matrix-adaptation evolution strategy. Standard
// (mu/mu_w, lambda) update equations, driven by the project RNG so results
// are reproducible across platforms.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gaitforge/common.hpp"

namespace gaitforge::internal {

struct CmaesOptions {
  int population = 16;  // lambda
  int max_generations = 250;
  double sigma0 = 1.0;
  std::uint64_t seed = 1;
};

struct CmaesResult {
  Eigen::VectorXd best_x;
  double best_f = std::numeric_limits<double>::infinity();
  int generations = 0;
};

// Minimizes f over R^n starting from mean m0. `should_stop(gen, best_f,
// best_x)` is consulted once per generation; return true to stop early.
template <typename F>
CmaesResult cmaes_minimize(
    F&& f, Eigen::VectorXd m0, const CmaesOptions& opt,
    const std::function<bool(int, double, const Eigen::VectorXd&)>& should_stop = {}) {
  const int n = static_cast<int>(m0.size());
  const int lambda = opt.population;
  if (lambda < 4) throw PreconditionViolation("CMA-ES population must be at least 4");
  const int mu = lambda / 2;

  // Selection weights and effective mass.
  Eigen::VectorXd w(mu);
  for (int i = 0; i < mu; ++i) w[i] = std::log(mu + 0.5) - std::log(i + 1.0);
  w /= w.sum();
  const double mu_eff = 1.0 / w.squaredNorm();

  // Adaptation constants (standard defaults).
  const double c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
  const double d_sigma =
      1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma;
  const double c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
  const double c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
  const double c_mu = std::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) /
                                              ((n + 2.0) * (n + 2.0) + mu_eff));
  const double chi_n = std::sqrt(double(n)) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

  Eigen::VectorXd mean = std::move(m0);
  double sigma = opt.sigma0;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd p_sigma = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd p_c = Eigen::VectorXd::Zero(n);

  Rng rng(opt.seed);
  CmaesResult res;
  res.best_x = mean;

  std::vector<Eigen::VectorXd> ys(lambda), xs(lambda);
  std::vector<double> fs(lambda);
  std::vector<int> order(lambda);

  for (int gen = 0; gen < opt.max_generations; ++gen) {
    res.generations = gen + 1;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::MatrixXd& basis = eig.eigenvectors();
    // Covariance can lose positive definiteness to roundoff; clamp.
    const Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(1e-20).cwiseSqrt();

    for (int i = 0; i < lambda; ++i) {
      Eigen::VectorXd z(n);
      for (int d = 0; d < n; ++d) z[d] = rng.normal();
      ys[i] = basis * scale.asDiagonal() * z;
      xs[i] = mean + sigma * ys[i];
      fs[i] = f(xs[i]);
      if (!std::isfinite(fs[i])) fs[i] = std::numeric_limits<double>::infinity();
    }

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fs[a] < fs[b]; });
    if (fs[order[0]] < res.best_f) {
      res.best_f = fs[order[0]];
      res.best_x = xs[order[0]];
    }

    Eigen::VectorXd y_w = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < mu; ++i) y_w += w[i] * ys[order[i]];
    mean += sigma * y_w;

    // C^{-1/2} y_w via the eigendecomposition already in hand.
    const Eigen::VectorXd c_inv_half_yw =
        basis * scale.cwiseInverse().asDiagonal() * (basis.transpose() * y_w);
    p_sigma = (1.0 - c_sigma) * p_sigma +
              std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) * c_inv_half_yw;
    const double ps_norm = p_sigma.norm();
    const bool h_sigma =
        ps_norm / std::sqrt(1.0 - std::pow(1.0 - c_sigma, 2.0 * (gen + 1))) <
        (1.4 + 2.0 / (n + 1.0)) * chi_n;
    p_c = (1.0 - c_c) * p_c;
    if (h_sigma) p_c += std::sqrt(c_c * (2.0 - c_c) * mu_eff) * y_w;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < mu; ++i) rank_mu += w[i] * ys[order[i]] * ys[order[i]].transpose();
    const double c1a = c_1 * (1.0 - (h_sigma ? 0.0 : 1.0) * c_c * (2.0 - c_c));
    cov = (1.0 - c1a - c_mu) * cov + c_1 * (p_c * p_c.transpose()) + c_mu * rank_mu;

    sigma *= std::exp((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0));
    if (!std::isfinite(sigma) || sigma > 1e6) sigma = 1e6;

    if (should_stop && should_stop(gen, res.best_f, res.best_x)) break;
  }
  return res;
}

}  // namespace gaitforge::internal
