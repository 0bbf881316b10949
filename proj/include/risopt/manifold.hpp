// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// Riemannian gradient descent on the product of M complex circles.
//
// Gradients follow the convention ∇f = 2 ∂f/∂φ*, so that for a small step δ
// f(φ + δ) ≈ f(φ) + Re{∇f^H δ}.

#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "risopt/core.hpp"

namespace risopt {

struct CirclePoint {
  CVec phi;
};

struct ManifoldParams {
  int max_iter = 500;
  double rel_tol = 1e-8;
  double shrink = 0.5;
  double armijo = 1e-4;
  /// Initial step; <= 0 selects the default (1/(2‖B‖_F) for quadratics, 1 otherwise).
  double beta0 = 0.0;
  int max_backtracks = 60;

  void validate() const {
    if (max_iter < 1) throw ConfigError("manifold: max_iter must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("manifold: rel_tol must be > 0");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("manifold: shrink must lie in (0, 1)");
    if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("manifold: armijo must lie in (0, 1)");
  }
};

struct ManifoldTrace {
  std::vector<double> objective;  ///< f at the start and after every accepted step
  int iterations = 0;
  bool converged = false;
  double max_radial = 0.0;         ///< largest |Re{d_m conj(φ_m)}| over all search directions
  double max_modulus_error = 0.0;  ///< largest ||φ_m| - 1| over all iterates
};

struct ManifoldResult {
  CirclePoint point;
  double objective = 0.0;
  ManifoldTrace trace;
};

/// Descent direction -∇f = -2Bφ + 2c of f(φ) = φ^H B φ - 2Re{φ^H c}.
inline CVec euclidean_grad_quadratic(const CMat& B, const CVec& c, const CVec& phi) {
  return -2.0 * (B * phi) + 2.0 * c;
}

inline double quadratic_objective(const CMat& B, const CVec& c, const CVec& phi) {
  return phi.dot(B * phi).real() - 2.0 * phi.dot(c).real();
}

/// g - Re{g ⊙ conj(φ)} ⊙ φ.
inline CVec project_tangent(const CVec& g, const CVec& phi) {
  CVec out(g.size());
  for (Eigen::Index m = 0; m < g.size(); ++m)
    out(m) = g(m) - (g(m) * std::conj(phi(m))).real() * phi(m);
  return out;
}

/// Element-wise normalization; throws on a (numerically) zero entry.
inline CVec retract(const CVec& phi_bar) {
  CVec out(phi_bar.size());
  for (Eigen::Index m = 0; m < phi_bar.size(); ++m) {
    const double r = std::abs(phi_bar(m));
    if (!(r >= 1e-14)) {
      std::ostringstream msg;
      msg << "retract: entry " << m << " has modulus " << r;
      throw NumericalError(msg.str());
    }
    out(m) = phi_bar(m) / r;
  }
  return out;
}

/// Element-wise normalization; entries with |φ̄_m| < 1e-14 keep `previous`.
inline CVec retract(const CVec& phi_bar, const CVec& previous) {
  CVec out(phi_bar.size());
  for (Eigen::Index m = 0; m < phi_bar.size(); ++m) {
    const double r = std::abs(phi_bar(m));
    out(m) = r < 1e-14 ? previous(m) : phi_bar(m) / r;
  }
  return out;
}

/// Minimizes f over |φ_m| = 1. `f(phi)` returns the objective and `grad(phi)` the
/// Euclidean gradient 2∂f/∂φ*. Armijo backtracking along the projected
/// anti-gradient; each trial starts at twice the previously accepted step.
template <typename F, typename G>
ManifoldResult minimize_on_circles(F&& f, G&& grad, const CVec& phi0, const ManifoldParams& params,
                                   double default_beta0 = 1.0) {
  params.validate();
  ManifoldResult res;
  CVec phi = retract(phi0);
  double fval = f(phi);
  if (!std::isfinite(fval)) throw NumericalError("minimize_on_circles: non-finite objective at start");
  res.trace.objective.push_back(fval);
  double beta = params.beta0 > 0.0 ? params.beta0 : default_beta0;
  const double beta_cap = beta * 1e6;

  for (int it = 0; it < params.max_iter; ++it) {
    const CVec g = grad(phi);
    if (!g.allFinite()) {
      std::ostringstream msg;
      msg << "minimize_on_circles: non-finite gradient at iteration " << it << ", f=" << fval;
      throw NumericalError(msg.str());
    }
    const CVec d = project_tangent(-g, phi);
    for (Eigen::Index m = 0; m < d.size(); ++m)
      res.trace.max_radial = std::max(res.trace.max_radial, std::abs((d(m) * std::conj(phi(m))).real()));
    const double d2 = d.squaredNorm();
    if (d2 == 0.0) {
      res.trace.converged = true;
      break;
    }

    double step = std::min(beta * 2.0, beta_cap);
    bool accepted = false;
    CVec trial;
    double ftrial = fval;
    for (int ls = 0; ls < params.max_backtracks; ++ls) {
      trial = retract(phi + step * d, phi);
      ftrial = f(trial);
      if (!std::isnan(ftrial) && ftrial <= fval - params.armijo * step * d2) {
        accepted = true;
        break;
      }
      step *= params.shrink;
    }
    if (accepted) {
      // keep shrinking while that still lowers f; stops the 2x warm start from
      // bouncing across a minimizer
      for (int ls = 0; ls < params.max_backtracks; ++ls) {
        const double s2 = step * params.shrink;
        CVec t2 = retract(phi + s2 * d, phi);
        const double f2 = f(t2);
        if (!(f2 < ftrial)) break;
        step = s2;
        trial = std::move(t2);
        ftrial = f2;
      }
    }
    if (!accepted) {
      // no decrease available at working precision: stationary
      res.trace.converged = true;
      break;
    }
    if (!std::isfinite(ftrial)) {
      std::ostringstream msg;
      msg << "minimize_on_circles: non-finite objective at iteration " << it;
      throw NumericalError(msg.str());
    }
    beta = step;
    for (Eigen::Index m = 0; m < trial.size(); ++m)
      res.trace.max_modulus_error = std::max(res.trace.max_modulus_error, std::abs(std::abs(trial(m)) - 1.0));
    const double change = std::abs(ftrial - fval) / (1.0 + std::abs(ftrial));
    phi = std::move(trial);
    fval = ftrial;
    res.trace.objective.push_back(fval);
    ++res.trace.iterations;
    if (change < params.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.point.phi = std::move(phi);
  res.objective = fval;
  return res;
}

/// Minimizes φ^H B φ - 2Re{φ^H c} on the circle manifold.
inline ManifoldResult minimize_quadratic_on_circles(const CMat& B, const CVec& c, const CVec& phi0,
                                                    const ManifoldParams& params = {}) {
  if (B.rows() != B.cols() || B.rows() != c.size() || c.size() != phi0.size())
    throw ConfigError("minimize_quadratic_on_circles: dimension mismatch");
  const double beta0 = 1.0 / (2.0 * B.norm() + 1e-12 * (1.0 + c.norm()) + 1e-300);
  auto f = [&](const CVec& p) { return quadratic_objective(B, c, p); };
  auto g = [&](const CVec& p) { return CVec(2.0 * (B * p) - 2.0 * c); };
  return minimize_on_circles(f, g, phi0, params, beta0);
}

}  // namespace risopt
