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

// Brute-force reference solvers. Nothing here shares code with the library.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "risopt/convex.hpp"
#include "risopt/rng.hpp"

namespace risopt::testkit {

struct GridResult {
  RVec x;
  double value = std::numeric_limits<double>::infinity();
  bool found = false;
};

/// Minimizes f over {x : feasible(x)} inside the box center ± half_width by a
/// uniform grid, then zooms around the incumbent until the step drops below
/// `final_step`. Only meaningful for convex problems.
inline GridResult grid_minimize(int n, const std::function<double(const RVec&)>& f,
                                const std::function<bool(const RVec&)>& feasible,
                                RVec center, double half_width, int points_per_dim,
                                double final_step, double window = 5.0) {
  GridResult best;
  auto scan = [&](const RVec& lo, double step, int pts) {
    std::vector<int> idx(n, 0);
    RVec x(n);
    for (;;) {
      for (int i = 0; i < n; ++i) x(i) = lo(i) + step * idx[i];
      if (feasible(x)) {
        const double v = f(x);
        if (v < best.value) {
          best.value = v;
          best.x = x;
          best.found = true;
        }
      }
      int d = 0;
      while (d < n && ++idx[d] == pts) idx[d++] = 0;
      if (d == n) break;
    }
  };
  double step = 2.0 * half_width / (points_per_dim - 1);
  scan(RVec(center.array() - half_width), step, points_per_dim);
  while (best.found && step > final_step) {
    // zoom: ±window old steps around the incumbent, 10x finer; re-center while
    // the incumbent sits on the window edge
    const double hw = window * step;
    step /= 10.0;
    const int pts = static_cast<int>(std::lround(2.0 * hw / step)) + 1;
    for (int rep = 0; rep < 100; ++rep) {
      const RVec c = best.x;
      scan(RVec(c.array() - hw), step, pts);
      if (((best.x - c).cwiseAbs().array() < hw - 0.5 * step).all()) break;
    }
  }
  return best;
}

/// Grid oracle for a real QCQP with quadratic constraints.
inline GridResult grid_qcqp(const RealQcqp& p, double radius, int points_per_dim, double final_step,
                            double window = 5.0) {
  auto f = [&](const RVec& z) { return 0.5 * z.dot(p.P * z) - p.q.dot(z) + p.constant; };
  auto feas = [&](const RVec& z) {
    for (const auto& c : p.quad) {
      double v = -c.l.dot(z) - c.b;
      if (c.C.size()) v += 0.5 * z.dot(c.C * z);
      if (v > 0.0) return false;
    }
    return true;
  };
  return grid_minimize(p.n, f, feas, RVec::Zero(p.n), radius, points_per_dim, final_step, window);
}

/// Random symmetric PSD matrix B B^T / n with entries O(1).
inline RMat random_psd(int n, StreamRng& rng, int rank = -1) {
  const int r = rank < 0 ? n : rank;
  RMat B(n, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < n; ++i) B(i, j) = rng.normal();
  return B * B.transpose() / std::max(1, r);
}

inline RVec random_rvec(int n, StreamRng& rng) {
  RVec v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

/// Convex QCQP with P positive definite, constraints ½z'Cz - l'z <= b with b > 0
/// (so z = 0 is strictly feasible).
inline RealQcqp random_real_qcqp(int n, int m, StreamRng& rng) {
  RealQcqp p;
  p.n = n;
  p.P = random_psd(n, rng) + 0.2 * RMat::Identity(n, n);
  p.q = 2.0 * random_rvec(n, rng);
  for (int i = 0; i < m; ++i) {
    QuadConstraint c;
    c.C = random_psd(n, rng);
    c.l = 0.5 * random_rvec(n, rng);
    c.b = 0.2 + rng.uniform();
    p.quad.push_back(std::move(c));
  }
  return p;
}

/// Bounding radius of the sublevel set {f <= f(0)} for ½z'Pz - q'z.
inline double sublevel_radius(const RMat& P, const RVec& q) {
  Eigen::SelfAdjointEigenSolver<RMat> es(P);
  return 2.0 * q.norm() / es.eigenvalues().minCoeff();
}

/// Exhaustive search over both phases of an M = 2 circle problem at the given
/// resolution; returns min φ^H B φ - 2Re{φ^H c}.
inline double grid_two_phases(const CMat& B, const CVec& c, double resolution) {
  const int n = static_cast<int>(std::ceil(2.0 * kPi / resolution));
  std::vector<cplx> e(n);
  for (int i = 0; i < n; ++i) e[i] = std::polar(1.0, i * resolution);
  const double b00 = B(0, 0).real(), b11 = B(1, 1).real();
  const cplx b01 = B(0, 1);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const cplx p0 = e[i];
    const double base = b00 - 2.0 * (std::conj(p0) * c(0)).real();
    const cplx cross = std::conj(p0) * b01;  // φ0* B01 φ1
    for (int j = 0; j < n; ++j) {
      const cplx p1 = e[j];
      const double v = base + b11 + 2.0 * (cross * p1).real() - 2.0 * (std::conj(p1) * c(1)).real();
      best = std::min(best, v);
    }
  }
  return best;
}

/// Scalar grid on [0, 1] with the given step (endpoints included).
inline double grid_interval_max(const std::function<double(double)>& f, double step, double* argmax = nullptr) {
  const int n = static_cast<int>(std::lround(1.0 / step));
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double x = std::min(1.0, i * step);
    const double v = f(x);
    if (v > best) {
      best = v;
      if (argmax) *argmax = x;
    }
  }
  return best;
}

}  // namespace risopt::testkit
