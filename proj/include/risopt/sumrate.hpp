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

// Sum-rate maximization by block-coordinate ascent on the fractional-programming
// surrogate h(γ) + g(W, Φ_r, Φ_t, A, ς, γ, τ).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "risopt/convex.hpp"
#include "risopt/manifold.hpp"
#include "risopt/model.hpp"
#include "risopt/trace.hpp"

namespace risopt {

struct AuxState {
  RVec gamma;
  CVec tau;
};

struct SumRateParams {
  int max_iter = 100;
  double rel_tol = 1e-4;
  ManifoldParams manifold{};
  double varsigma_tol = 1e-6;
  int varsigma_max_sweeps = 50;
  double delta = 1e-6;
  QcqpOptions qcqp{};

  void validate() const {
    if (max_iter < 1) throw ConfigError("sumrate: max_iter must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("sumrate: rel_tol must be > 0");
    if (!(varsigma_tol > 0.0) || varsigma_max_sweeps < 1)
      throw ConfigError("sumrate: varsigma tolerance and sweep cap must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("sumrate: delta must lie in (0, 1)");
    manifold.validate();
  }
};

namespace detail {

/// d(k, j) = h_d,k^H w_j.
inline CMat direct_products(const Scenario& sc, const BeamformerSet& bf) {
  CMat D(sc.K(), bf.K());
  for (int k = 0; k < sc.K(); ++k)
    for (int j = 0; j < bf.K(); ++j) D(k, j) = sc.h_d[k].dot(bf.W.col(j));
  return D;
}

/// Σ_j |h̃_k^H w_j|² + σ_v²‖h_r,k^H E A‖² + σ_k² for every k.
inline RVec total_received(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  const CMat H = equivalent_channels(sc, ris);
  const CMat Y = H.adjoint() * bf.W;  // Y(k, j) = h̃_k^H w_j
  RVec out(sc.K());
  for (int k = 0; k < sc.K(); ++k)
    out(k) = Y.row(k).squaredNorm() + ris_noise(sc, ris, k) + sc.noise_user();
  return out;
}

}  // namespace detail

/// Σ_k ln(1+γ_k) - Σ_k γ_k.
inline double surrogate_h(const RVec& gamma) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < gamma.size(); ++k) v += std::log1p(gamma(k)) - gamma(k);
  return v;
}

/// Σ_k log2(1+γ_k) - Σ_k γ_k.
inline double surrogate_h_log2(const RVec& gamma) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < gamma.size(); ++k) v += std::log2(1.0 + gamma(k)) - gamma(k);
  return v;
}

/// g = Σ_k 2√(1+γ_k) Re{τ_k* h̃_k^H w_k} - |τ_k|² (Σ_j |h̃_k^H w_j|² + σ_v²‖h_r,k^H E A‖² + σ_k²).
inline double surrogate_g(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                          const AuxState& aux) {
  const CMat H = equivalent_channels(sc, ris);
  const CMat Y = H.adjoint() * bf.W;
  double g = 0.0;
  for (int k = 0; k < sc.K(); ++k) {
    const double total = Y.row(k).squaredNorm() + ris_noise(sc, ris, k) + sc.noise_user();
    g += 2.0 * std::sqrt(1.0 + aux.gamma(k)) * (std::conj(aux.tau(k)) * Y(k, k)).real() -
         std::norm(aux.tau(k)) * total;
  }
  return g;
}

/// Lagrangian-dual objective f(·, γ) with natural logarithm.
inline double fp_objective(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                           const RVec& gamma) {
  const CMat H = equivalent_channels(sc, ris);
  const CMat Y = H.adjoint() * bf.W;
  double f = surrogate_h(gamma);
  for (int k = 0; k < sc.K(); ++k) {
    const double total = Y.row(k).squaredNorm() + ris_noise(sc, ris, k) + sc.noise_user();
    f += (1.0 + gamma(k)) * std::norm(Y(k, k)) / total;
  }
  return f;
}

inline RVec update_gamma(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  const auto s = sinrs(sc, ris, bf);
  return Eigen::Map<const RVec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

/// τ_k = √(1+γ_k) h̃_k^H w_k / (Σ_j |h̃_k^H w_j|² + σ_v²‖h_r,k^H E A‖² + σ_k²).
inline CVec update_tau(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                       const RVec& gamma) {
  const CMat H = equivalent_channels(sc, ris);
  const CMat Y = H.adjoint() * bf.W;
  CVec tau(sc.K());
  for (int k = 0; k < sc.K(); ++k) {
    const double total = Y.row(k).squaredNorm() + ris_noise(sc, ris, k) + sc.noise_user();
    tau(k) = std::sqrt(1.0 + gamma(k)) * Y(k, k) / total;
  }
  return tau;
}

inline AuxState update_aux(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  AuxState aux;
  aux.gamma = update_gamma(sc, ris, bf);
  aux.tau = update_tau(sc, ris, bf, aux.gamma);
  return aux;
}

/// -g as a problem in vec(W) (column-major, x[k*N + i] = W(i, k)) with the BS,
/// surface and per-element power constraints.
inline QcqpProblem beamformer_problem(const Scenario& sc, const RisState& ris, const AuxState& aux) {
  const int N = sc.N(), K = sc.K(), M = sc.M(), n = N * K;
  const CMat H = equivalent_channels(sc, ris);
  CMat T = CMat::Zero(N, N);
  for (int k = 0; k < K; ++k) T.noalias() += std::norm(aux.tau(k)) * H.col(k) * H.col(k).adjoint();
  CMat P = CMat::Zero(n, n);
  CVec q(n);
  for (int k = 0; k < K; ++k) {
    P.block(k * N, k * N, N, N) = 2.0 * T;
    q.segment(k * N, N) = 2.0 * std::sqrt(1.0 + aux.gamma(k)) * aux.tau(k) * H.col(k);
  }
  double constant = 0.0;
  for (int k = 0; k < K; ++k)
    constant += std::norm(aux.tau(k)) * (ris_noise(sc, ris, k) + sc.noise_user());

  QcqpBuilder b(n);
  b.objective(std::move(P), std::move(q), constant);
  b.quadratic(2.0 * CMat::Identity(n, n), CVec::Zero(n), sc.config.budget_bs);

  const RVec& a = ris.amp;
  const CMat GA = a.cwiseSqrt().asDiagonal() * sc.G;
  const CMat R = GA.adjoint() * GA;  // G^H A² G
  CMat Cr = CMat::Zero(n, n);
  for (int k = 0; k < K; ++k) Cr.block(k * N, k * N, N, N) = 2.0 * R;
  b.quadratic(std::move(Cr), CVec::Zero(n), sc.config.budget_ris - sc.noise_ris() * a.sum());

  const double pmax = sc.config.budget_element();
  for (int m = 0; m < M; ++m) {
    if (a(m) <= 0.0) continue;
    const CVec gm = sc.G.row(m).adjoint();
    const CMat Gm = gm * gm.adjoint();
    CMat Cm = CMat::Zero(n, n);
    for (int k = 0; k < K; ++k) Cm.block(k * N, k * N, N, N) = 2.0 * a(m) * Gm;
    b.quadratic(std::move(Cm), CVec::Zero(n), pmax - a(m) * sc.noise_ris());
  }
  b.scale(RVec::Constant(n, std::sqrt(sc.config.budget_bs / n)));
  return b.build();
}

namespace detail {

inline bool within_power_budgets(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                 double rel) {
  const auto rep = check_constraints(sc, ris, bf, {0.0});
  const double pmax = sc.config.budget_element();
  return rep.bs_power_slack >= -rel * sc.config.budget_bs &&
         rep.ris_power_slack >= -rel * sc.config.budget_ris && rep.min_element_slack() >= -rel * pmax;
}

inline void require_solver_ok(const QcqpSolution& s, const char* where) {
  if (s.status == QcqpStatus::Infeasible)
    throw InfeasibleError(std::string(where) + ": " + s.message);
  if (!s.x.allFinite()) throw NumericalError(std::string(where) + ": non-finite solution");
}

}  // namespace detail

/// Maximizes g over W at fixed aux and surface state. Keeps `current` if the
/// solver cannot improve on it.
inline BeamformerSet update_beamformers(const Scenario& sc, const RisState& ris,
                                        const BeamformerSet& current, const AuxState& aux,
                                        const QcqpOptions& opt = {}) {
  const int N = sc.N(), K = sc.K();
  const QcqpProblem prob = beamformer_problem(sc, ris, aux);
  if (!(prob.constraints[1].b > 0.0) || !(sc.config.budget_bs > 0.0))
    throw InfeasibleError("update_beamformers: W = 0 is not strictly feasible");
  QcqpOptions o = opt;
  o.x0 = RVec::Zero(2 * N * K);
  const QcqpSolution s = solve_qcqp(prob, o);
  detail::require_solver_ok(s, "update_beamformers");
  BeamformerSet out;
  out.W = Eigen::Map<const CMat>(s.x.data(), N, K);
  if (!detail::within_power_budgets(sc, ris, out, 1e-10)) return current;
  const double g_new = surrogate_g(sc, ris, out, aux);
  const double g_old = surrogate_g(sc, ris, current, aux);
  return g_new >= g_old ? out : current;
}

/// -g as a problem in x = √a (real, length M) with the surface power budget and
/// 0 <= x_m <= √c_m.
inline RealQcqp amplification_problem(const Scenario& sc, const RisState& ris,
                                      const BeamformerSet& bf, const AuxState& aux) {
  const int M = sc.M(), K = sc.K();
  const CMat S = sc.G * bf.W;  // S(m, j) = g_m^H w_j
  const CMat D = detail::direct_products(sc, bf);
  const RVec caps = element_gain_caps(sc, bf);
  const RVec inc = incident_power(sc, bf);

  RMat P = RMat::Zero(M, M);
  RVec q = RVec::Zero(M);
  double constant = 0.0;
  for (int k = 0; k < K; ++k) {
    const Side side = sc.side[k];
    const RVec e = ris.side_amplitude(side);
    const CVec& phi = ris.phase(side);
    const double t2 = std::norm(aux.tau(k));
    const double sq = std::sqrt(1.0 + aux.gamma(k));
    CVec base(M);
    for (int m = 0; m < M; ++m) base(m) = std::conj(sc.h_r[k](m)) * phi(m) * e(m);
    for (int j = 0; j < K; ++j) {
      const CVec v = base.cwiseProduct(S.col(j));  // h̃_k^H w_j = d_kj + v^T x
      P.noalias() += 2.0 * t2 * (v.conjugate() * v.transpose()).real();
      q -= 2.0 * t2 * (std::conj(D(k, j)) * v).real();
      constant += t2 * std::norm(D(k, j));
      if (j == k) {
        q += 2.0 * sq * (std::conj(aux.tau(k)) * v).real();
        constant -= 2.0 * sq * (std::conj(aux.tau(k)) * D(k, k)).real();
      }
    }
    for (int m = 0; m < M; ++m)
      P(m, m) += 2.0 * t2 * sc.noise_ris() * std::norm(sc.h_r[k](m)) * e(m) * e(m);
    constant += t2 * sc.noise_user();
  }
  RealQcqp r;
  r.n = M;
  r.P = 0.5 * (P + P.transpose());
  r.q = q;
  r.constant = constant;
  QuadConstraint power;
  power.C = 2.0 * (inc.array() + sc.noise_ris()).matrix().asDiagonal();
  power.l = RVec::Zero(M);
  power.b = sc.config.budget_ris;
  r.quad.push_back(std::move(power));
  for (int m = 0; m < M; ++m) {
    QuadConstraint upper;
    upper.l = -RVec::Unit(M, m);
    upper.b = std::sqrt(caps(m));
    r.quad.push_back(std::move(upper));
    QuadConstraint lower;
    lower.l = RVec::Unit(M, m);
    lower.b = 0.0;
    r.quad.push_back(std::move(lower));
  }
  r.scale = caps.cwiseSqrt();
  return r;
}

/// Strictly feasible start ρ√c_m for the amplification problems.
inline RVec amplification_interior_point(const Scenario& sc, const BeamformerSet& bf) {
  const RVec caps = element_gain_caps(sc, bf);
  const double total = sc.config.budget_element() * sc.M();
  const double rho2 = std::min(0.25, 0.5 * sc.config.budget_ris / total);
  return std::sqrt(rho2) * caps.cwiseSqrt();
}

/// Maximizes g over the gains a at fixed W, phases and ς.
inline RVec update_amplification(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                 const AuxState& aux, const QcqpOptions& opt = {}) {
  const RealQcqp prob = amplification_problem(sc, ris, bf, aux);
  QcqpOptions o = opt;
  o.x0 = amplification_interior_point(sc, bf);
  const RealQcqpSolution s = solve_qcqp(prob, o);
  if (s.status == QcqpStatus::Infeasible) throw InfeasibleError("update_amplification: " + s.message);
  if (!s.z.allFinite()) throw NumericalError("update_amplification: non-finite solution");
  RisState cand = ris;
  cand.amp = s.z.cwiseMax(0.0).cwiseAbs2();
  const RVec caps = element_gain_caps(sc, bf);
  cand.amp = cand.amp.cwiseMin(caps);
  if (!detail::within_power_budgets(sc, cand, bf, 1e-10)) return ris.amp;
  const double g_new = surrogate_g(sc, cand, bf, aux);
  const double g_old = surrogate_g(sc, ris, bf, aux);
  return g_new >= g_old ? cand.amp : ris.amp;
}

/// Minimize φ^H B φ - 2Re{φ^H c} (+ constant) over one side's phases; equals
/// -g + (terms independent of that side's φ).
struct PhaseQuadratic {
  CMat B;
  CVec c;
  double constant = 0.0;  ///< Σ_{k∈side} Σ_j |τ_k|² |h_d,k^H w_j|²
};

inline PhaseQuadratic build_phase_quadratic(const Scenario& sc, const RisState& ris,
                                            const BeamformerSet& bf, const AuxState& aux, Side side) {
  const int M = sc.M(), K = sc.K();
  const CMat S = sc.G * bf.W;
  const CMat D = detail::direct_products(sc, bf);
  const RVec e = ris.side_amplitude(side);
  PhaseQuadratic pq;
  pq.B = CMat::Zero(M, M);
  pq.c = CVec::Zero(M);
  for (int k = 0; k < K; ++k) {
    if (sc.side[k] != side) continue;
    const double t2 = std::norm(aux.tau(k));
    CVec base(M);
    for (int m = 0; m < M; ++m) base(m) = sc.h_r[k](m) * std::sqrt(std::max(0.0, ris.amp(m))) * e(m);
    for (int j = 0; j < K; ++j) {
      const CVec r = base.cwiseProduct(S.col(j).conjugate());  // r_{k,j}
      pq.B.noalias() += t2 * r * r.adjoint();
      pq.c -= t2 * D(k, j) * r;
      pq.constant += t2 * std::norm(D(k, j));
      if (j == k) pq.c += std::sqrt(1.0 + aux.gamma(k)) * aux.tau(k) * r;
    }
  }
  pq.B = 0.5 * (pq.B + pq.B.adjoint());
  return pq;
}

inline PhaseQuadratic build_phase_quadratic_r(const Scenario& sc, const RisState& ris,
                                              const BeamformerSet& bf, const AuxState& aux) {
  return build_phase_quadratic(sc, ris, bf, aux, Side::Reflect);
}

inline PhaseQuadratic build_phase_quadratic_t(const Scenario& sc, const RisState& ris,
                                              const BeamformerSet& bf, const AuxState& aux) {
  return build_phase_quadratic(sc, ris, bf, aux, Side::Transmit);
}

/// Manifold descent on φ_r and φ_t from the current iterate. A side with no users
/// keeps its phases.
inline std::pair<CVec, CVec> update_phases(const Scenario& sc, const RisState& ris,
                                           const BeamformerSet& bf, const AuxState& aux,
                                           const ManifoldParams& params = {}) {
  std::pair<CVec, CVec> out{ris.phi_r, ris.phi_t};
  if (!sc.set_r.empty()) {
    const auto pq = build_phase_quadratic_r(sc, ris, bf, aux);
    out.first = minimize_quadratic_on_circles(pq.B, pq.c, ris.phi_r, params).point.phi;
  }
  if (!sc.set_t.empty()) {
    const auto pq = build_phase_quadratic_t(sc, ris, bf, aux);
    out.second = minimize_quadratic_on_circles(pq.B, pq.c, ris.phi_t, params).point.phi;
  }
  return out;
}

/// Data of the ς subproblem: minimize ς^T Q_r ς - 2Re{ς^T b_r} + s^T Q_t s - 2Re{s^T b_t}
/// with s_m = √(1-ς_m²).
struct VarsigmaQuadratic {
  CMat Qr, Qt;
  CVec br, bt;
};

inline VarsigmaQuadratic build_varsigma_quadratic(const Scenario& sc, const RisState& ris,
                                                  const BeamformerSet& bf, const AuxState& aux) {
  const int M = sc.M(), K = sc.K();
  const CMat S = sc.G * bf.W;
  const CMat D = detail::direct_products(sc, bf);
  VarsigmaQuadratic vq;
  vq.Qr = CMat::Zero(M, M);
  vq.Qt = CMat::Zero(M, M);
  vq.br = CVec::Zero(M);
  vq.bt = CVec::Zero(M);
  for (int k = 0; k < K; ++k) {
    const bool refl = sc.side[k] == Side::Reflect;
    CMat& Q = refl ? vq.Qr : vq.Qt;
    CVec& b = refl ? vq.br : vq.bt;
    const CVec& phi = ris.phase(sc.side[k]);
    const double t2 = std::norm(aux.tau(k));
    CVec base(M);
    for (int m = 0; m < M; ++m)
      base(m) = sc.h_r[k](m) * std::conj(phi(m)) * std::sqrt(std::max(0.0, ris.amp(m)));
    for (int j = 0; j < K; ++j) {
      const CVec u = base.cwiseProduct(S.col(j).conjugate());  // u_{k,j}
      Q.noalias() += t2 * u * u.adjoint();
      b -= t2 * D(k, j) * u;
      if (j == k) b += std::sqrt(1.0 + aux.gamma(k)) * aux.tau(k) * u;
    }
    for (int m = 0; m < M; ++m)
      Q(m, m) += t2 * sc.noise_ris() * std::norm(sc.h_r[k](m)) * ris.amp(m);
  }
  vq.Qr = 0.5 * (vq.Qr + vq.Qr.adjoint());
  vq.Qt = 0.5 * (vq.Qt + vq.Qt.adjoint());
  return vq;
}

inline RVec transmit_amplitudes(const RVec& vs) {
  return vs.unaryExpr([](double v) { return std::sqrt(std::max(0.0, 1.0 - v * v)); });
}

inline double varsigma_objective(const VarsigmaQuadratic& vq, const RVec& vs) {
  const CVec x = vs.cast<cplx>();
  const CVec s = transmit_amplitudes(vs).cast<cplx>();
  return x.dot(vq.Qr * x).real() - 2.0 * x.dot(vq.br).real() + s.dot(vq.Qt * s).real() -
         2.0 * s.dot(vq.bt).real();
}

/// Per-element objective a ς² + r ς + c (1-ς²) + t √(1-ς²).
struct ScalarVarsigma {
  double a = 0.0, c = 0.0, r = 0.0, t = 0.0;

  double value(double v) const {
    const double s = std::sqrt(std::max(0.0, 1.0 - v * v));
    return a * v * v + r * v + c * (1.0 - v * v) + t * s;
  }
  double derivative(double v) const {
    return 2.0 * (a - c) * v + r - t * v / std::sqrt(1.0 - v * v);
  }
};

struct ScalarVarsigmaResult {
  double value = 0.0;
  int case_id = 0;  ///< 1..4 as in the derivative-sign analysis
};

/// Minimizes a ScalarVarsigma over [0, 1]. The four-case rule picks a candidate;
/// interior stationary points on both sides of the inflection and both endpoints
/// are also evaluated and the best one is returned.
inline ScalarVarsigmaResult solve_varsigma_element(const ScalarVarsigma& f, double delta = 1e-6) {
  const double hi = 1.0 - delta;
  const double d0 = f.derivative(0.0);
  const double d1 = f.derivative(hi);
  auto bisect = [&](double lo, double up) {
    double flo = f.derivative(lo);
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + up);
      const double fm = f.derivative(mid);
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        up = mid;
      }
    }
    return 0.5 * (lo + up);
  };

  ScalarVarsigmaResult res;
  if (d0 >= 0.0 && d1 >= 0.0) {
    res = {0.0, 1};
  } else if (d0 < 0.0 && d1 < 0.0) {
    res = {1.0, 2};
  } else if (d0 < 0.0 && d1 > 0.0) {
    res = {bisect(0.0, hi), 3};
  } else {
    res = {f.value(0.0) <= f.value(1.0) ? 0.0 : 1.0, 4};
  }

  // f'' = 2(a-c) - t (1-ς²)^{-3/2} is monotone, so f' has at most two monotone pieces.
  std::vector<double> cands{0.0, 1.0};
  std::vector<std::pair<double, double>> pieces{{0.0, hi}};
  if (f.a != f.c) {
    const double ratio = f.t / (2.0 * (f.a - f.c));
    if (ratio > 0.0 && ratio < 1.0) {
      const double vs = std::sqrt(std::max(0.0, 1.0 - std::pow(ratio, 2.0 / 3.0)));
      if (vs > 0.0 && vs < hi) pieces = {{0.0, vs}, {vs, hi}};
    }
  }
  for (const auto& [lo, up] : pieces) {
    const double dl = f.derivative(lo), du = f.derivative(up);
    if ((dl < 0.0) != (du < 0.0)) cands.push_back(bisect(lo, up));
  }
  double best = f.value(res.value);
  for (double v : cands) {
    const double fv = f.value(v);
    if (fv < best) {
      best = fv;
      res.value = v;
    }
  }
  return res;
}

/// Element-wise cyclic minimization of the ς objective. Returns the
/// new ς and optionally the per-sweep objective values.
inline RVec update_varsigma(const VarsigmaQuadratic& vq, const RVec& start, double delta, double tol,
                            int max_sweeps, std::vector<double>* sweep_values = nullptr) {
  const int M = static_cast<int>(start.size());
  RVec vs = start.cwiseMax(0.0).cwiseMin(1.0);
  RVec st = transmit_amplitudes(vs);
  CVec Qr_v = vq.Qr * vs.cast<cplx>();
  CVec Qt_s = vq.Qt * st.cast<cplx>();
  double obj = varsigma_objective(vq, vs);
  if (sweep_values) sweep_values->push_back(obj);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int m = 0; m < M; ++m) {
      ScalarVarsigma f;
      f.a = vq.Qr(m, m).real();
      f.c = vq.Qt(m, m).real();
      f.r = 2.0 * ((Qr_v(m) - vq.Qr(m, m) * vs(m)) - vq.br(m)).real();
      f.t = 2.0 * ((Qt_s(m) - vq.Qt(m, m) * st(m)) - vq.bt(m)).real();
      const double nv = solve_varsigma_element(f, delta).value;
      const double ns = std::sqrt(std::max(0.0, 1.0 - nv * nv));
      if (nv != vs(m)) {
        Qr_v += vq.Qr.col(m) * (nv - vs(m));
        Qt_s += vq.Qt.col(m) * (ns - st(m));
        vs(m) = nv;
        st(m) = ns;
      }
    }
    const double nobj = varsigma_objective(vq, vs);
    if (sweep_values) sweep_values->push_back(nobj);
    const double change = std::abs(nobj - obj) / std::max(std::abs(nobj), 1e-300);
    obj = nobj;
    if (change < tol) break;
  }
  return vs;
}

inline RVec update_varsigma(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                            const AuxState& aux, const SumRateParams& params = {}) {
  const VarsigmaQuadratic vq = build_varsigma_quadratic(sc, ris, bf, aux);
  return update_varsigma(vq, ris.varsigma, params.delta, params.varsigma_tol,
                         params.varsigma_max_sweeps);
}

struct SolveResult {
  RisState ris;
  BeamformerSet bf;
  SolveTrace trace;
};

/// Block-coordinate ascent on the FP surrogate. `start` overrides the default initialization when given.
inline SolveResult run_sum_rate(const Scenario& sc, const SumRateParams& params, Mode mode,
                                const std::pair<RisState, BeamformerSet>* start = nullptr) {
  params.validate();
  Stopwatch total;
  SolveResult res;
  if (start) {
    res.ris = start->first;
    res.bf = start->second;
    apply_mode(res.ris, mode);
  } else {
    std::tie(res.ris, res.bf) = init_state(sc, mode);
  }
  res.trace.problem = Problem::SumRate;
  res.trace.mode = mode;
  const std::vector<double> no_targets(sc.K(), 0.0);

  double r_prev = 0.0;
  for (int t = 1; t <= params.max_iter; ++t) {
    TraceRow row;
    row.iteration = t;
    Stopwatch sw;
    const AuxState aux = update_aux(sc, res.ris, res.bf);
    row.seconds.aux = sw.lap();
    res.bf = update_beamformers(sc, res.ris, res.bf, aux, params.qcqp);
    row.seconds.beamformers = sw.lap();
    res.ris.amp = update_amplification(sc, res.ris, res.bf, aux, params.qcqp);
    row.seconds.amplification = sw.lap();
    std::tie(res.ris.phi_r, res.ris.phi_t) = update_phases(sc, res.ris, res.bf, aux, params.manifold);
    row.seconds.phases = sw.lap();
    if (mode == Mode::OP) res.ris.varsigma = update_varsigma(sc, res.ris, res.bf, aux, params);
    row.seconds.varsigma = sw.lap();

    row.surrogate = (surrogate_h(aux.gamma) + surrogate_g(sc, res.ris, res.bf, aux)) / kLn2;
    const double r = sum_rate(sc, res.ris, res.bf);
    if (!std::isfinite(r)) throw NumericalError("run_sum_rate: non-finite sum-rate");
    row.objective = r;
    row.delta = std::abs(r - r_prev) / std::max(std::abs(r), 1e-300);
    const auto s = sinrs(sc, res.ris, res.bf);
    row.min_sinr_ratio = *std::min_element(s.begin(), s.end());
    record_constraints(row, sc, res.ris, res.bf, no_targets);
    res.trace.rows.push_back(row);
    r_prev = r;
    if (row.delta < params.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.trace.wall_seconds = total.seconds();
  return res;
}

}  // namespace risopt
