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

// Weighted BS + surface power minimization under per-user SINR targets.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "risopt/convex.hpp"
#include "risopt/manifold.hpp"
#include "risopt/model.hpp"
#include "risopt/sumrate.hpp"
#include "risopt/trace.hpp"

namespace risopt {

struct PowMinParams {
  double alpha = 0.5;
  double epsilon = 1e-3;
  int max_iter = 100;
  double rel_tol = 1e-4;
  double dinkelbach_tol = 1e-6;
  int dinkelbach_max = 20;
  ManifoldParams manifold{};
  /// Golden-section interval for each ς_m.
  double varsigma_interval = 1e-6;
  double varsigma_tol = 1e-6;
  int varsigma_max_sweeps = 50;
  /// Successive restrictions of the amplification problem.
  int sca_max_iter = 5;
  double sca_tol = 1e-9;
  int max_doublings = 30;
  QcqpOptions qcqp{};

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("powmin: alpha must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("powmin: epsilon must be > 0");
    if (max_iter < 1) throw ConfigError("powmin: max_iter must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("powmin: rel_tol must be > 0");
    if (!(dinkelbach_tol > 0.0) || dinkelbach_max < 1)
      throw ConfigError("powmin: Dinkelbach tolerance and refresh cap must be positive");
    if (!(varsigma_interval > 0.0 && varsigma_interval < 1.0))
      throw ConfigError("powmin: varsigma_interval must lie in (0, 1)");
    if (!(varsigma_tol > 0.0) || varsigma_max_sweeps < 1)
      throw ConfigError("powmin: varsigma tolerance and sweep cap must be positive");
    if (sca_max_iter < 1 || !(sca_tol > 0.0)) throw ConfigError("powmin: invalid SCA settings");
    if (max_doublings < 0) throw ConfigError("powmin: max_doublings must be >= 0");
    manifold.validate();
  }
};

/// Ratios of the last Dinkelbach refresh; f_k and g_k are divided by σ².
struct QosBalanceState {
  double varpi_r = 0.0;
  double varpi_t = 0.0;
  double varpi = 0.0;
  std::vector<double> f;
  std::vector<double> g;
};

/// A block subproblem had no feasible point; `report` describes the state it
/// was entered with.
class InfeasibleBlockError : public InfeasibleError {
 public:
  InfeasibleBlockError(const std::string& what, ConstraintReport report)
      : InfeasibleError(what), report(std::move(report)) {}
  ConstraintReport report;
};

/// min_k SINR_k/γ_k over the users with a positive target (+inf if none).
inline double min_sinr_ratio(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                             const std::vector<double>& targets) {
  const auto s = sinrs(sc, ris, bf);
  double r = std::numeric_limits<double>::infinity();
  for (int k = 0; k < sc.K(); ++k)
    if (targets[k] > 0.0) r = std::min(r, s[k] / targets[k]);
  return r;
}

/// p = Σ‖w_k‖² + Σ‖A G w_k‖².
inline double total_power(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  return bs_power(bf) + ris_signal_power(sc, ris, bf);
}

inline double weighted_power(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                             double alpha) {
  return alpha * bs_power(bf) + (1.0 - alpha) * ris_signal_power(sc, ris, bf);
}

namespace detail {

inline void check_targets(const Scenario& sc, const std::vector<double>& targets) {
  if (static_cast<int>(targets.size()) != sc.K())
    throw ConfigError("powmin: need one SINR target per user");
  for (double t : targets)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("powmin: SINR targets must be finite and >= 0");
}

inline bool sinr_satisfied(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                           const std::vector<double>& targets, double rel) {
  const auto s = sinrs(sc, ris, bf);
  for (int k = 0; k < sc.K(); ++k)
    if (s[k] < targets[k] * (1.0 - rel)) return false;
  return true;
}

inline bool elements_within_caps(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                 double rel) {
  const auto rep = check_constraints(sc, ris, bf, {});
  return rep.min_element_slack() >= -rel * sc.config.budget_element();
}

}  // namespace detail

/// Minimizes α‖W‖² + (1-α)Σ‖AGw_k‖² over W subject to the SINR targets (rotated
/// second-order cones) and the per-element limits, at fixed surface state.
inline QcqpProblem beamformer_min_problem(const Scenario& sc, const RisState& ris,
                                          const std::vector<double>& targets, double alpha,
                                          double scale_hint) {
  const int N = sc.N(), K = sc.K(), M = sc.M(), n = N * K;
  const CMat H = equivalent_channels(sc, ris);
  const RVec& a = ris.amp;
  const CMat GA = a.cwiseSqrt().asDiagonal() * sc.G;
  const CMat R = GA.adjoint() * GA;
  CMat P = CMat::Zero(n, n);
  for (int k = 0; k < K; ++k) {
    P.block(k * N, k * N, N, N) = 2.0 * (1.0 - alpha) * R;
    P.block(k * N, k * N, N, N).diagonal().array() += 2.0 * alpha;
  }
  QcqpBuilder b(n);
  b.objective(std::move(P), CVec::Zero(n));

  for (int k = 0; k < K; ++k) {
    if (!(targets[k] > 0.0)) continue;
    // √γ ‖[h̃_k^H w_j]_{j≠k}, √noise‖ <= Re{h̃_k^H w_k}
    const double sg = std::sqrt(targets[k]);
    CMat A = CMat::Zero(K, n);
    CVec off = CVec::Zero(K);
    int row = 0;
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      A.block(row, j * N, 1, N) = sg * H.col(k).adjoint();
      ++row;
    }
    off(row) = sg * std::sqrt(ris_noise(sc, ris, k) + sc.noise_user());
    CVec c = CVec::Zero(n);
    c.segment(k * N, N) = H.col(k);
    b.cone(std::move(A), std::move(off), std::move(c), 0.0);
  }

  const double pmax = sc.config.budget_element();
  for (int m = 0; m < M; ++m) {
    if (a(m) <= 0.0) continue;
    const CVec gm = sc.G.row(m).adjoint();
    const CMat Gm = gm * gm.adjoint();
    CMat Cm = CMat::Zero(n, n);
    for (int k = 0; k < K; ++k) Cm.block(k * N, k * N, N, N) = 2.0 * a(m) * Gm;
    b.quadratic(std::move(Cm), CVec::Zero(n), pmax - a(m) * sc.noise_ris());
  }
  b.scale(RVec::Constant(n, scale_hint));
  return b.build();
}

/// Beamformer block of the power minimization. Throws InfeasibleBlockError when
/// the SINR targets cannot be met at the current surface state.
inline BeamformerSet update_beamformers_min(const Scenario& sc, const RisState& ris,
                                            const BeamformerSet& current,
                                            const std::vector<double>& targets, double alpha,
                                            const QcqpOptions& opt = {}) {
  detail::check_targets(sc, targets);
  const int N = sc.N(), K = sc.K(), n = N * K;
  BeamformerSet out;
  if (std::all_of(targets.begin(), targets.end(), [](double t) { return t == 0.0; })) {
    out.W = CMat::Zero(N, K);
    return out;
  }
  const double pmax = sc.config.budget_element();
  for (int m = 0; m < sc.M(); ++m)
    if (ris.amp(m) * sc.noise_ris() >= pmax)
      throw InfeasibleBlockError("update_beamformers_min: element " + std::to_string(m) +
                                     " exceeds its limit on noise alone",
                                 check_constraints(sc, ris, current, targets));

  // rotate each w_k so that h̃_k^H w_k is real and nonnegative
  BeamformerSet start = current;
  const CMat H = equivalent_channels(sc, ris);
  for (int k = 0; k < K; ++k) {
    const cplx z = H.col(k).dot(start.W.col(k));
    if (std::abs(z) > 0.0) start.W.col(k) *= std::conj(z) / std::abs(z);
  }
  const double norm2 = start.W.squaredNorm();
  const double hint = norm2 > 0.0 ? std::sqrt(norm2 / n) : std::sqrt(sc.config.budget_bs / n);
  const QcqpProblem prob = beamformer_min_problem(sc, ris, targets, alpha, hint);
  QcqpOptions o = opt;
  o.x0 = realify_vector(Eigen::Map<const CVec>(start.W.data(), n));
  const QcqpSolution s = solve_qcqp(prob, o);
  if (s.status == QcqpStatus::Infeasible)
    throw InfeasibleBlockError("update_beamformers_min: " + s.message,
                               check_constraints(sc, ris, current, targets));
  if (!s.x.allFinite()) throw NumericalError("update_beamformers_min: non-finite solution");
  out.W = Eigen::Map<const CMat>(s.x.data(), N, K);
  const bool feasible = detail::sinr_satisfied(sc, ris, out, targets, 1e-9) &&
                        detail::elements_within_caps(sc, ris, out, 1e-10);
  const bool current_ok = detail::sinr_satisfied(sc, ris, current, targets, 1e-9) &&
                          detail::elements_within_caps(sc, ris, current, 1e-10);
  if (!feasible) {
    if (current_ok) return current;
    throw NumericalError("update_beamformers_min: solver returned an infeasible point (" + s.message + ")");
  }
  if (current_ok && weighted_power(sc, ris, current, alpha) < weighted_power(sc, ris, out, alpha))
    return current;
  return out;
}

/// Convex restriction of the amplification block in x = √a: each SINR
/// constraint |u_k(x)| >= √γ_k ‖...‖ is replaced by Re{e^{-jθ_k} u_k(x)} >= √γ_k ‖...‖
/// with θ_k the phase of u_k at `x_ref`.
inline RealQcqp amplification_min_problem(const Scenario& sc, const RisState& ris,
                                          const BeamformerSet& bf, const std::vector<double>& targets,
                                          double alpha, const RVec& x_ref) {
  const int M = sc.M(), K = sc.K();
  const CMat S = sc.G * bf.W;
  const CMat D = detail::direct_products(sc, bf);
  const RVec caps = element_gain_caps(sc, bf);
  const RVec inc = incident_power(sc, bf);

  RealQcqp r;
  r.n = M;
  r.P = (2.0 * (1.0 - alpha) * inc).asDiagonal();
  r.q = RVec::Zero(M);
  for (int k = 0; k < K; ++k) {
    if (!(targets[k] > 0.0)) continue;
    const Side side = sc.side[k];
    const RVec e = ris.side_amplitude(side);
    const CVec& phi = ris.phase(side);
    CVec base(M);
    for (int m = 0; m < M; ++m) base(m) = std::conj(sc.h_r[k](m)) * phi(m) * e(m);
    const double sg = std::sqrt(targets[k]);
    SocConstraint c;
    c.A = RMat::Zero(2 * (K - 1) + M + 1, M);
    c.a = RVec::Zero(2 * (K - 1) + M + 1);
    int row = 0;
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      const CVec v = base.cwiseProduct(S.col(j));
      c.A.row(row) = sg * v.real().transpose();
      c.a(row++) = sg * D(k, j).real();
      c.A.row(row) = sg * v.imag().transpose();
      c.a(row++) = sg * D(k, j).imag();
    }
    for (int m = 0; m < M; ++m)
      c.A(row++, m) = sg * std::sqrt(sc.noise_ris()) * std::abs(sc.h_r[k](m)) * e(m);
    c.a(row) = sg * std::sqrt(sc.noise_user());
    const CVec v = base.cwiseProduct(S.col(k));
    const cplx u = D(k, k) + v.dot(x_ref.cast<cplx>().conjugate());  // v^T x
    const cplx rot = std::abs(u) > 0.0 ? std::conj(u) / std::abs(u) : cplx(1.0, 0.0);
    c.c = (rot * v).real();
    c.d = (rot * D(k, k)).real();
    r.soc.push_back(std::move(c));
  }
  for (int m = 0; m < M; ++m) {
    QuadConstraint upper;
    upper.l = -RVec::Unit(M, m);
    upper.b = std::sqrt(caps(m) * (1.0 - 1e-7));
    r.quad.push_back(std::move(upper));
    QuadConstraint lower;
    lower.l = RVec::Unit(M, m);
    lower.b = 0.0;
    r.quad.push_back(std::move(lower));
  }
  r.scale = caps.cwiseSqrt();
  return r;
}

/// Amplification block of the power minimization. Keeps the previous gains when
/// the restricted problem has no strictly feasible point or does not improve.
inline RVec update_amplification_min(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                     const std::vector<double>& targets, double alpha,
                                     const PowMinParams& params = {}) {
  detail::check_targets(sc, targets);
  if (std::all_of(targets.begin(), targets.end(), [](double t) { return t == 0.0; }))
    return RVec::Zero(sc.M());
  const RVec caps = element_gain_caps(sc, bf);
  RisState best = ris;
  best.amp = ris.amp.cwiseMin(caps * (1.0 - 1e-7)).cwiseMax(0.0);
  const bool start_ok = detail::sinr_satisfied(sc, best, bf, targets, 1e-9);
  if (!start_ok) best.amp = ris.amp;
  double best_obj = ris_signal_power(sc, best, bf);
  bool best_ok = start_ok;

  RVec x = best.amp.cwiseSqrt();
  for (int it = 0; it < params.sca_max_iter; ++it) {
    const RealQcqp prob = amplification_min_problem(sc, ris, bf, targets, alpha, x);
    QcqpOptions o = params.qcqp;
    o.x0 = x;
    const RealQcqpSolution s = solve_qcqp(prob, o);
    if (s.status == QcqpStatus::Infeasible || !s.z.allFinite()) break;
    RisState cand = ris;
    cand.amp = s.z.cwiseMax(0.0).cwiseAbs2().cwiseMin(caps);
    if (!detail::sinr_satisfied(sc, cand, bf, targets, 1e-9)) break;
    const double obj = ris_signal_power(sc, cand, bf);
    if (best_ok && obj > best_obj) break;
    const double change = std::abs(best_obj - obj) / std::max(std::abs(obj), 1e-300);
    best = cand;
    best_obj = obj;
    best_ok = true;
    x = s.z.cwiseMax(0.0);
    if (change < params.sca_tol) break;
  }
  return best.amp;
}

/// Dinkelbach + log-sum-exp data for one side (or both sides when `side` is empty
/// in the ς problem). Terms are h̃_k^H w_j = d(i, j) + r[i][j]^H φ.
struct QosTerms {
  std::vector<int> users;
  std::vector<std::vector<CVec>> r;
  CMat d;
  RVec gamma;
  RVec noise;  ///< ris_noise + σ², divided by `unit`
  double unit = 1.0;

  int size() const { return static_cast<int>(users.size()); }

  cplx inner(int i, int j, const CVec& phi) const { return d(i, j) + r[i][j].dot(phi); }

  /// f_i, g_i at φ (normalized by `unit`).
  void values(const CVec& phi, RVec& f, RVec& g) const {
    const int n = size(), K = static_cast<int>(d.cols());
    f.resize(n);
    g.resize(n);
    for (int i = 0; i < n; ++i) {
      double interf = 0.0;
      for (int j = 0; j < K; ++j) {
        if (j == users[i]) continue;
        interf += std::norm(inner(i, j, phi));
      }
      f(i) = gamma(i) * (interf / unit + noise(i));
      g(i) = std::norm(inner(i, users[i], phi)) / unit;
    }
  }

  /// max_i f_i/g_i (+inf when some g_i is zero).
  double ratio(const CVec& phi) const {
    RVec f, g;
    values(phi, f, g);
    double v = 0.0;
    for (int i = 0; i < size(); ++i)
      v = std::max(v, g(i) > 0.0 ? f(i) / g(i) : std::numeric_limits<double>::infinity());
    return v;
  }
};

/// ε log Σ exp(z_i/ε), evaluated around the max; `weights` receives the softmax.
inline double log_sum_exp(const RVec& z, double eps, RVec* weights = nullptr) {
  const double zmax = z.maxCoeff();
  const RVec ex = ((z.array() - zmax) / eps).exp().matrix();
  const double s = ex.sum();
  if (weights) *weights = ex / s;
  return zmax + eps * std::log(s);
}

inline QosTerms build_qos_terms(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                const std::vector<double>& targets, Side side) {
  const int M = sc.M(), K = sc.K();
  const CMat S = sc.G * bf.W;
  const CMat D = detail::direct_products(sc, bf);
  const RVec e = ris.side_amplitude(side);
  QosTerms q;
  q.unit = sc.noise_user();
  for (int k = 0; k < K; ++k)
    if (sc.side[k] == side && targets[k] > 0.0) q.users.push_back(k);
  const int n = q.size();
  q.d.resize(n, K);
  q.gamma.resize(n);
  q.noise.resize(n);
  q.r.assign(n, std::vector<CVec>(K));
  for (int i = 0; i < n; ++i) {
    const int k = q.users[i];
    q.gamma(i) = targets[k];
    q.noise(i) = (ris_noise(sc, ris, k) + sc.noise_user()) / q.unit;
    for (int j = 0; j < K; ++j) {
      q.d(i, j) = D(k, j);
      CVec rv(M);
      // r^H φ = Σ_m √a_m e_m conj(h_r,k,m) (G w_j)_m φ_m
      for (int m = 0; m < M; ++m)
        rv(m) = std::conj(std::sqrt(std::max(0.0, ris.amp(m))) * e(m) * std::conj(sc.h_r[k](m)) * S(m, j));
      q.r[i][j] = std::move(rv);
    }
  }
  return q;
}

/// Smoothed Dinkelbach objective ε log Σ exp((f_i - ϖ g_i)/ε).
inline double qos_objective(const QosTerms& q, const CVec& phi, double varpi, double eps) {
  RVec f, g;
  q.values(phi, f, g);
  return log_sum_exp(f - varpi * g, eps);
}

/// Euclidean gradient 2∂/∂φ* of qos_objective.
inline CVec qos_gradient(const QosTerms& q, const CVec& phi, double varpi, double eps) {
  RVec f, g, w;
  q.values(phi, f, g);
  log_sum_exp(f - varpi * g, eps, &w);
  const int K = static_cast<int>(q.d.cols());
  CVec grad = CVec::Zero(phi.size());
  for (int i = 0; i < q.size(); ++i) {
    CVec gi = CVec::Zero(phi.size());
    for (int j = 0; j < K; ++j) {
      const cplx z = q.inner(i, j, phi);
      if (j == q.users[i])
        gi -= varpi * 2.0 * z * q.r[i][j];
      else
        gi += q.gamma(i) * 2.0 * z * q.r[i][j];
    }
    grad += (w(i) / q.unit) * gi;
  }
  return grad;
}

/// Dinkelbach loop on one side; returns the new phases and the last ratio.
inline std::pair<CVec, double> qos_balance_side(const QosTerms& q, const CVec& phi0,
                                               const PowMinParams& params) {
  CVec phi = phi0;
  double varpi = q.ratio(phi);
  if (!std::isfinite(varpi) || q.size() == 0) return {phi, varpi};
  for (int it = 0; it < params.dinkelbach_max; ++it) {
    auto f = [&](const CVec& p) { return qos_objective(q, p, varpi, params.epsilon); };
    auto g = [&](const CVec& p) { return qos_gradient(q, p, varpi, params.epsilon); };
    phi = minimize_on_circles(f, g, phi, params.manifold).point.phi;
    const double next = q.ratio(phi);
    if (!std::isfinite(next)) break;
    const double change = std::abs(next - varpi) / std::max(std::abs(next), 1e-300);
    varpi = next;
    if (change < params.dinkelbach_tol) break;
  }
  return {phi, varpi};
}

/// QoS-balancing phase update. A side whose min SINR ratio would drop keeps its
/// previous phases.
inline std::pair<CVec, CVec> qos_balance_phases(const Scenario& sc, const RisState& ris,
                                                const BeamformerSet& bf,
                                                const std::vector<double>& targets,
                                                const PowMinParams& params = {},
                                                QosBalanceState* state = nullptr) {
  detail::check_targets(sc, targets);
  std::pair<CVec, CVec> out{ris.phi_r, ris.phi_t};
  QosBalanceState st;
  auto side_ratio = [&](const RisState& r, Side s) {
    const auto v = sinrs(sc, r, bf);
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < sc.K(); ++k)
      if (sc.side[k] == s && targets[k] > 0.0) m = std::min(m, v[k] / targets[k]);
    return m;
  };
  for (Side s : {Side::Reflect, Side::Transmit}) {
    const QosTerms q = build_qos_terms(sc, ris, bf, targets, s);
    if (q.size() == 0) continue;
    auto [phi, varpi] = qos_balance_side(q, ris.phase(s), params);
    RisState cand = ris;
    cand.phase(s) = phi;
    const double before = side_ratio(ris, s);
    const double after = side_ratio(cand, s);
    if (after < before * (1.0 - 1e-12)) {
      phi = ris.phase(s);
      varpi = q.ratio(phi);
    }
    (s == Side::Reflect ? out.first : out.second) = phi;
    (s == Side::Reflect ? st.varpi_r : st.varpi_t) = varpi;
  }
  if (state) {
    RisState fin = ris;
    fin.phi_r = out.first;
    fin.phi_t = out.second;
    *state = st;
    RVec f, g;
    for (Side s : {Side::Reflect, Side::Transmit}) {
      const QosTerms q = build_qos_terms(sc, fin, bf, targets, s);
      q.values(fin.phase(s), f, g);
      for (int i = 0; i < q.size(); ++i) {
        state->f.push_back(f(i));
        state->g.push_back(g(i));
      }
    }
    state->varpi = std::max(st.varpi_r, st.varpi_t);
  }
  return out;
}

/// Per-element evaluation of the smoothed max-ratio objective over all users as a
/// function of ς_m, other elements fixed.
class VarsigmaQos {
 public:
  VarsigmaQos(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
              const std::vector<double>& targets)
      : sc_(sc), ris_(ris), S_(sc.G * bf.W), unit_(sc.noise_user()) {
    for (int k = 0; k < sc.K(); ++k)
      if (targets[k] > 0.0) {
        users_.push_back(k);
        gamma_.push_back(targets[k]);
      }
    const CMat H = equivalent_channels(sc, ris);
    Z_ = H.adjoint() * bf.W;  // Z(k, j) = h̃_k^H w_j
    noise_.resize(sc.K());
    for (int k = 0; k < sc.K(); ++k) noise_[k] = ris_noise(sc, ris, k) + sc.noise_user();
  }

  int users() const { return static_cast<int>(users_.size()); }
  const RVec& varsigma() const { return ris_.varsigma; }

  /// f_i, g_i with ς_m replaced by v.
  void values(int m, double v, RVec& f, RVec& g) const {
    const int n = users(), K = sc_.K();
    f.resize(n);
    g.resize(n);
    const double old = ris_.varsigma(m);
    for (int i = 0; i < n; ++i) {
      const int k = users_[i];
      const bool refl = sc_.side[k] == Side::Reflect;
      const double e_old = refl ? old : std::sqrt(std::max(0.0, 1.0 - old * old));
      const double e_new = refl ? v : std::sqrt(std::max(0.0, 1.0 - v * v));
      const cplx t = std::sqrt(std::max(0.0, ris_.amp(m))) * ris_.phase(sc_.side[k])(m) *
                     std::conj(sc_.h_r[k](m));
      const double hr2 = std::norm(sc_.h_r[k](m)) * ris_.amp(m) * sc_.noise_ris();
      double interf = noise_[k] + (e_new * e_new - e_old * e_old) * hr2;
      double desired = 0.0;
      for (int j = 0; j < K; ++j) {
        const cplx z = Z_(k, j) + (e_new - e_old) * t * S_(m, j);
        if (j == k)
          desired = std::norm(z);
        else
          interf += std::norm(z);
      }
      f(i) = gamma_[i] * interf / unit_;
      g(i) = desired / unit_;
    }
  }

  double ratio(int m, double v) const {
    RVec f, g;
    values(m, v, f, g);
    double r = 0.0;
    for (int i = 0; i < users(); ++i)
      r = std::max(r, g(i) > 0.0 ? f(i) / g(i) : std::numeric_limits<double>::infinity());
    return r;
  }

  double objective(int m, double v, double varpi, double eps) const {
    RVec f, g;
    values(m, v, f, g);
    return log_sum_exp(f - varpi * g, eps);
  }

  /// Commits ς_m = v and refreshes the cached inner products.
  void set(int m, double v) {
    const double old = ris_.varsigma(m);
    for (int k = 0; k < sc_.K(); ++k) {
      const bool refl = sc_.side[k] == Side::Reflect;
      const double e_old = refl ? old : std::sqrt(std::max(0.0, 1.0 - old * old));
      const double e_new = refl ? v : std::sqrt(std::max(0.0, 1.0 - v * v));
      const cplx t = std::sqrt(std::max(0.0, ris_.amp(m))) * ris_.phase(sc_.side[k])(m) *
                     std::conj(sc_.h_r[k](m));
      for (int j = 0; j < sc_.K(); ++j) Z_(k, j) += (e_new - e_old) * t * S_(m, j);
      noise_[k] += (e_new * e_new - e_old * e_old) * std::norm(sc_.h_r[k](m)) * ris_.amp(m) * sc_.noise_ris();
    }
    ris_.varsigma(m) = v;
  }

 private:
  const Scenario& sc_;
  RisState ris_;
  CMat S_;
  CMat Z_;
  std::vector<double> noise_;
  std::vector<int> users_;
  std::vector<double> gamma_;
  double unit_;
};

/// Golden-section minimization of a unimodal-or-not scalar function on [lo, hi];
/// returns the best point seen, endpoints included.
template <typename F>
double golden_section(F&& f, double lo, double hi, double interval) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  double best = x1, fbest = f1;
  if (f2 < fbest) {
    best = x2;
    fbest = f2;
  }
  while (b - a > interval) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
      if (f1 < fbest) {
        best = x1;
        fbest = f1;
      }
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
      if (f2 < fbest) {
        best = x2;
        fbest = f2;
      }
    }
  }
  for (double e : {lo, hi}) {
    const double fe = f(e);
    if (fe < fbest) {
      best = e;
      fbest = fe;
    }
  }
  return best;
}

/// Cyclic per-element minimization of the smoothed max-ratio objective over ς
/// with ϖ refreshed at the start of every sweep. Keeps the previous ς if the
/// overall min SINR ratio would drop.
inline RVec update_varsigma_min(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                const std::vector<double>& targets, const PowMinParams& params = {},
                                std::vector<double>* sweep_ratios = nullptr) {
  detail::check_targets(sc, targets);
  VarsigmaQos vq(sc, ris, bf, targets);
  if (vq.users() == 0) return ris.varsigma;
  double varpi = vq.ratio(0, ris.varsigma(0));
  if (!std::isfinite(varpi)) return ris.varsigma;
  for (int sweep = 0; sweep < params.varsigma_max_sweeps; ++sweep) {
    for (int m = 0; m < sc.M(); ++m) {
      auto obj = [&](double v) { return vq.objective(m, v, varpi, params.epsilon); };
      const double cur = vq.varsigma()(m);
      const double v = golden_section(obj, 0.0, 1.0, params.varsigma_interval);
      if (obj(v) < obj(cur)) vq.set(m, v);
    }
    const double next = vq.ratio(0, vq.varsigma()(0));
    if (sweep_ratios) sweep_ratios->push_back(next);
    const double change = std::abs(next - varpi) / std::max(std::abs(next), 1e-300);
    varpi = next;
    if (!std::isfinite(varpi) || change < params.varsigma_tol) break;
  }
  RisState cand = ris;
  cand.varsigma = vq.varsigma();
  if (min_sinr_ratio(sc, cand, bf, targets) < min_sinr_ratio(sc, ris, bf, targets) * (1.0 - 1e-12))
    return ris.varsigma;
  return cand.varsigma;
}

struct FeasibilityReport {
  bool full_rank = false;
  int rank = 0;
  int required = 0;
  RVec singular_values;
};

/// Numerical rank of G^H H_r + H_d (N x K); full rank means rank K.
inline FeasibilityReport feasibility_precheck(const Scenario& sc) {
  const int N = sc.N(), K = sc.K(), M = sc.M();
  CMat Hr(M, K), Hd(N, K);
  for (int k = 0; k < K; ++k) {
    Hr.col(k) = sc.h_r[k];
    Hd.col(k) = sc.h_d[k];
  }
  const CMat E = sc.G.adjoint() * Hr + Hd;
  Eigen::JacobiSVD<CMat> svd(E);
  FeasibilityReport rep;
  rep.singular_values = svd.singularValues();
  rep.required = K;
  const double smax = rep.singular_values.size() ? rep.singular_values(0) : 0.0;
  for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i)
    if (rep.singular_values(i) > 1e-10 * smax) ++rep.rank;
  rep.full_rank = smax > 0.0 && rep.rank == K;
  return rep;
}

/// Alternating W / A / phase / ς updates. The trace objective is p; the
/// α-weighted objective is logged alongside.
inline SolveResult run_power_min(const Scenario& sc, const std::vector<double>& targets,
                                 const PowMinParams& params = {}, Mode mode = Mode::OP) {
  params.validate();
  detail::check_targets(sc, targets);
  Stopwatch total;
  SolveResult res;
  res.trace.problem = Problem::PowerMin;
  res.trace.mode = mode;

  if (std::all_of(targets.begin(), targets.end(), [](double t) { return t == 0.0; })) {
    std::tie(res.ris, res.bf) = init_state(sc, mode);
    res.bf.W.setZero();
    res.ris.amp.setZero();
    TraceRow row;
    row.iteration = 1;
    row.delta = 0.0;
    row.min_sinr_ratio = std::numeric_limits<double>::infinity();
    record_constraints(row, sc, res.ris, res.bf, targets);
    res.trace.rows.push_back(row);
    res.trace.pre_pair_power.push_back(0.0);
    res.trace.pair_power.push_back(0.0);
    res.trace.converged = true;
    res.trace.wall_seconds = total.seconds();
    return res;
  }

  const FeasibilityReport pre = feasibility_precheck(sc);
  if (!pre.full_rank) {
    std::ostringstream msg;
    msg << "run_power_min: cascaded channel has rank " << pre.rank << " < " << pre.required;
    throw InfeasibleError(msg.str());
  }

  // feasible start: raise the initial BS power until the beamformer block is feasible
  bool found = false;
  std::string last_error;
  for (int i = 0; i <= params.max_doublings && !found; ++i) {
    const double pt = sc.config.budget_bs * std::ldexp(1.0, i);
    auto [ris, bf] = init_state(sc, mode, pt);
    try {
      bf = update_beamformers_min(sc, ris, bf, targets, params.alpha, params.qcqp);
      res.ris = std::move(ris);
      res.bf = std::move(bf);
      found = true;
    } catch (const InfeasibleError& e) {
      last_error = e.what();
    }
  }
  if (!found)
    throw InfeasibleError("run_power_min: no feasible start after " + std::to_string(params.max_doublings) +
                          " doublings: " + last_error);

  double p_prev = 0.0;
  for (int t = 1; t <= params.max_iter; ++t) {
    TraceRow row;
    row.iteration = t;
    Stopwatch sw;
    res.trace.pre_pair_power.push_back(total_power(sc, res.ris, res.bf));
    if (t > 1) res.bf = update_beamformers_min(sc, res.ris, res.bf, targets, params.alpha, params.qcqp);
    row.seconds.beamformers = sw.lap();
    res.ris.amp = update_amplification_min(sc, res.ris, res.bf, targets, params.alpha, params);
    row.seconds.amplification = sw.lap();
    res.trace.pair_power.push_back(total_power(sc, res.ris, res.bf));
    std::tie(res.ris.phi_r, res.ris.phi_t) = qos_balance_phases(sc, res.ris, res.bf, targets, params);
    row.seconds.phases = sw.lap();
    if (mode == Mode::OP) res.ris.varsigma = update_varsigma_min(sc, res.ris, res.bf, targets, params);
    row.seconds.varsigma = sw.lap();

    const double p = total_power(sc, res.ris, res.bf);
    if (!std::isfinite(p)) throw NumericalError("run_power_min: non-finite power");
    row.objective = p;
    row.weighted_objective = weighted_power(sc, res.ris, res.bf, params.alpha);
    row.min_sinr_ratio = min_sinr_ratio(sc, res.ris, res.bf, targets);
    row.delta = std::abs(p - p_prev) / std::max(std::abs(p), 1e-300);
    record_constraints(row, sc, res.ris, res.bf, targets);
    res.trace.rows.push_back(row);
    p_prev = p;
    if (row.delta < params.rel_tol) {
      res.trace.converged = true;
      break;
    }
  }
  res.trace.wall_seconds = total.seconds();
  return res;
}

}  // namespace risopt
