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

#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "risopt/core.hpp"
#include "risopt/rng.hpp"
#include "risopt/scenario.hpp"

namespace risopt {

/// Surface configuration. `amp` holds the power gains a_m; amplitudes are sqrt(a_m).
struct RisState {
  CVec phi_r;
  CVec phi_t;
  RVec amp;
  RVec varsigma;

  int M() const { return static_cast<int>(amp.size()); }

  /// Per-element amplitude seen by a side: ς_m for reflection, sqrt(1-ς_m²) for transmission.
  RVec side_amplitude(Side s) const {
    if (s == Side::Reflect) return varsigma;
    return varsigma.unaryExpr([](double v) { return std::sqrt(std::max(0.0, 1.0 - v * v)); });
  }
  const CVec& phase(Side s) const { return s == Side::Reflect ? phi_r : phi_t; }
  CVec& phase(Side s) { return s == Side::Reflect ? phi_r : phi_t; }
};

/// Precoders w_k stored as the columns of an N x K matrix.
struct BeamformerSet {
  CMat W;

  int K() const { return static_cast<int>(W.cols()); }
  auto w(int k) const { return W.col(k); }
};

/// Slack = budget - achieved (SINR: achieved - target); nonnegative means satisfied.
struct ConstraintReport {
  double bs_power_slack = 0.0;
  double ris_power_slack = 0.0;
  std::vector<double> per_element_slack;
  double unit_modulus_residual = 0.0;
  double varsigma_range_violation = 0.0;
  std::vector<double> sinr_slack;

  double min_element_slack() const {
    return per_element_slack.empty()
               ? 0.0
               : *std::min_element(per_element_slack.begin(), per_element_slack.end());
  }
};

inline void apply_mode(RisState& ris, Mode mode) {
  const auto M = ris.varsigma.size();
  if (mode == Mode::EP) {
    ris.varsigma.setConstant(1.0 / std::sqrt(2.0));
  } else if (mode == Mode::SD) {
    const auto n_reflect = (M + 1) / 2;
    for (Eigen::Index m = 0; m < M; ++m) ris.varsigma(m) = m < n_reflect ? 1.0 : 0.0;
  }
}

/// Element-wise cascade weights sqrt(a_m) * e_m * conj(φ_m) for the given side,
/// so that h̃_k = h_d,k + G^H (weights ⊙ h_r,k).
inline CVec cascade_weights(const RisState& ris, Side s) {
  const RVec e = ris.side_amplitude(s);
  const CVec& phi = ris.phase(s);
  CVec out(ris.M());
  for (int m = 0; m < ris.M(); ++m)
    out(m) = std::sqrt(std::max(0.0, ris.amp(m))) * e(m) * std::conj(phi(m));
  return out;
}

/// Equivalent BS -> user k channel (h̃_k or t̃_k depending on the user's side).
inline CVec equivalent_channel(const Scenario& sc, const RisState& ris, int k) {
  const CVec wts = cascade_weights(ris, sc.side[k]);
  return sc.h_d[k] + sc.G.adjoint() * wts.cwiseProduct(sc.h_r[k]);
}

/// All equivalent channels as columns of an N x K matrix.
inline CMat equivalent_channels(const Scenario& sc, const RisState& ris) {
  const CVec wr = cascade_weights(ris, Side::Reflect);
  const CVec wt = cascade_weights(ris, Side::Transmit);
  CMat Hc(sc.M(), sc.K());
  for (int k = 0; k < sc.K(); ++k)
    Hc.col(k) = (sc.side[k] == Side::Reflect ? wr : wt).cwiseProduct(sc.h_r[k]);
  CMat H = sc.G.adjoint() * Hc;
  for (int k = 0; k < sc.K(); ++k) H.col(k) += sc.h_d[k];
  return H;
}

/// σ_v² ‖h_r,k^H E A‖² — amplified surface noise reaching user k.
inline double ris_noise(const Scenario& sc, const RisState& ris, int k) {
  const RVec e = ris.side_amplitude(sc.side[k]);
  double acc = 0.0;
  for (int m = 0; m < sc.M(); ++m) acc += std::norm(sc.h_r[k](m)) * e(m) * e(m) * ris.amp(m);
  return sc.noise_ris() * acc;
}

/// Interference + noise denominator of SINR_k (excludes the desired term).
inline double interference_plus_noise(const Scenario& sc, const RisState& ris, const CMat& H,
                                      const BeamformerSet& bf, int k) {
  double acc = ris_noise(sc, ris, k) + sc.noise_user();
  const CVec hk = H.col(k);
  for (int j = 0; j < bf.K(); ++j)
    if (j != k) acc += std::norm(hk.dot(bf.W.col(j)));
  return acc;
}

inline std::vector<double> sinrs(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  const CMat H = equivalent_channels(sc, ris);
  std::vector<double> out(sc.K());
  for (int k = 0; k < sc.K(); ++k)
    out[k] = std::norm(H.col(k).dot(bf.W.col(k))) / interference_plus_noise(sc, ris, H, bf, k);
  return out;
}

inline double sinr(const Scenario& sc, const RisState& ris, const BeamformerSet& bf, int k) {
  const CMat H = equivalent_channels(sc, ris);
  return std::norm(H.col(k).dot(bf.W.col(k))) / interference_plus_noise(sc, ris, H, bf, k);
}

/// Σ_k log2(1 + SINR_k), bits/s/Hz.
inline double sum_rate(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  double r = 0.0;
  for (double s : sinrs(sc, ris, bf)) r += std::log2(1.0 + s);
  return r;
}

inline double bs_power(const BeamformerSet& bf) { return bf.W.squaredNorm(); }

/// Σ_k |g_m^H w_k|² for every element m (incident signal power per element).
inline RVec incident_power(const Scenario& sc, const BeamformerSet& bf) {
  return (sc.G * bf.W).rowwise().squaredNorm();
}

inline double element_power(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                            int m) {
  const double incident = (sc.G.row(m) * bf.W).squaredNorm();
  return ris.amp(m) * (incident + sc.noise_ris());
}

/// Σ_k ‖A G w_k‖² + σ_v² ‖A‖_F².
inline double ris_power(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  const RVec inc = incident_power(sc, bf);
  return ris.amp.dot(inc) + sc.noise_ris() * ris.amp.sum();
}

/// Σ_k ‖A G w_k‖² only (the amplified-signal part used by the power objectives).
inline double ris_signal_power(const Scenario& sc, const RisState& ris, const BeamformerSet& bf) {
  return ris.amp.dot(incident_power(sc, bf));
}

/// Per-element gain ceilings c_m = p_max / (Σ_k |g_m^H w_k|² + σ_v²).
inline RVec element_gain_caps(const Scenario& sc, const BeamformerSet& bf) {
  const RVec inc = incident_power(sc, bf);
  const double pmax = sc.config.budget_element();
  return inc.unaryExpr([&](double v) { return pmax / (v + sc.noise_ris()); });
}

inline ConstraintReport check_constraints(const Scenario& sc, const RisState& ris,
                                          const BeamformerSet& bf,
                                          const std::vector<double>& targets) {
  ConstraintReport rep;
  rep.bs_power_slack = sc.config.budget_bs - bs_power(bf);
  rep.ris_power_slack = sc.config.budget_ris - ris_power(sc, ris, bf);
  const RVec inc = incident_power(sc, bf);
  const double pmax = sc.config.budget_element();
  rep.per_element_slack.resize(sc.M());
  for (int m = 0; m < sc.M(); ++m)
    rep.per_element_slack[m] = pmax - ris.amp(m) * (inc(m) + sc.noise_ris());
  double um = 0.0;
  for (int m = 0; m < sc.M(); ++m) {
    um = std::max(um, std::abs(std::abs(ris.phi_r(m)) - 1.0));
    um = std::max(um, std::abs(std::abs(ris.phi_t(m)) - 1.0));
  }
  rep.unit_modulus_residual = um;
  double vr = 0.0;
  for (int m = 0; m < sc.M(); ++m) {
    vr = std::max(vr, -ris.varsigma(m));
    vr = std::max(vr, ris.varsigma(m) - 1.0);
  }
  rep.varsigma_range_violation = vr;
  const auto s = sinrs(sc, ris, bf);
  rep.sinr_slack.resize(sc.K());
  for (int k = 0; k < sc.K(); ++k)
    rep.sinr_slack[k] = s[k] - (k < static_cast<int>(targets.size()) ? targets[k] : 0.0);
  return rep;
}

/// MMSE directions (Σ_j h̃_j h̃_j^H + σ̃_k² I)^{-1} h̃_k, scaled so Σ‖w_k‖² = power.
inline BeamformerSet mmse_beamformers(const Scenario& sc, const RisState& ris, double power) {
  const CMat H = equivalent_channels(sc, ris);
  const int N = sc.N();
  const CMat R = H * H.adjoint();
  BeamformerSet bf;
  bf.W.resize(N, sc.K());
  for (int k = 0; k < sc.K(); ++k) {
    const double noise = ris_noise(sc, ris, k) + sc.noise_user();
    CMat Rk = R;
    Rk.diagonal().array() += noise;
    bf.W.col(k) = Rk.ldlt().solve(H.col(k));
  }
  const double norm2 = bf.W.squaredNorm();
  if (!(norm2 > 0.0) || !std::isfinite(norm2))
    throw NumericalError("mmse_beamformers: degenerate channel, zero precoder");
  bf.W *= std::sqrt(power / norm2);
  return bf;
}

/// Uniform gain a_max² = P_R / (Σ‖G w_k‖² + σ_v² M), clipped element-wise to c_m.
inline RVec uniform_gain(const Scenario& sc, const BeamformerSet& bf, double budget_ris) {
  const RVec inc = incident_power(sc, bf);
  const double a_max2 = budget_ris / (inc.sum() + sc.noise_ris() * sc.M());
  return element_gain_caps(sc, bf).cwiseMin(a_max2);
}

/// Initial point: ς = 1/√2, random phases, A from the a_max rule, MMSE beamformers
/// at full BS power. EP/SD modes fix ς before the MMSE step. `bs_power_override`
/// replaces P_T (used by the feasible-start search).
inline std::pair<RisState, BeamformerSet> init_state(const Scenario& sc, Mode mode = Mode::OP,
                                                     double bs_power_override = -1.0) {
  const int M = sc.M();
  const double pt = bs_power_override > 0.0 ? bs_power_override : sc.config.budget_bs;
  RisState ris;
  ris.varsigma = RVec::Constant(M, 1.0 / std::sqrt(2.0));
  ris.phi_r.resize(M);
  ris.phi_t.resize(M);
  StreamRng rng(sc.config.rng_seed, stream::kInitPhases);
  for (int m = 0; m < M; ++m) ris.phi_r(m) = rng.unit_phase();
  for (int m = 0; m < M; ++m) ris.phi_t(m) = rng.unit_phase();
  apply_mode(ris, mode);

  // A depends on W and the MMSE W depends on A: seed A from direct-link MMSE
  // precoders, then recompute both once.
  ris.amp = RVec::Zero(M);
  BeamformerSet bf = mmse_beamformers(sc, ris, pt);
  ris.amp = uniform_gain(sc, bf, sc.config.budget_ris);
  bf = mmse_beamformers(sc, ris, pt);
  ris.amp = uniform_gain(sc, bf, sc.config.budget_ris);
  return {std::move(ris), std::move(bf)};
}

}  // namespace risopt
