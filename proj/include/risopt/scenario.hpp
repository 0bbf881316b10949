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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "risopt/core.hpp"
#include "risopt/rng.hpp"

namespace risopt {

/// Path-loss exponents per link class.
struct PathlossExponents {
  double bs_ris = 2.5;
  double ris_user = 2.0;
  double bs_user_reflect = 3.6;
  double bs_user_transmit = 4.2;
};

/// Problem-instance parameters. All powers in watts, gains linear, distances in meters.
struct ScenarioConfig {
  int n_antennas = 16;
  int n_elements = 128;
  int n_users = 4;
  int n_users_reflect = 2;

  double bs_ris_distance = 80.0;
  double user_radius = 10.0;
  double reference_distance = 1.0;
  double pathloss_ref_gain = 1e-3;
  PathlossExponents exponents{};
  double rician_factor = db_to_linear(3.0);

  double noise_user = dbm_to_watts(-80.0);
  double noise_ris = dbm_to_watts(-80.0);
  double budget_bs = dbm_to_watts(16.0);
  double budget_ris = dbm_to_watts(10.0);
  /// Per-element supply limit; when unset, 2 * budget_ris / n_elements.
  std::optional<double> budget_element_override{};

  /// Linear SINR targets; a single entry applies to every user.
  std::vector<double> sinr_targets{db_to_linear(12.0)};

  Mode mode = Mode::OP;
  std::uint64_t rng_seed = 1;

  double budget_element() const {
    return budget_element_override ? *budget_element_override
                                   : 2.0 * budget_ris / static_cast<double>(n_elements);
  }

  std::vector<double> targets() const {
    if (sinr_targets.size() == 1) return std::vector<double>(n_users, sinr_targets.front());
    return sinr_targets;
  }

  /// Throws ConfigError on the first violated invariant.
  void validate() const {
    if (n_antennas < 1 || n_elements < 1 || n_users < 1)
      throw ConfigError("n_antennas, n_elements and n_users must be >= 1");
    if (n_users_reflect < 0 || n_users_reflect > n_users)
      throw ConfigError("n_users_reflect must lie in [0, n_users]");
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be > 0");
    };
    positive(bs_ris_distance, "bs_ris_distance");
    positive(user_radius, "user_radius");
    positive(reference_distance, "reference_distance");
    positive(pathloss_ref_gain, "pathloss_ref_gain");
    positive(exponents.bs_ris, "pathloss exponent bs_ris");
    positive(exponents.ris_user, "pathloss exponent ris_user");
    positive(exponents.bs_user_reflect, "pathloss exponent bs_user_reflect");
    positive(exponents.bs_user_transmit, "pathloss exponent bs_user_transmit");
    positive(noise_user, "noise_user");
    positive(noise_ris, "noise_ris");
    positive(budget_bs, "budget_bs");
    positive(budget_ris, "budget_ris");
    positive(budget_element(), "budget_element");
    if (!(rician_factor >= 0.0)) throw ConfigError("rician_factor must be >= 0");
    if (user_radius >= bs_ris_distance)
      throw ConfigError("user_radius must be smaller than bs_ris_distance");
    if (budget_ris > budget_element() * n_elements * (1.0 + 1e-12))
      throw ConfigError("budget_ris must not exceed the sum of per-element budgets");
    if (sinr_targets.empty() ||
        (sinr_targets.size() != 1 && static_cast<int>(sinr_targets.size()) != n_users))
      throw ConfigError("sinr_targets must hold 1 or n_users entries");
    for (double g : sinr_targets)
      if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("sinr_targets must be finite and >= 0");
  }
};

/// Immutable problem instance: channels, user partition and the config it came from.
struct Scenario {
  ScenarioConfig config;
  CMat G;                 ///< BS -> surface, M x N
  std::vector<CVec> h_d;  ///< BS -> user k, length N
  std::vector<CVec> h_r;  ///< surface -> user k, length M
  std::vector<Side> side;
  std::vector<int> set_r;
  std::vector<int> set_t;
  std::vector<double> user_angle;  ///< radians, see build_scenario

  int N() const { return static_cast<int>(G.cols()); }
  int M() const { return static_cast<int>(G.rows()); }
  int K() const { return static_cast<int>(h_d.size()); }
  double noise_user() const { return config.noise_user; }
  double noise_ris() const { return config.noise_ris; }
};

/// C0 * (d0 / d)^kappa.
inline double path_loss(double d, double kappa, double c0, double d0 = 1.0) {
  if (!(d > 0.0) || !(d0 > 0.0)) throw ConfigError("path_loss: distances must be positive");
  return c0 * std::pow(d0 / d, kappa);
}

/// Half-wavelength ULA response for a plane wave at `angle` from broadside.
inline CVec ula_steering(int n, double angle) {
  CVec a(n);
  const double s = std::sin(angle);
  for (int i = 0; i < n; ++i) a(i) = std::polar(1.0, kPi * i * s);
  return a;
}

/// sqrt(pl) * [sqrt(α/(α+1)) a_rx a_tx^H + sqrt(1/(α+1)) H_nlos].
inline CMat rician_channel(int rows, int cols, double rician_factor, double pathloss,
                           const CVec& steer_rx, const CVec& steer_tx, StreamRng& rng) {
  if (rows < 1 || cols < 1) throw ConfigError("rician_channel: empty dimensions");
  if (!(rician_factor >= 0.0)) throw ConfigError("rician_channel: rician factor must be >= 0");
  if (!(pathloss > 0.0)) throw ConfigError("rician_channel: pathloss must be > 0");
  if (steer_rx.size() != rows || steer_tx.size() != cols)
    throw ConfigError("rician_channel: steering vector size mismatch");
  const double w_los = std::sqrt(rician_factor / (rician_factor + 1.0));
  const double w_nlos = std::sqrt(1.0 / (rician_factor + 1.0));
  const double amp = std::sqrt(pathloss);
  CMat H(rows, cols);
  // column-major fill order fixes the draw sequence
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      H(r, c) = amp * (w_los * steer_rx(r) * std::conj(steer_tx(c)) + w_nlos * rng.complex_normal());
  return H;
}

inline CVec rayleigh_vector(int n, double pathloss, StreamRng& rng) {
  CVec h(n);
  const double amp = std::sqrt(pathloss);
  for (int i = 0; i < n; ++i) h(i) = amp * rng.complex_normal();
  return h;
}

/// Fills the user partition from config.n_users_reflect (first |K_r| users reflect).
inline void assign_sides(Scenario& s) {
  const int K = s.config.n_users;
  s.side.assign(K, Side::Transmit);
  s.set_r.clear();
  s.set_t.clear();
  for (int k = 0; k < K; ++k) {
    if (k < s.config.n_users_reflect) {
      s.side[k] = Side::Reflect;
      s.set_r.push_back(k);
    } else {
      s.set_t.push_back(k);
    }
  }
}

/// Generates an instance. BS at the origin, surface at (d, 0), surface and BS
/// arrays along the y axis. User k sits at (d - r sin θ, r cos θ) with θ uniform
/// on [0, π) for reflect-side users and [π, 2π) for transmit-side users.
inline Scenario build_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Scenario s;
  s.config = cfg;
  const int N = cfg.n_antennas, M = cfg.n_elements, K = cfg.n_users;
  assign_sides(s);

  StreamRng angle_rng(cfg.rng_seed, stream::kUserAngles);
  s.user_angle.resize(K);
  for (int k = 0; k < K; ++k)
    s.user_angle[k] = s.side[k] == Side::Reflect ? angle_rng.uniform(0.0, kPi)
                                                 : angle_rng.uniform(kPi, 2.0 * kPi);

  const double d = cfg.bs_ris_distance;
  // BS broadside points along +x, surface broadside along -x; both see each other at 0 rad.
  const double aod = std::atan2(0.0, d);
  const double aoa = std::atan2(0.0, d);
  StreamRng g_rng(cfg.rng_seed, stream::kBsRis);
  s.G = rician_channel(M, N, cfg.rician_factor,
                       path_loss(d, cfg.exponents.bs_ris, cfg.pathloss_ref_gain, cfg.reference_distance),
                       ula_steering(M, aoa), ula_steering(N, aod), g_rng);

  s.h_d.resize(K);
  s.h_r.resize(K);
  for (int k = 0; k < K; ++k) {
    const double x = d - cfg.user_radius * std::sin(s.user_angle[k]);
    const double y = cfg.user_radius * std::cos(s.user_angle[k]);
    const double dist_bs = std::hypot(x, y);
    const double kappa_d = s.side[k] == Side::Reflect ? cfg.exponents.bs_user_reflect
                                                      : cfg.exponents.bs_user_transmit;
    StreamRng d_rng(cfg.rng_seed, stream::kDirectBase + static_cast<std::uint64_t>(k));
    StreamRng r_rng(cfg.rng_seed, stream::kRisUserBase + static_cast<std::uint64_t>(k));
    s.h_d[k] = rayleigh_vector(
        N, path_loss(dist_bs, kappa_d, cfg.pathloss_ref_gain, cfg.reference_distance), d_rng);
    s.h_r[k] = rayleigh_vector(
        M, path_loss(cfg.user_radius, cfg.exponents.ris_user, cfg.pathloss_ref_gain,
                     cfg.reference_distance),
        r_rng);
  }
  return s;
}

/// Wraps externally supplied channels (replay, hand-built fixtures).
inline Scenario scenario_from_channels(const ScenarioConfig& cfg, CMat G, std::vector<CVec> h_d,
                                       std::vector<CVec> h_r) {
  cfg.validate();
  const int N = cfg.n_antennas, M = cfg.n_elements, K = cfg.n_users;
  if (G.rows() != M || G.cols() != N) throw ConfigError("G must be n_elements x n_antennas");
  if (static_cast<int>(h_d.size()) != K || static_cast<int>(h_r.size()) != K)
    throw ConfigError("need one direct and one surface channel per user");
  for (int k = 0; k < K; ++k)
    if (h_d[k].size() != N || h_r[k].size() != M) throw ConfigError("channel length mismatch");
  Scenario s;
  s.config = cfg;
  s.G = std::move(G);
  s.h_d = std::move(h_d);
  s.h_r = std::move(h_r);
  s.user_angle.assign(K, 0.0);
  assign_sides(s);
  return s;
}

}  // namespace risopt
