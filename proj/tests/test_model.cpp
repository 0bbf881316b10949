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

#include <gtest/gtest.h>

#include <cmath>

#include "risopt/model.hpp"
#include "test_support.hpp"

using namespace risopt;
using risopt::testkit::rel_diff;

namespace {

Scenario unit_scenario() {
  ScenarioConfig cfg = risopt::testkit::small_config(1, 1, 1, 1, 1);
  return scenario_from_channels(cfg, CMat::Ones(1, 1), {CVec::Ones(1)}, {CVec::Ones(1)});
}

RisState unit_ris(int M, double a) {
  RisState r;
  r.phi_r = CVec::Ones(M);
  r.phi_t = CVec::Ones(M);
  r.amp = RVec::Constant(M, a);
  r.varsigma = RVec::Ones(M);
  return r;
}

// Row vector h_d^H + h_r^H Φ E A G assembled from explicit diagonal matrices.
CVec dense_equivalent(const Scenario& sc, const RisState& ris, int k) {
  const int M = sc.M();
  const Side s = sc.side[k];
  CMat Phi = CMat::Zero(M, M), E = CMat::Zero(M, M), A = CMat::Zero(M, M);
  for (int m = 0; m < M; ++m) {
    Phi(m, m) = ris.phase(s)(m);
    const double v = ris.varsigma(m);
    E(m, m) = s == Side::Reflect ? v : std::sqrt(1.0 - v * v);
    A(m, m) = std::sqrt(ris.amp(m));
  }
  const Eigen::RowVectorXcd row = sc.h_d[k].adjoint() + sc.h_r[k].adjoint() * Phi * E * A * sc.G;
  return row.adjoint();
}

// SINR from the received-signal covariance, keeping Φ in the surface-noise term.
double covariance_sinr(const Scenario& sc, const RisState& ris, const BeamformerSet& bf, int k) {
  const int M = sc.M();
  const Side s = sc.side[k];
  const CVec heq = dense_equivalent(sc, ris, k);
  CMat F = CMat::Zero(M, M);  // Φ E A
  for (int m = 0; m < M; ++m) {
    const double v = ris.varsigma(m);
    const double e = s == Side::Reflect ? v : std::sqrt(1.0 - v * v);
    F(m, m) = ris.phase(s)(m) * e * std::sqrt(ris.amp(m));
  }
  const Eigen::RowVectorXcd hF = sc.h_r[k].adjoint() * F;
  const CMat Rw = bf.W * bf.W.adjoint();  // Σ_j w_j w_j^H
  const double total = (heq.adjoint() * Rw * heq)(0, 0).real() + sc.noise_ris() * hF.squaredNorm() +
                       sc.noise_user();
  const double desired = std::norm(heq.dot(bf.W.col(k)));
  return desired / (total - desired);
}

}  // namespace

TEST(EquivalentChannel, ZeroGainIsDirectLink) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(3));
  StreamRng rng(3, 77);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  ris.amp.setZero();
  for (int k = 0; k < sc.K(); ++k) EXPECT_EQ(equivalent_channel(sc, ris, k), sc.h_d[k]);
}

TEST(EquivalentChannel, ScalarCascade) {
  const Scenario sc = unit_scenario();
  const RisState ris = unit_ris(1, 4.0);
  const CVec h = equivalent_channel(sc, ris, 0);
  EXPECT_NEAR(std::abs(h(0) - cplx(3.0, 0.0)), 0.0, 1e-15);
}

TEST(EquivalentChannel, MatchesDenseProduct) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scenario sc = build_scenario(risopt::testkit::small_config(3, 7, 3, 2, seed));
    StreamRng rng(seed, 5);
    const auto [ris, bf] = risopt::testkit::random_state(sc, rng);
    const CMat H = equivalent_channels(sc, ris);
    for (int k = 0; k < sc.K(); ++k) {
      const CVec ref = dense_equivalent(sc, ris, k);
      EXPECT_LE((equivalent_channel(sc, ris, k) - ref).norm(), 1e-12 * ref.norm());
      EXPECT_LE((H.col(k) - ref).norm(), 1e-12 * ref.norm());
    }
  }
}

TEST(Sinr, SingleUserWithoutSurface) {
  ScenarioConfig cfg = risopt::testkit::small_config(3, 4, 1, 1, 9);
  const Scenario sc = build_scenario(cfg);
  StreamRng rng(9, 1);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  ris.amp.setZero();
  const double expected = std::norm(sc.h_d[0].dot(bf.W.col(0))) / sc.noise_user();
  EXPECT_LE(rel_diff(sinr(sc, ris, bf, 0), expected), 1e-13);
}

TEST(Sinr, ZeroPrecoder) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(4));
  StreamRng rng(4, 1);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  bf.W.col(0).setZero();
  EXPECT_EQ(sinr(sc, ris, bf, 0), 0.0);
}

TEST(Sinr, MatchesSignalCovariance) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Scenario sc = build_scenario(risopt::testkit::small_config(3, 6, 3, 1, seed));
    StreamRng rng(seed, 2);
    const auto [ris, bf] = risopt::testkit::random_state(sc, rng);
    const auto s = sinrs(sc, ris, bf);
    for (int k = 0; k < sc.K(); ++k) {
      EXPECT_LE(rel_diff(s[k], covariance_sinr(sc, ris, bf, k)), 1e-10);
      EXPECT_LE(rel_diff(sinr(sc, ris, bf, k), s[k]), 1e-14);
    }
  }
}

TEST(SumRate, ZeroPrecoders) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(5));
  StreamRng rng(5, 1);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  bf.W.setZero();
  EXPECT_EQ(sum_rate(sc, ris, bf), 0.0);
}

TEST(SumRate, UnitSinrGivesOneBit) {
  // h = 1 scalar, a = 0, noise σ²: pick |w|² = σ² so SINR = 1.
  Scenario sc = unit_scenario();
  RisState ris = unit_ris(1, 0.0);
  BeamformerSet bf;
  bf.W = CMat::Constant(1, 1, std::sqrt(sc.noise_user()));
  EXPECT_NEAR(sum_rate(sc, ris, bf), 1.0, 1e-12);
}

TEST(SumRate, SumOfPerUserRates) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scenario sc = build_scenario(risopt::testkit::small_config(4, 8, 4, 2, seed));
    StreamRng rng(seed, 3);
    const auto [ris, bf] = risopt::testkit::random_state(sc, rng);
    double r = 0.0;
    for (int k = 0; k < sc.K(); ++k) r += std::log2(1.0 + sinr(sc, ris, bf, k));
    EXPECT_LE(rel_diff(sum_rate(sc, ris, bf), r), 1e-12);
  }
}

TEST(Power, ZeroGain) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(6));
  StreamRng rng(6, 1);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  ris.amp.setZero();
  EXPECT_EQ(ris_power(sc, ris, bf), 0.0);
  for (int m = 0; m < sc.M(); ++m) EXPECT_EQ(element_power(sc, ris, bf, m), 0.0);
}

TEST(Power, NoiseAmplificationOnly) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(6));
  StreamRng rng(6, 1);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  bf.W.setZero();
  ris.amp.setOnes();
  EXPECT_LE(rel_diff(ris_power(sc, ris, bf), sc.noise_ris() * sc.M()), 1e-14);
}

TEST(Power, ElementSumIdentity) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scenario sc = build_scenario(risopt::testkit::small_config(4, 12, 3, 1, seed));
    StreamRng rng(seed, 4);
    const auto [ris, bf] = risopt::testkit::random_state(sc, rng);
    double acc = 0.0;
    for (int m = 0; m < sc.M(); ++m) acc += element_power(sc, ris, bf, m);
    EXPECT_LE(rel_diff(acc, ris_power(sc, ris, bf)), 1e-10);
    // Σ_k ‖A G w_k‖² through the dense product
    const CMat AGW = ris.amp.cwiseSqrt().asDiagonal() * sc.G * bf.W;
    EXPECT_LE(rel_diff(ris_signal_power(sc, ris, bf), AGW.squaredNorm()), 1e-12);
    EXPECT_LE(rel_diff(bs_power(bf), bf.W.squaredNorm()), 1e-15);
  }
}

TEST(Power, SurfaceNoiseIsPhaseInvariant) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scenario sc = build_scenario(risopt::testkit::small_config(2, 10, 2, 1, seed));
    StreamRng rng(seed, 8);
    auto [ris, bf] = risopt::testkit::random_state(sc, rng);
    for (int k = 0; k < sc.K(); ++k) {
      const double before = ris_noise(sc, ris, k);
      ris.phase(sc.side[k]) = risopt::testkit::random_phases(sc.M(), rng);
      EXPECT_LE(rel_diff(before, ris_noise(sc, ris, k)), 1e-12);
    }
  }
}

TEST(InitState, ExactBsPower) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scenario sc = build_scenario(risopt::testkit::desk_config(seed));
    const auto [ris, bf] = init_state(sc);
    EXPECT_LE(rel_diff(bs_power(bf), sc.config.budget_bs), 1e-10);
    EXPECT_LE(ris_power(sc, ris, bf), sc.config.budget_ris * (1.0 + 1e-8));
    for (int m = 0; m < sc.M(); ++m) {
      EXPECT_NEAR(ris.varsigma(m), 1.0 / std::sqrt(2.0), 1e-15);
      EXPECT_NEAR(std::abs(ris.phi_r(m)), 1.0, 1e-12);
      EXPECT_NEAR(std::abs(ris.phi_t(m)), 1.0, 1e-12);
    }
    const auto rep = check_constraints(sc, ris, bf, {0.0});
    EXPECT_GE(rep.min_element_slack(), -1e-8 * sc.config.budget_element());
  }
}

TEST(InitState, DefaultPresetRisBudget) {
  const Scenario sc = build_scenario(ScenarioConfig{});
  const auto [ris, bf] = init_state(sc);
  EXPECT_LE(ris_power(sc, ris, bf), sc.config.budget_ris * (1.0 + 1e-8));
  EXPECT_LE(rel_diff(bs_power(bf), sc.config.budget_bs), 1e-10);
}

TEST(InitState, Deterministic) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(12));
  const auto a = init_state(sc);
  const auto b = init_state(sc);
  EXPECT_EQ(a.first.phi_r, b.first.phi_r);
  EXPECT_EQ(a.first.amp, b.first.amp);
  EXPECT_EQ(a.second.W, b.second.W);
}

TEST(InitState, ModesFixVarsigma) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(13));
  const auto sd = init_state(sc, Mode::SD);
  for (int m = 0; m < sc.M(); ++m) EXPECT_EQ(sd.first.varsigma(m), m < 8 ? 1.0 : 0.0);
  const auto ep = init_state(sc, Mode::EP);
  for (int m = 0; m < sc.M(); ++m) EXPECT_DOUBLE_EQ(ep.first.varsigma(m), 1.0 / std::sqrt(2.0));
}

TEST(CheckConstraints, FeasibleState) {
  const Scenario sc = build_scenario(risopt::testkit::desk_config(14));
  StreamRng rng(14, 1);
  const auto [ris, bf] = risopt::testkit::random_state(sc, rng, 0.5);
  const auto rep = check_constraints(sc, ris, bf, {0.0});
  EXPECT_GE(rep.bs_power_slack, -1e-8);
  EXPECT_GE(rep.ris_power_slack, -1e-8);
  EXPECT_GE(rep.min_element_slack(), -1e-8);
  EXPECT_LE(rep.unit_modulus_residual, 1e-12);
  EXPECT_EQ(rep.varsigma_range_violation, 0.0);
  for (double s : rep.sinr_slack) EXPECT_GE(s, 0.0);
}

TEST(CheckConstraints, DetectsViolations) {
  Scenario sc = build_scenario(risopt::testkit::desk_config(15));
  StreamRng rng(15, 1);
  auto [ris, bf] = risopt::testkit::random_state(sc, rng);
  ris.varsigma(3) = 1.5;
  auto rep = check_constraints(sc, ris, bf, {0.0});
  EXPECT_GT(rep.varsigma_range_violation, 0.0);
  sc.config.budget_bs = 0.5 * bs_power(bf);
  rep = check_constraints(sc, ris, bf, {0.0});
  EXPECT_LT(rep.bs_power_slack, 0.0);
  rep = check_constraints(sc, ris, bf, {1e9, 1e9});
  for (double s : rep.sinr_slack) EXPECT_LT(s, 0.0);
}
