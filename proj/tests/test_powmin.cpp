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
#include <numbers>

#include "risopt/powmin.hpp"
#include "test_support.hpp"

using namespace risopt;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Instance {
  Scenario sc;
  RisState ris;
  BeamformerSet bf;
};

Instance desk_instance(std::uint64_t seed) {
  Instance in{build_scenario(testkit::desk_config(seed)), {}, {}};
  StreamRng rng(seed, 31);
  std::tie(in.ris, in.bf) = testkit::random_state(in.sc, rng, 0.5);
  return in;
}

std::vector<double> scaled_sinrs(const Scenario& sc, const RisState& ris, const BeamformerSet& bf,
                                 double factor) {
  auto s = sinrs(sc, ris, bf);
  for (double& v : s) v *= factor;
  return s;
}

// Powers p_k meeting every SINR target with equality for fixed unit directions U:
// p_k |h̃_k^H u_k|²/γ_k - Σ_{j≠k} p_j |h̃_k^H u_j|² = noise_k. Empty on failure.
std::vector<double> power_control(const Scenario& sc, const RisState& ris, const CMat& U,
                                  const std::vector<double>& targets) {
  const int K = sc.K();
  const CMat H = equivalent_channels(sc, ris);
  RMat A(K, K);
  RVec b(K);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < K; ++j) {
      const double v = std::norm(H.col(k).dot(U.col(j)));
      A(k, j) = j == k ? v / targets[k] : -v;
    }
    b(k) = ris_noise(sc, ris, k) + sc.noise_user();
  }
  const RVec p = A.fullPivLu().solve(b);
  if (!((A * p - b).norm() <= 1e-9 * b.norm())) return {};
  for (int k = 0; k < K; ++k)
    if (!(p(k) > 0.0)) return {};
  return {p.data(), p.data() + K};
}

}  // namespace

TEST(LogSumExp, SandwichBound) {
  StreamRng rng(1, 1);
  for (int inst = 0; inst < 50; ++inst) {
    const int K = 1 + inst % 6;
    RVec z(K);
    for (int k = 0; k < K; ++k) z(k) = 10.0 * rng.normal();
    for (double eps : {1e-3, 1e-1, 1.0}) {
      const double v = log_sum_exp(z, eps);
      EXPECT_GE(v, z.maxCoeff() - 1e-12);
      EXPECT_LE(v, z.maxCoeff() + eps * std::log(static_cast<double>(K)) + 1e-12);
    }
  }
}

TEST(LogSumExp, NoOverflow) {
  const RVec z = (RVec(3) << 1e3, 1e3, -1e3).finished();
  EXPECT_NEAR(log_sum_exp(z, 1e-3), 1e3 + 1e-3 * std::log(2.0), 1e-9);
}

TEST(BeamformersMin, SingleUserDirectLink) {
  // a = 0 leaves h̃ = h_d and no surface noise: ‖w‖² = γσ²/‖h_d‖².
  ScenarioConfig cfg = testkit::small_config(3, 2, 1, 1, 1);
  StreamRng rng(2, 2);
  const CVec hd = testkit::random_cvec(3, rng, 1e-4);
  const Scenario sc =
      scenario_from_channels(cfg, testkit::random_cmat(2, 3, rng), {hd}, {testkit::random_cvec(2, rng)});
  auto [ris, bf] = init_state(sc);
  ris.amp.setZero();
  const std::vector<double> targets{db_to_linear(10.0)};
  const BeamformerSet out = update_beamformers_min(sc, ris, bf, targets, 0.5);
  const double expected = targets[0] * sc.noise_user() / hd.squaredNorm();
  EXPECT_LE(std::abs(out.W.squaredNorm() - expected), 1e-6 * expected);
}

TEST(BeamformersMin, TargetsActiveAtOptimum) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto in = desk_instance(seed);
    const auto targets = scaled_sinrs(in.sc, in.ris, in.bf, 0.5);
    const BeamformerSet out = update_beamformers_min(in.sc, in.ris, in.bf, targets, 0.5);
    const auto s = sinrs(in.sc, in.ris, out);
    for (int k = 0; k < in.sc.K(); ++k) {
      EXPECT_GE(s[k], targets[k]) << "seed " << seed;
      EXPECT_LE(s[k], targets[k] * (1.0 + 1e-6)) << "seed " << seed;
    }
    EXPECT_GE(check_constraints(in.sc, in.ris, out, targets).min_element_slack(), 0.0);
    EXPECT_LE(weighted_power(in.sc, in.ris, out, 0.5), weighted_power(in.sc, in.ris, in.bf, 0.5));
  }
}

TEST(BeamformersMin, ZeroTargets) {
  const auto in = desk_instance(3);
  const BeamformerSet out = update_beamformers_min(in.sc, in.ris, in.bf, {0.0, 0.0}, 0.5);
  EXPECT_EQ(out.W.norm(), 0.0);
}

TEST(BeamformersMin, InfeasibleTargets) {
  // two users sharing one channel cannot both exceed SINR 1
  ScenarioConfig cfg = testkit::small_config(2, 2, 2, 2, 1);
  StreamRng rng(4, 4);
  const CVec hd = testkit::random_cvec(2, rng, 1e-4);
  const CVec hr = testkit::random_cvec(2, rng, 1e-3);
  const Scenario sc = scenario_from_channels(cfg, testkit::random_cmat(2, 2, rng, 1e-3), {hd, hd}, {hr, hr});
  auto [ris, bf] = init_state(sc);
  try {
    update_beamformers_min(sc, ris, bf, {2.0, 2.0}, 0.5);
    FAIL() << "expected infeasibility";
  } catch (const InfeasibleBlockError& e) {
    EXPECT_EQ(e.report.sinr_slack.size(), 2u);
  }
}

TEST(AmplificationMin, ZeroTargets) {
  const auto in = desk_instance(5);
  EXPECT_EQ(update_amplification_min(in.sc, in.ris, in.bf, {0.0, 0.0}, 0.5).norm(), 0.0);
}

TEST(AmplificationMin, CapBoundary) {
  // No direct link and one element: SINR grows with a, so a target met only at
  // the cap forces a = c.
  ScenarioConfig cfg = testkit::small_config(1, 1, 1, 1, 1);
  StreamRng rng(6, 6);
  const Scenario sc = scenario_from_channels(cfg, CMat::Constant(1, 1, cplx(1e-3, 0.0)),
                                             {CVec::Zero(1)}, {CVec::Constant(1, cplx(0.0, 1e-3))});
  RisState ris;
  ris.phi_r = ris.phi_t = CVec::Ones(1);
  ris.varsigma = RVec::Ones(1);
  BeamformerSet bf;
  bf.W = CMat::Constant(1, 1, 1.0);
  const double cap = element_gain_caps(sc, bf)(0);
  ris.amp = RVec::Constant(1, cap * (1.0 - 2e-7));
  const std::vector<double> targets{sinrs(sc, ris, bf)[0]};
  ris.amp(0) = cap * (1.0 - 1e-9);
  const RVec a = update_amplification_min(sc, ris, bf, targets, 0.5);
  EXPECT_LE(std::abs(a(0) - cap), 1e-6 * cap);
  RisState out = ris;
  out.amp = a;
  EXPECT_GE(sinrs(sc, out, bf)[0], targets[0] * (1.0 - 1e-9));
}

TEST(AmplificationMin, FeasibleAndNotWorse) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto in = desk_instance(seed);
    const auto targets = scaled_sinrs(in.sc, in.ris, in.bf, 0.8);
    RisState out = in.ris;
    out.amp = update_amplification_min(in.sc, in.ris, in.bf, targets, 0.5);
    EXPECT_LE(ris_signal_power(in.sc, out, in.bf), ris_signal_power(in.sc, in.ris, in.bf) * (1.0 + 1e-12));
    const auto s = sinrs(in.sc, out, in.bf);
    for (int k = 0; k < in.sc.K(); ++k) EXPECT_GE(s[k], targets[k] * (1.0 - 1e-9)) << "seed " << seed;
    const RVec caps = element_gain_caps(in.sc, in.bf);
    for (int m = 0; m < in.sc.M(); ++m) EXPECT_LE(out.amp(m), caps(m));
  }
}

TEST(QosGradient, MatchesFiniteDifference) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Instance in{build_scenario(testkit::small_config(3, 4, 3, 2, seed)), {}, {}};
    StreamRng rng(seed, 7);
    std::tie(in.ris, in.bf) = testkit::random_state(in.sc, rng);
    const std::vector<double> targets{1.0, 2.0, 0.5};
    for (Side s : {Side::Reflect, Side::Transmit}) {
      const QosTerms q = build_qos_terms(in.sc, in.ris, in.bf, targets, s);
      const CVec phi = in.ris.phase(s);
      const double varpi = q.ratio(phi);
      const double eps = 1e-3 * (1.0 + varpi);
      const CVec g = qos_gradient(q, phi, varpi, eps);
      const double h = 1e-7;
      RVec fd(2 * phi.size()), an(2 * phi.size());
      for (Eigen::Index m = 0; m < phi.size(); ++m) {
        for (int part = 0; part < 2; ++part) {
          const cplx d = part == 0 ? cplx(h, 0.0) : cplx(0.0, h);
          CVec p = phi, n = phi;
          p(m) += d;
          n(m) -= d;
          fd(2 * m + part) = (qos_objective(q, p, varpi, eps) - qos_objective(q, n, varpi, eps)) / (2.0 * h);
          an(2 * m + part) = part == 0 ? g(m).real() : g(m).imag();
        }
      }
      EXPECT_LE((fd - an).norm(), 1e-5 * an.norm()) << "seed " << seed;
    }
  }
}

TEST(QosTerms, RatioMatchesSinr) {
  const auto in = desk_instance(8);
  const std::vector<double> targets{3.0, 5.0};
  const auto s = sinrs(in.sc, in.ris, in.bf);
  for (Side side : {Side::Reflect, Side::Transmit}) {
    const QosTerms q = build_qos_terms(in.sc, in.ris, in.bf, targets, side);
    ASSERT_EQ(q.size(), 1);
    const int k = q.users[0];
    EXPECT_LE(std::abs(q.ratio(in.ris.phase(side)) - targets[k] / s[k]), 1e-9 * targets[k] / s[k]);
  }
}

TEST(QosBalancePhases, TwoElementGrid) {
  int within = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Instance in{build_scenario(testkit::small_config(2, 2, 2, 2, seed)), {}, {}};
    StreamRng rng(seed, 9);
    std::tie(in.ris, in.bf) = testkit::random_state(in.sc, rng);
    const std::vector<double> targets{1.0, 1.0};
    const auto [pr, pt] = qos_balance_phases(in.sc, in.ris, in.bf, targets);
    RisState out = in.ris;
    out.phi_r = pr;
    out.phi_t = pt;
    const double got = min_sinr_ratio(in.sc, out, in.bf, targets);
    double best = 0.0;
    RisState probe = in.ris;
    const int n = 628;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        probe.phi_r(0) = std::polar(1.0, kTwoPi * i / n);
        probe.phi_r(1) = std::polar(1.0, kTwoPi * j / n);
        best = std::max(best, min_sinr_ratio(in.sc, probe, in.bf, targets));
      }
    EXPECT_GE(got, min_sinr_ratio(in.sc, in.ris, in.bf, targets) * (1.0 - 1e-12));
    if (std::abs(got - best) <= 1e-2 * best) ++within;
  }
  EXPECT_GE(within, 4);
}

TEST(QosBalancePhases, NeverLowersMinRatio) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto in = desk_instance(seed);
    const std::vector<double> targets{db_to_linear(12.0), db_to_linear(12.0)};
    QosBalanceState st;
    const auto [pr, pt] = qos_balance_phases(in.sc, in.ris, in.bf, targets, {}, &st);
    RisState out = in.ris;
    out.phi_r = pr;
    out.phi_t = pt;
    for (int k = 0; k < in.sc.K(); ++k) {
      const Side s = in.sc.side[k];
      double before = std::numeric_limits<double>::infinity(), after = before;
      const auto sb = sinrs(in.sc, in.ris, in.bf), sa = sinrs(in.sc, out, in.bf);
      for (int j = 0; j < in.sc.K(); ++j)
        if (in.sc.side[j] == s) {
          before = std::min(before, sb[j] / targets[j]);
          after = std::min(after, sa[j] / targets[j]);
        }
      EXPECT_GE(after, before * (1.0 - 1e-6)) << "seed " << seed;
    }
    for (int m = 0; m < in.sc.M(); ++m) {
      EXPECT_NEAR(std::abs(pr(m)), 1.0, 1e-12);
      EXPECT_NEAR(std::abs(pt(m)), 1.0, 1e-12);
    }
    EXPECT_EQ(st.f.size(), 2u);
    EXPECT_GT(st.varpi, 0.0);
  }
}

TEST(VarsigmaMin, SymmetricStaysPut) {
  // identical channels for a reflection and a transmission user, equal precoders
  // and no direct link: the balanced split is ς = 1/√2
  ScenarioConfig cfg = testkit::small_config(2, 3, 2, 1, 1);
  StreamRng rng(10, 10);
  const CVec hr = testkit::random_cvec(3, rng, 1e-3);
  const Scenario sc = scenario_from_channels(cfg, testkit::random_cmat(3, 2, rng, 1e-3),
                                             {CVec::Zero(2), CVec::Zero(2)}, {hr, hr});
  RisState ris;
  ris.phi_r = ris.phi_t = testkit::random_phases(3, rng);
  ris.varsigma = RVec::Constant(3, 1.0 / std::sqrt(2.0));
  BeamformerSet bf;
  bf.W = testkit::random_cvec(2, rng).replicate(1, 2);
  ris.amp = 0.5 * element_gain_caps(sc, bf);
  const RVec out = update_varsigma_min(sc, ris, bf, {1.0, 1.0});
  for (int m = 0; m < 3; ++m) EXPECT_LE(std::abs(out(m) - 1.0 / std::sqrt(2.0)), 1e-4);
}

TEST(VarsigmaMin, SingleElementGrid) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Instance in{build_scenario(testkit::small_config(2, 1, 2, 1, seed)), {}, {}};
    StreamRng rng(seed, 11);
    std::tie(in.ris, in.bf) = testkit::random_state(in.sc, rng);
    const std::vector<double> targets{1.0, 1.0};
    RisState out = in.ris;
    out.varsigma = update_varsigma_min(in.sc, in.ris, in.bf, targets);
    const double got = min_sinr_ratio(in.sc, out, in.bf, targets);
    double best = 0.0;
    RisState probe = in.ris;
    for (int i = 0; i <= 100000; ++i) {
      probe.varsigma(0) = i / 100000.0;
      best = std::max(best, min_sinr_ratio(in.sc, probe, in.bf, targets));
    }
    EXPECT_LE(std::abs(got - best), 1e-3 * best) << "seed " << seed;
  }
}

TEST(GoldenSection, Quadratic) {
  const double x = golden_section([](double v) { return (v - 0.3) * (v - 0.3); }, 0.0, 1.0, 1e-8);
  EXPECT_NEAR(x, 0.3, 1e-7);
  EXPECT_EQ(golden_section([](double v) { return v; }, 0.0, 1.0, 1e-6), 0.0);
}

TEST(FeasibilityPrecheck, DuplicatedUsersRankDeficient) {
  ScenarioConfig cfg = testkit::small_config(4, 8, 3, 2, 1);
  StreamRng rng(12, 12);
  const CVec hd = testkit::random_cvec(4, rng);
  const CVec hr = testkit::random_cvec(8, rng);
  const Scenario dup = scenario_from_channels(cfg, testkit::random_cmat(8, 4, rng), {hd, hd, testkit::random_cvec(4, rng)},
                                              {hr, hr, testkit::random_cvec(8, rng)});
  const auto rep = feasibility_precheck(dup);
  EXPECT_FALSE(rep.full_rank);
  EXPECT_EQ(rep.rank, 2);
  EXPECT_THROW(run_power_min(dup, {1.0, 1.0, 1.0}), InfeasibleError);

  const Scenario ok = build_scenario(testkit::desk_config(1));
  EXPECT_TRUE(feasibility_precheck(ok).full_rank);
}

TEST(RunPowerMin, ZeroTargets) {
  const Scenario sc = build_scenario(testkit::desk_config(1));
  const auto res = run_power_min(sc, {0.0, 0.0});
  EXPECT_EQ(res.bf.W.norm(), 0.0);
  EXPECT_EQ(res.ris.amp.norm(), 0.0);
  EXPECT_TRUE(res.trace.converged);
  EXPECT_EQ(res.trace.rows.back().objective, 0.0);
}

TEST(RunPowerMin, DeskInvariants) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Scenario sc = build_scenario(testkit::desk_config(seed));
    const auto targets = sc.config.targets();
    const auto res = run_power_min(sc, targets);
    const auto& tr = res.trace;
    ASSERT_FALSE(tr.rows.empty());
    ASSERT_EQ(tr.pair_power.size(), tr.pre_pair_power.size());
    for (std::size_t i = 0; i < tr.pair_power.size(); ++i)
      EXPECT_LE(tr.pair_power[i], tr.pre_pair_power[i] * (1.0 + 1e-8)) << "seed " << seed << " iter " << i;
    for (std::size_t i = 1; i < tr.rows.size(); ++i)
      EXPECT_LE(tr.rows[i].objective, tr.rows[i - 1].objective * (1.0 + 1e-6)) << "seed " << seed;
    const auto s = sinrs(sc, res.ris, res.bf);
    for (int k = 0; k < sc.K(); ++k) EXPECT_GE(s[k], targets[k] * (1.0 - 1e-6));
    const auto rep = check_constraints(sc, res.ris, res.bf, targets);
    EXPECT_GE(rep.min_element_slack(), -1e-9 * sc.config.budget_element());
    EXPECT_LE(rep.unit_modulus_residual, 1e-12);
    EXPECT_EQ(rep.varsigma_range_violation, 0.0);
    EXPECT_NEAR(tr.rows.back().objective, total_power(sc, res.ris, res.bf), 1e-12);
  }
}

TEST(RunPowerMin, BeatsRandomSearch) {
  const Scenario sc = build_scenario(testkit::small_config(2, 2, 2, 1, 1));
  const std::vector<double> targets{1.0, 1.0};
  const auto res = run_power_min(sc, targets);
  const double p = total_power(sc, res.ris, res.bf);

  StreamRng rng(1, 4321);
  double best = std::numeric_limits<double>::infinity();
  int feasible = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    RisState ris;
    ris.phi_r = testkit::random_phases(2, rng);
    ris.phi_t = testkit::random_phases(2, rng);
    ris.varsigma = RVec::Constant(2, rng.uniform());
    ris.varsigma(1) = rng.uniform();
    ris.amp = RVec::Zero(2);
    const CMat H0 = equivalent_channels(sc, ris);
    // directions: zero-forcing on half the draws, random on the rest
    CMat U = trial % 2 ? testkit::random_cmat(2, 2, rng) : CMat(H0 * (H0.adjoint() * H0).inverse());
    for (int k = 0; k < 2; ++k) U.col(k).normalize();
    const double amax = 1e3 * rng.uniform();
    ris.amp = RVec::Constant(2, amax * rng.uniform());
    ris.amp(1) = amax * rng.uniform();
    const auto pw = power_control(sc, ris, U, targets);
    if (pw.empty()) continue;
    BeamformerSet bf;
    bf.W = U;
    for (int k = 0; k < 2; ++k) bf.W.col(k) *= std::sqrt(pw[k]);
    if (check_constraints(sc, ris, bf, targets).min_element_slack() < 0.0) continue;
    ++feasible;
    best = std::min(best, total_power(sc, ris, bf));
  }
  ASSERT_GT(feasible, 100);
  EXPECT_LE(p, best * (1.0 + 1e-6));
}

TEST(PowMinParams, Validation) {
  PowMinParams p;
  p.alpha = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = PowMinParams{};
  p.epsilon = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = PowMinParams{};
  p.varsigma_interval = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  const Scenario sc = build_scenario(testkit::desk_config(1));
  EXPECT_THROW(run_power_min(sc, {1.0}), ConfigError);
}
