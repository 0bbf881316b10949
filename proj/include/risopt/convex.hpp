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

// Dense primal log-barrier interior-point method for small convex problems of
// the form
//
//   minimize    ½ z'P z - q'z + constant
//   subject to  ½ z'C_i z - l_i'z <= b_i          (C_i PSD; C_i = 0 for linear rows)
//               ‖A_j z + a_j‖ <= c_j'z + d_j       (second-order cones)
//
// Complex problems (QcqpProblem) are realified once, z = [Re x; Im x].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "risopt/core.hpp"

namespace risopt {

struct QuadConstraint {
  RMat C;  ///< empty (0x0) for a linear constraint
  RVec l;
  double b = 0.0;
  bool is_linear() const { return C.size() == 0; }
};

struct SocConstraint {
  RMat A;
  RVec a;
  RVec c;
  double d = 0.0;
};

/// Real-valued convex problem in canonical form.
struct RealQcqp {
  int n = 0;
  RMat P;
  RVec q;
  double constant = 0.0;
  std::vector<QuadConstraint> quad;
  std::vector<SocConstraint> soc;
  /// Optional per-variable scale: the solver works in y = z / scale.
  RVec scale;

  double objective(const RVec& z) const { return 0.5 * z.dot(P * z) - q.dot(z) + constant; }
  double quad_value(std::size_t i, const RVec& z) const {
    const auto& c = quad[i];
    const double lin = -c.l.dot(z) - c.b;
    return c.is_linear() ? lin : 0.5 * z.dot(c.C * z) + lin;
  }
  /// ‖A z + a‖ - (c'z + d); <= 0 when satisfied.
  double soc_value(std::size_t j, const RVec& z) const {
    const auto& s = soc[j];
    return (s.A * z + s.a).norm() - (s.c.dot(z) + s.d);
  }
  double max_violation(const RVec& z) const {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < quad.size(); ++i) v = std::max(v, quad_value(i, z));
    for (std::size_t j = 0; j < soc.size(); ++j) v = std::max(v, soc_value(j, z));
    return v;
  }
};

/// Complex quadratic constraint ½ x^H C x - Re{l^H x} <= b.
struct ComplexQuadConstraint {
  CMat C;  ///< empty for linear
  CVec l;
  double b = 0.0;
};

/// Complex cone ‖A x + a‖ <= Re{c^H x} + d.
struct ComplexSocConstraint {
  CMat A;
  CVec a;
  CVec c;
  double d = 0.0;
};

/// minimize ½ x^H P x - Re{q^H x} + constant over x in C^n.
struct QcqpProblem {
  int n = 0;
  CMat P;
  CVec q;
  double constant = 0.0;
  std::vector<ComplexQuadConstraint> constraints;
  std::vector<ComplexSocConstraint> cones;
  /// Optional magnitude hint for |x_i| (applied to real and imaginary parts).
  RVec scale;
};

enum class QcqpStatus { Optimal, Infeasible, MaxIter };

inline const char* to_string(QcqpStatus s) {
  switch (s) {
    case QcqpStatus::Optimal: return "optimal";
    case QcqpStatus::Infeasible: return "infeasible";
    case QcqpStatus::MaxIter: return "max_iter";
  }
  return "?";
}

struct RealQcqpSolution {
  RVec z;
  double objective = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  QcqpStatus status = QcqpStatus::MaxIter;
  /// Multipliers of the quadratic constraints, original units.
  RVec duals;
  int newton_steps = 0;
  bool merit_monotone = true;
  std::string message;
};

struct QcqpSolution {
  CVec x;
  double objective = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  QcqpStatus status = QcqpStatus::MaxIter;
  RVec duals;
  int newton_steps = 0;
  bool merit_monotone = true;
  std::string message;
};

struct QcqpOptions {
  double tol = 1e-8;
  int max_iter = 400;  ///< total Newton steps across phases
  double mu_factor = 10.0;
  /// Optional starting point (original variables); used directly when strictly feasible.
  std::optional<RVec> x0;
};

namespace detail {

/// Working copy of a problem after variable scaling and per-function normalization.
struct ScaledProblem {
  int n = 0;
  RMat P;
  RVec q;
  double obj_scale = 1.0;
  std::vector<QuadConstraint> quad;
  std::vector<double> quad_scale;
  std::vector<SocConstraint> soc;
  std::vector<RMat> soc_AtA;
  std::vector<RVec> soc_Ata;
  RVec D;
};

inline double max_abs(const RMat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
inline double max_abs(const RVec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline ScaledProblem scale_problem(const RealQcqp& p) {
  ScaledProblem s;
  s.n = p.n;
  s.D = p.scale.size() == p.n ? p.scale : RVec::Ones(p.n);
  const auto& D = s.D;
  s.P = D.asDiagonal() * p.P * D.asDiagonal();
  s.q = D.cwiseProduct(p.q);
  s.obj_scale = std::max({max_abs(s.P), max_abs(s.q), 1e-300});
  s.P /= s.obj_scale;
  s.q /= s.obj_scale;
  for (const auto& c : p.quad) {
    QuadConstraint qc;
    if (!c.is_linear()) qc.C = D.asDiagonal() * c.C * D.asDiagonal();
    qc.l = D.cwiseProduct(c.l);
    qc.b = c.b;
    double sc = std::max({max_abs(qc.C), max_abs(qc.l), std::abs(qc.b), 1e-300});
    if (!qc.is_linear()) qc.C /= sc;
    qc.l /= sc;
    qc.b /= sc;
    s.quad.push_back(std::move(qc));
    s.quad_scale.push_back(sc);
  }
  for (const auto& c : p.soc) {
    SocConstraint sc;
    sc.A = c.A * D.asDiagonal();
    sc.a = c.a;
    sc.c = D.cwiseProduct(c.c);
    sc.d = c.d;
    double f = std::max({max_abs(sc.A), max_abs(sc.a), max_abs(sc.c), std::abs(sc.d), 1e-300});
    sc.A /= f;
    sc.a /= f;
    sc.c /= f;
    sc.d /= f;
    s.soc_AtA.push_back(sc.A.transpose() * sc.A);
    s.soc_Ata.push_back(sc.A.transpose() * sc.a);
    s.soc.push_back(std::move(sc));
  }
  return s;
}

struct KktEstimate {
  RVec lambda;       ///< quadratic constraints first, then cones
  RVec quad_lambda;
  double stationarity = 0.0;
  double complementarity = 0.0;
};

/// Barrier problem t*f0(y) + φ(y) with an optional extra "phase-I" variable appended
/// to y (index n) that relaxes every constraint.
class BarrierEngine {
 public:
  BarrierEngine(const ScaledProblem& sp, bool phase_one, double ball_radius)
      : sp_(sp), phase_one_(phase_one), ball_r2_(ball_radius * ball_radius) {
    dim_ = sp.n + (phase_one ? 1 : 0);
  }

  int dim() const { return dim_; }

  /// Barrier degree (sum of ν over all barrier terms).
  double degree() const {
    double m = static_cast<double>(sp_.quad.size()) + 2.0 * static_cast<double>(sp_.soc.size());
    if (phase_one_) m += 2.0;  // s >= -1 and the ball
    return m;
  }

  double f0(const RVec& y) const {
    if (phase_one_) return y(sp_.n);
    const auto x = y.head(sp_.n);
    return 0.5 * x.dot(sp_.P * x) - sp_.q.dot(x);
  }

  struct Eval {
    double value = 0.0;
    bool in_domain = true;
  };

  /// Slack-type quantities at y; false if outside the barrier domain.
  bool slacks(const RVec& y, std::vector<double>& quad_neg, std::vector<double>& soc_w,
              std::vector<double>& soc_psi, double& s_lo, double& ball) const {
    const auto x = y.head(sp_.n);
    const double s = phase_one_ ? y(sp_.n) : 0.0;
    quad_neg.resize(sp_.quad.size());
    for (std::size_t i = 0; i < sp_.quad.size(); ++i) {
      const auto& c = sp_.quad[i];
      double v = -c.l.dot(x) - c.b;
      if (!c.is_linear()) v += 0.5 * x.dot(c.C * x);
      quad_neg[i] = s - v;
      if (!(quad_neg[i] > 0.0)) return false;
    }
    soc_w.resize(sp_.soc.size());
    soc_psi.resize(sp_.soc.size());
    for (std::size_t j = 0; j < sp_.soc.size(); ++j) {
      const auto& c = sp_.soc[j];
      const double w = c.c.dot(x) + c.d + s;
      const double u2 = (c.A * x + c.a).squaredNorm();
      soc_w[j] = w;
      soc_psi[j] = w * w - u2;
      if (!(w > 0.0) || !(soc_psi[j] > 0.0)) return false;
    }
    if (phase_one_) {
      s_lo = s + 1.0;
      ball = ball_r2_ - x.squaredNorm();
      if (!(s_lo > 0.0) || !(ball > 0.0)) return false;
    }
    return true;
  }

  bool feasible_domain(const RVec& y) const {
    std::vector<double> a, b, c;
    double lo = 0, ball = 0;
    return slacks(y, a, b, c, lo, ball);
  }

  /// Barrier merit t f0 + φ; +inf outside the domain.
  double merit(const RVec& y, double t) const {
    std::vector<double> qn, sw, sp;
    double lo = 0, ball = 0;
    if (!slacks(y, qn, sw, sp, lo, ball)) return std::numeric_limits<double>::infinity();
    double v = t * f0(y);
    for (double g : qn) v -= std::log(g);
    for (double p : sp) v -= std::log(p);
    if (phase_one_) v -= std::log(lo) + std::log(ball);
    return v;
  }

  /// Merit, gradient and Hessian at a domain point.
  double derivatives(const RVec& y, double t, RVec& grad, RMat& hess) const {
    const int n = sp_.n;
    const auto x = y.head(n);
    const double s = phase_one_ ? y(n) : 0.0;
    grad.setZero(dim_);
    hess.setZero(dim_, dim_);
    double merit = t * f0(y);
    if (phase_one_) {
      grad(n) += t;
    } else {
      grad.head(n) += t * (sp_.P * x - sp_.q);
      hess.topLeftCorner(n, n) += t * sp_.P;
    }
    RVec gi(dim_);
    for (const auto& c : sp_.quad) {
      // constraint h = f_i(x) - s, barrier -log(-h)
      gi.setZero();
      double v = -c.l.dot(x) - c.b;
      if (c.is_linear()) {
        gi.head(n) = -c.l;
      } else {
        gi.head(n).noalias() = c.C * x;
        v += 0.5 * x.dot(gi.head(n));
        gi.head(n) -= c.l;
      }
      if (phase_one_) gi(n) = -1.0;
      const double qn = s - v;
      merit -= std::log(qn);
      const double inv = 1.0 / qn;
      grad += inv * gi;
      hess.noalias() += (inv * inv) * gi * gi.transpose();
      if (!c.is_linear()) hess.topLeftCorner(n, n).noalias() += inv * c.C;
    }
    for (std::size_t j = 0; j < sp_.soc.size(); ++j) {
      const auto& c = sp_.soc[j];
      // ψ = w² - ‖A x + a‖², w = c'x + d + s
      const double w = c.c.dot(x) + c.d + s;
      const double psi = w * w - (c.A * x + c.a).squaredNorm();
      merit -= std::log(psi);
      gi.setZero();
      gi.head(n) = 2.0 * w * c.c - 2.0 * (sp_.soc_AtA[j] * x + sp_.soc_Ata[j]);
      if (phase_one_) gi(n) = 2.0 * w;
      const double inv = 1.0 / psi;
      grad -= inv * gi;
      hess.noalias() += (inv * inv) * gi * gi.transpose();
      // -∇²ψ/ψ with ∇²ψ = 2 c̃ c̃' - 2 A'A
      RVec ct = RVec::Zero(dim_);
      ct.head(n) = c.c;
      if (phase_one_) ct(n) = 1.0;
      hess.noalias() -= (2.0 * inv) * ct * ct.transpose();
      hess.topLeftCorner(n, n).noalias() += (2.0 * inv) * sp_.soc_AtA[j];
    }
    if (phase_one_) {
      const double lo = s + 1.0;
      const double ball = ball_r2_ - x.squaredNorm();
      merit -= std::log(lo) + std::log(ball);
      grad(n) -= 1.0 / lo;
      hess(n, n) += 1.0 / (lo * lo);
      grad.head(n) += (2.0 / ball) * x;
      hess.topLeftCorner(n, n).noalias() += (4.0 / (ball * ball)) * x * x.transpose();
      hess.topLeftCorner(n, n).diagonal().array() += 2.0 / ball;
    }
    return merit;
  }

  /// Every barrier argument along y + α·dir is a polynomial of degree <= 2 in α;
  /// the coefficients are computed once per direction.
  class Line {
   public:
    Line(const BarrierEngine& eng, const RVec& y, const RVec& dir) : eng_(eng) {
      const auto& sp = eng.sp_;
      const int n = sp.n;
      const auto x = y.head(n);
      const auto d = dir.head(n);
      const double s = eng.phase_one_ ? y(n) : 0.0;
      const double ds = eng.phase_one_ ? dir(n) : 0.0;
      if (eng.phase_one_) {
        f_ = {s, ds, 0.0};
        lo_ = {s + 1.0, ds};
        ball_ = {eng.ball_r2_ - x.squaredNorm(), -2.0 * x.dot(d), -d.squaredNorm()};
      } else {
        const RVec Pd = sp.P * d;
        f_ = {0.5 * x.dot(sp.P * x) - sp.q.dot(x), x.dot(Pd) - sp.q.dot(d), 0.5 * d.dot(Pd)};
      }
      quad_.reserve(sp.quad.size());
      RVec Cd(n);
      for (const auto& c : sp.quad) {
        // slack(α) = s + α ds - f_i(x + α d)
        double v0 = -c.l.dot(x) - c.b, v1 = -c.l.dot(d), v2 = 0.0;
        if (!c.is_linear()) {
          Cd.noalias() = c.C * d;
          v0 += 0.5 * x.dot(c.C * x);
          v1 += x.dot(Cd);
          v2 = 0.5 * d.dot(Cd);
        }
        quad_.push_back({s - v0, ds - v1, -v2});
      }
      for (const auto& c : sp.soc) {
        Cone k;
        k.w0 = c.c.dot(x) + c.d + s;
        k.w1 = c.c.dot(d) + ds;
        k.u0 = c.A * x + c.a;
        k.u1 = c.A * d;
        soc_.push_back(std::move(k));
      }
    }

    /// Barrier merit at y + α·dir; +inf outside the domain.
    double merit(double alpha, double t) const {
      constexpr double inf = std::numeric_limits<double>::infinity();
      double v = t * eval(f_, alpha);
      for (const auto& q : quad_) {
        const double g = eval(q, alpha);
        if (!(g > 0.0)) return inf;
        v -= std::log(g);
      }
      for (const auto& k : soc_) {
        const double w = k.w0 + alpha * k.w1;
        const double psi = w * w - (k.u0 + alpha * k.u1).squaredNorm();
        if (!(w > 0.0) || !(psi > 0.0)) return inf;
        v -= std::log(psi);
      }
      if (eng_.phase_one_) {
        const double lo = lo_[0] + alpha * lo_[1];
        const double ball = eval(ball_, alpha);
        if (!(lo > 0.0) || !(ball > 0.0)) return inf;
        v -= std::log(lo) + std::log(ball);
      }
      return v;
    }

   private:
    using Poly = std::array<double, 3>;
    struct Cone {
      double w0 = 0.0, w1 = 0.0;
      RVec u0, u1;
    };
    static double eval(const Poly& p, double a) { return p[0] + a * (p[1] + a * p[2]); }

    const BarrierEngine& eng_;
    Poly f_{};
    std::array<double, 2> lo_{};
    Poly ball_{};
    std::vector<Poly> quad_;
    std::vector<Cone> soc_;
  };

  /// Multipliers and KKT residuals at a phase-II point. Two dual estimates are
  /// compared: the barrier multipliers 1/(t·slack) and a least-squares fit over the
  /// near-active constraints; the one with the smaller residual is kept.
  KktEstimate kkt(const RVec& y, double t) const {
    const int n = sp_.n;
    const std::size_t nq = sp_.quad.size(), ns = sp_.soc.size();
    std::vector<double> qn, sw, spsi;
    double lo = 0, ball = 0;
    slacks(y, qn, sw, spsi, lo, ball);
    const auto x = y.head(n);
    const RVec g0 = sp_.P * x - sp_.q;
    RMat J(n, nq + ns);
    RVec slack(nq + ns), lam_b(nq + ns);
    for (std::size_t i = 0; i < nq; ++i) {
      const auto& c = sp_.quad[i];
      J.col(i) = -c.l;
      if (!c.is_linear()) J.col(i) += c.C * x;
      slack(i) = qn[i];
      lam_b(i) = 1.0 / (t * qn[i]);
    }
    for (std::size_t j = 0; j < ns; ++j) {
      const auto& c = sp_.soc[j];
      const RVec u = c.A * x + c.a;
      const double un = u.norm();
      const auto col = static_cast<Eigen::Index>(nq + j);
      J.col(col) = (un > 0.0 ? RVec(c.A.transpose() * u / un) : RVec(RVec::Zero(n))) - c.c;
      slack(col) = sw[j] - un;
      lam_b(col) = 2.0 * sw[j] / (t * spsi[j]);
    }
    KktEstimate best;
    best.lambda = lam_b;
    best.stationarity = (g0 + J * lam_b).norm();
    best.complementarity = lam_b.dot(slack);

    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < slack.size(); ++i)
      if (slack(i) < 1e-5) active.push_back(i);
    if (!active.empty()) {
      RMat Ja(n, static_cast<Eigen::Index>(active.size()));
      for (std::size_t k = 0; k < active.size(); ++k) Ja.col(static_cast<Eigen::Index>(k)) = J.col(active[k]);
      const RVec la = Ja.colPivHouseholderQr().solve(-g0);
      RVec lam = RVec::Zero(slack.size());
      for (std::size_t k = 0; k < active.size(); ++k)
        lam(active[k]) = std::max(0.0, la(static_cast<Eigen::Index>(k)));
      const double st = (g0 + J * lam).norm();
      const double cs = lam.dot(slack);
      if (lam.allFinite() && std::max(st, cs) < std::max(best.stationarity, best.complementarity)) {
        best.lambda = lam;
        best.stationarity = st;
        best.complementarity = cs;
      }
    }
    best.quad_lambda = best.lambda.head(static_cast<Eigen::Index>(nq));
    return best;
  }

 private:
  const ScaledProblem& sp_;
  bool phase_one_;
  double ball_r2_;
  int dim_;
};

struct CenteringResult {
  bool ok = true;
  bool monotone = true;
  int steps = 0;
  double grad_norm = 0.0;
};

/// Newton's method on the merit at fixed t. `early_exit` lets phase I stop as soon
/// as the relaxation variable turns negative.
template <typename EarlyExit>
CenteringResult center(const BarrierEngine& eng, RVec& y, double t, int max_steps,
                       EarlyExit&& early_exit, double grad_tol = 0.0) {
  CenteringResult res;
  const int d = eng.dim();
  RVec grad(d);
  RMat hess(d, d);
  double prev_merit = std::numeric_limits<double>::infinity();
  RVec prev_y;
  for (int it = 0; it < max_steps; ++it) {
    const double merit = eng.derivatives(y, t, grad, hess);
    if (std::isnan(merit) && prev_y.size()) {
      // the polynomial line model accepted a point the direct evaluation rejects
      y = std::move(prev_y);
      return res;
    }
    if (merit > prev_merit + 64.0 * std::numeric_limits<double>::epsilon() * std::abs(prev_merit))
      res.monotone = false;
    res.grad_norm = grad.norm();
    if (!grad.allFinite() || !hess.allFinite()) {
      res.ok = false;
      return res;
    }
    if (res.grad_norm <= grad_tol * t) return res;
    RVec step;
    double reg = 0.0;
    const double hscale = std::max(1e-300, hess.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 8; ++attempt) {
      RMat Hr = hess;
      if (reg > 0.0) Hr.diagonal().array() += reg;
      Eigen::LDLT<RMat> ldlt(Hr);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = -ldlt.solve(grad);
        if (step.allFinite() && grad.dot(step) < 0.0) break;
      }
      reg = reg == 0.0 ? 1e-14 * hscale : reg * 100.0;
      step.resize(0);
    }
    if (step.size() == 0) {
      res.ok = false;
      return res;
    }
    const double decrement2 = -grad.dot(step);
    // below this the merit cannot resolve the predicted decrease
    const double floor = std::max(1e-13, 64.0 * std::numeric_limits<double>::epsilon() * std::abs(merit));
    if (decrement2 * 0.5 <= floor && grad_tol == 0.0) return res;
    if (decrement2 * 0.5 <= 1e-30) return res;
    const typename BarrierEngine::Line line(eng, y, step);
    double alpha = 1.0;
    int ls = 0;
    for (; ls < 60; ++ls) {
      const double trial = line.merit(alpha, t);
      if (std::isfinite(trial) && trial <= merit - 0.01 * alpha * decrement2) break;
      alpha *= 0.5;
    }
    if (ls == 60) {
      // no progress possible at working precision
      return res;
    }
    prev_y = y;
    y += alpha * step;
    prev_merit = merit;
    ++res.steps;
    if (early_exit(y)) return res;
  }
  return res;
}

}  // namespace detail

/// Solves a real problem. On Infeasible, `message` names the constraints that stay
/// violated at the phase-I optimum.
inline RealQcqpSolution solve_qcqp(const RealQcqp& prob, const QcqpOptions& opt = {}) {
  const int n = prob.n;
  if (prob.P.rows() != n || prob.P.cols() != n || prob.q.size() != n)
    throw ConfigError("solve_qcqp: objective dimension mismatch");
  for (const auto& c : prob.quad)
    if (c.l.size() != n || (!c.is_linear() && (c.C.rows() != n || c.C.cols() != n)))
      throw ConfigError("solve_qcqp: quadratic constraint dimension mismatch");
  for (const auto& c : prob.soc)
    if (c.A.cols() != n || c.a.size() != c.A.rows() || c.c.size() != n)
      throw ConfigError("solve_qcqp: cone constraint dimension mismatch");
  if (prob.scale.size() != 0 && prob.scale.size() != n)
    throw ConfigError("solve_qcqp: scale dimension mismatch");

  const detail::ScaledProblem sp = detail::scale_problem(prob);
  RealQcqpSolution sol;
  int budget = opt.max_iter;

  RVec y = RVec::Zero(n);
  if (opt.x0) {
    if (opt.x0->size() != n) throw ConfigError("solve_qcqp: x0 dimension mismatch");
    y = opt.x0->cwiseQuotient(sp.D);
  }

  detail::BarrierEngine main_eng(sp, false, 0.0);
  if (!main_eng.feasible_domain(y)) {
    // Phase I: minimize s subject to every constraint relaxed by s.
    const double radius = 1e4 * std::max(1.0, y.norm());
    detail::BarrierEngine p1(sp, true, radius);
    RVec ys(n + 1);
    ys.head(n) = y;
    double worst = -1.0;
    {
      for (const auto& c : sp.quad) {
        double v = -c.l.dot(y) - c.b;
        if (!c.is_linear()) v += 0.5 * y.dot(c.C * y);
        worst = std::max(worst, v);
      }
      for (const auto& c : sp.soc) worst = std::max(worst, (c.A * y + c.a).norm() - c.c.dot(y) - c.d);
    }
    ys(n) = std::max(worst, 0.0) + 1.0;
    double t = 1.0;
    bool found = false;
    const double m1 = p1.degree();
    auto neg_s = [&](const RVec& v) { return v(n) < 0.0 && main_eng.feasible_domain(v.head(n)); };
    while (budget > 0) {
      auto cr = detail::center(p1, ys, t, std::min(budget, 100), neg_s);
      budget -= cr.steps;
      sol.newton_steps += cr.steps;
      sol.merit_monotone = sol.merit_monotone && cr.monotone;
      if (neg_s(ys)) {
        found = true;
        break;
      }
      if (!cr.ok) break;
      // lower bound on the phase-I optimum
      if (ys(n) - m1 / t > 0.0 || m1 / t < 1e-12) break;
      t *= opt.mu_factor;
    }
    if (!found) {
      sol.status = budget > 0 ? QcqpStatus::Infeasible : QcqpStatus::MaxIter;
      sol.z = sp.D.cwiseProduct(ys.head(n));
      sol.objective = prob.objective(sol.z);
      std::ostringstream msg;
      msg << "phase-I optimum s*=" << ys(n) << " >= 0; violated constraints:";
      for (std::size_t i = 0; i < prob.quad.size(); ++i)
        if (prob.quad_value(i, sol.z) > 0.0) msg << " quad[" << i << "]";
      for (std::size_t j = 0; j < prob.soc.size(); ++j)
        if (prob.soc_value(j, sol.z) > 0.0) msg << " cone[" << j << "]";
      sol.message = msg.str();
      return sol;
    }
    y = ys.head(n);
  }

  // Phase II.
  const double m = main_eng.degree();
  double t;
  {
    const double f = std::abs(main_eng.f0(y));
    t = m > 0.0 ? std::max(1.0, m) / std::max(1.0, f) : 1.0;
  }
  bool done = false;
  double grad_norm = 0.0;
  auto never = [](const RVec&) { return false; };
  while (budget > 0) {
    auto cr = detail::center(main_eng, y, t, std::min(budget, 100), never);
    budget -= cr.steps;
    sol.newton_steps += cr.steps;
    sol.merit_monotone = sol.merit_monotone && cr.monotone;
    grad_norm = cr.grad_norm;
    if (!cr.ok) break;
    if (m == 0.0 || m / t < 0.1 * opt.tol) {
      done = true;
      break;
    }
    t *= opt.mu_factor;
  }

  if (done && budget > 0) {
    // polish the last center below the stationarity tolerance
    auto cr = detail::center(main_eng, y, t, std::min(budget, 10), never, 0.01 * opt.tol);
    sol.newton_steps += cr.steps;
    sol.merit_monotone = sol.merit_monotone && cr.monotone;
  }
  (void)grad_norm;

  // KKT residual in normalized units: Lagrangian stationarity and complementary slackness.
  const detail::KktEstimate kkt = main_eng.kkt(y, t);
  sol.kkt_residual = std::max(kkt.stationarity, kkt.complementarity);
  sol.z = sp.D.cwiseProduct(y);
  sol.objective = prob.objective(sol.z);
  const RVec& lam = kkt.quad_lambda;
  sol.duals.resize(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    sol.duals(i) = lam(i) * sp.obj_scale / sp.quad_scale[static_cast<std::size_t>(i)];
  if (done && sol.kkt_residual <= opt.tol) {
    sol.status = QcqpStatus::Optimal;
  } else {
    sol.status = QcqpStatus::MaxIter;
    std::ostringstream msg;
    msg << "stopped with kkt residual " << sol.kkt_residual;
    sol.message = msg.str();
  }
  return sol;
}

/// Realification of a complex problem (z = [Re x; Im x]).
inline RealQcqp realify(const QcqpProblem& p) {
  const int n = p.n;
  if (p.P.rows() != n || p.P.cols() != n || p.q.size() != n)
    throw ConfigError("realify: objective dimension mismatch");
  auto herm = [n](const CMat& C) {
    RMat R(2 * n, 2 * n);
    R.topLeftCorner(n, n) = C.real();
    R.topRightCorner(n, n) = -C.imag();
    R.bottomLeftCorner(n, n) = C.imag();
    R.bottomRightCorner(n, n) = C.real();
    return R;
  };
  auto vec = [n](const CVec& v) {
    RVec r(2 * n);
    r.head(n) = v.real();
    r.tail(n) = v.imag();
    return r;
  };
  RealQcqp r;
  r.n = 2 * n;
  r.P = herm(p.P);
  r.q = vec(p.q);
  r.constant = p.constant;
  for (const auto& c : p.constraints) {
    if (c.l.size() != n || (c.C.size() != 0 && (c.C.rows() != n || c.C.cols() != n)))
      throw ConfigError("realify: constraint dimension mismatch");
    QuadConstraint qc;
    if (c.C.size() != 0) qc.C = herm(c.C);
    qc.l = vec(c.l);
    qc.b = c.b;
    r.quad.push_back(std::move(qc));
  }
  for (const auto& c : p.cones) {
    if (c.A.cols() != n || c.a.size() != c.A.rows() || c.c.size() != n)
      throw ConfigError("realify: cone dimension mismatch");
    const auto rows = c.A.rows();
    SocConstraint sc;
    sc.A.resize(2 * rows, 2 * n);
    sc.A.topLeftCorner(rows, n) = c.A.real();
    sc.A.topRightCorner(rows, n) = -c.A.imag();
    sc.A.bottomLeftCorner(rows, n) = c.A.imag();
    sc.A.bottomRightCorner(rows, n) = c.A.real();
    sc.a.resize(2 * rows);
    sc.a.head(rows) = c.a.real();
    sc.a.tail(rows) = c.a.imag();
    sc.c = vec(c.c);
    sc.d = c.d;
    r.soc.push_back(std::move(sc));
  }
  if (p.scale.size() == n) {
    r.scale.resize(2 * n);
    r.scale.head(n) = p.scale;
    r.scale.tail(n) = p.scale;
  }
  return r;
}

inline QcqpSolution solve_qcqp(const QcqpProblem& p, const QcqpOptions& opt = {}) {
  const RealQcqp r = realify(p);
  QcqpOptions ro = opt;
  if (opt.x0) {
    // x0 arrives as a realified vector when used through this overload
    if (opt.x0->size() != 2 * p.n) throw ConfigError("solve_qcqp: x0 must be realified (2n)");
  }
  const RealQcqpSolution rs = solve_qcqp(r, ro);
  QcqpSolution s;
  s.x.resize(p.n);
  for (int i = 0; i < p.n; ++i) s.x(i) = cplx(rs.z(i), rs.z(p.n + i));
  s.objective = rs.objective;
  s.kkt_residual = rs.kkt_residual;
  s.status = rs.status;
  s.duals = rs.duals;
  s.newton_steps = rs.newton_steps;
  s.merit_monotone = rs.merit_monotone;
  s.message = rs.message;
  return s;
}

inline RVec realify_vector(const CVec& x) {
  RVec r(2 * x.size());
  r.head(x.size()) = x.real();
  r.tail(x.size()) = x.imag();
  return r;
}

/// Builder used by the solver tests and the beamformer subproblems.
class QcqpBuilder {
 public:
  explicit QcqpBuilder(int n) {
    p_.n = n;
    p_.P = CMat::Zero(n, n);
    p_.q = CVec::Zero(n);
  }
  QcqpBuilder& objective(CMat P, CVec q, double constant = 0.0) {
    p_.P = std::move(P);
    p_.q = std::move(q);
    p_.constant = constant;
    return *this;
  }
  QcqpBuilder& quadratic(CMat C, CVec l, double b) {
    p_.constraints.push_back({std::move(C), std::move(l), b});
    return *this;
  }
  QcqpBuilder& linear(CVec l, double b) {
    p_.constraints.push_back({CMat(), std::move(l), b});
    return *this;
  }
  QcqpBuilder& cone(CMat A, CVec a, CVec c, double d) {
    p_.cones.push_back({std::move(A), std::move(a), std::move(c), d});
    return *this;
  }
  QcqpBuilder& scale(RVec s) {
    p_.scale = std::move(s);
    return *this;
  }
  QcqpProblem build() const { return p_; }

 private:
  QcqpProblem p_;
};

}  // namespace risopt
