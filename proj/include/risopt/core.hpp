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
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace risopt {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLn2 = 0.69314718055994530942;

/// Invalid configuration or out-of-domain argument.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A subproblem has no (strictly) feasible point.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, breakdown of a factorization, degenerate geometry.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// Which face of the surface serves a user.
enum class Side { Reflect, Transmit };

/// Amplitude-split operating mode: optimized (OP), equal power (EP), space division (SD).
enum class Mode { OP, EP, SD };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::OP: return "op";
    case Mode::EP: return "ep";
    case Mode::SD: return "sd";
  }
  return "op";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "op" || s == "OP") return Mode::OP;
  if (s == "ep" || s == "EP") return Mode::EP;
  if (s == "sd" || s == "SD") return Mode::SD;
  throw ConfigError("unknown mode '" + s + "' (expected op, ep or sd)");
}

inline bool all_finite(const CVec& v) { return v.allFinite(); }

}  // namespace risopt
