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

#include <chrono>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "risopt/model.hpp"

namespace risopt {

enum class Problem { SumRate, PowerMin };

inline std::string to_string(Problem p) { return p == Problem::SumRate ? "sumrate" : "powmin"; }

inline Problem problem_from_string(const std::string& s) {
  if (s == "sumrate") return Problem::SumRate;
  if (s == "powmin") return Problem::PowerMin;
  throw ConfigError("unknown problem '" + s + "' (expected sumrate or powmin)");
}

/// Wall-clock seconds per block for one outer iteration.
struct BlockTimes {
  double aux = 0.0;
  double beamformers = 0.0;
  double amplification = 0.0;
  double phases = 0.0;
  double varsigma = 0.0;
};

struct TraceRow {
  int iteration = 0;
  double objective = 0.0;           ///< sum-rate (bits/s/Hz) or total power p (W)
  double weighted_objective = 0.0;  ///< power-min only: α‖W‖² + (1-α)Σ‖AGw‖²
  double surrogate = 0.0;           ///< sum-rate only: h + g after the last block
  double min_sinr_ratio = 0.0;
  double delta = 0.0;
  double bs_power_slack = 0.0;
  double ris_power_slack = 0.0;
  double min_element_slack = 0.0;
  double unit_modulus_residual = 0.0;
  double varsigma_range_violation = 0.0;
  double min_sinr_slack = 0.0;
  BlockTimes seconds;
};

struct SolveTrace {
  Problem problem = Problem::SumRate;
  Mode mode = Mode::OP;
  std::vector<TraceRow> rows;
  /// Power-min: p after each (W, A) pair, before the phase/ς blocks.
  std::vector<double> pair_power;
  /// Power-min: p before each (W, A) pair.
  std::vector<double> pre_pair_power;
  bool converged = false;
  double wall_seconds = 0.0;
  std::string note;

  int iterations() const { return static_cast<int>(rows.size()); }

  std::vector<double> objectives() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.objective);
    return v;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["problem"] = to_string(problem);
    j["mode"] = to_string(mode);
    j["converged"] = converged;
    j["iterations"] = iterations();
    j["wall_seconds"] = wall_seconds;
    if (!note.empty()) j["note"] = note;
    auto& arr = j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"iteration", r.iteration},
                         {"objective", r.objective},
                         {"min_sinr_ratio", r.min_sinr_ratio},
                         {"delta", r.delta},
                         {"bs_power_slack", r.bs_power_slack},
                         {"ris_power_slack", r.ris_power_slack},
                         {"min_element_slack", r.min_element_slack},
                         {"unit_modulus_residual", r.unit_modulus_residual},
                         {"varsigma_range_violation", r.varsigma_range_violation},
                         {"min_sinr_slack", r.min_sinr_slack},
                         {"seconds",
                          {{"aux", r.seconds.aux},
                           {"beamformers", r.seconds.beamformers},
                           {"amplification", r.seconds.amplification},
                           {"phases", r.seconds.phases},
                           {"varsigma", r.seconds.varsigma}}}};
      if (problem == Problem::SumRate)
        row["surrogate"] = r.surrogate;
      else
        row["weighted_objective"] = r.weighted_objective;
      arr.push_back(std::move(row));
    }
    if (problem == Problem::PowerMin) j["pair_power"] = pair_power;
    return j;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    if (problem == Problem::SumRate) {
      os << "iteration,sum_rate_bps_per_hz\n";
      for (const auto& r : rows) os << r.iteration << ',' << r.objective << '\n';
    } else {
      os << "iteration,total_power_watts,min_sinr_ratio\n";
      for (const auto& r : rows) os << r.iteration << ',' << r.objective << ',' << r.min_sinr_ratio << '\n';
    }
    return os.str();
  }
};

/// Fills the constraint columns of a trace row.
inline void record_constraints(TraceRow& row, const Scenario& sc, const RisState& ris,
                               const BeamformerSet& bf, const std::vector<double>& targets) {
  const ConstraintReport rep = check_constraints(sc, ris, bf, targets);
  row.bs_power_slack = rep.bs_power_slack;
  row.ris_power_slack = rep.ris_power_slack;
  row.min_element_slack = rep.min_element_slack();
  row.unit_modulus_residual = rep.unit_modulus_residual;
  row.varsigma_range_violation = rep.varsigma_range_violation;
  double ms = rep.sinr_slack.empty() ? 0.0 : rep.sinr_slack.front();
  for (double s : rep.sinr_slack) ms = std::min(ms, s);
  row.min_sinr_slack = ms;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace risopt
