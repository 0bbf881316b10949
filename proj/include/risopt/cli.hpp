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

// Subcommands of the ris_optim tool. Each returns a process exit code and
// writes diagnostics to `err`.
//
// CSV outputs carry no wall-clock columns so that reruns with the same seed are
// byte-identical; timings go to the JSON manifests.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "risopt/io.hpp"
#include "risopt/powmin.hpp"
#include "risopt/sumrate.hpp"

namespace risopt {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInfeasible = 2, kExitNumerical = 3 };

/// Runs one problem on a built scenario with the config's targets.
inline SolveResult run_problem(const Scenario& sc, const RunConfig& rc, Problem problem, Mode mode) {
  if (problem == Problem::SumRate) return run_sum_rate(sc, rc.sumrate, mode);
  return run_power_min(sc, sc.config.targets(), rc.powmin, mode);
}

inline std::string objective_column(Problem p) {
  return p == Problem::SumRate ? "sum_rate_bps_per_hz" : "total_power_watts";
}

namespace detail {

inline json manifest(const std::string& command, const json& config, std::uint64_t seed, double wall) {
  return json{{"command", command},
              {"config_hash", fnv1a_hex(config.dump())},
              {"config", config},
              {"seed", seed},
              {"version", RISOPT_VERSION},
              {"wall_seconds", wall}};
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

/// Loads --config or the environment preset and applies the seed/mode overrides.
inline RunConfig resolve_config(const std::optional<std::string>& path, std::optional<std::uint64_t> seed,
                                std::optional<Mode> mode) {
  RunConfig rc = path ? load_run_config(*path) : default_run_config();
  if (seed) rc.scenario.rng_seed = *seed;
  if (mode) rc.scenario.mode = *mode;
  rc.scenario.validate();
  return rc;
}

template <typename F>
int guarded(std::ostream& err, const std::string& cmd, F&& body) {
  try {
    return body();
  } catch (const InfeasibleBlockError& e) {
    err << cmd << ": infeasible: " << e.what() << '\n'
        << constraints_to_json(e.report).dump(2) << '\n';
    return kExitInfeasible;
  } catch (const InfeasibleError& e) {
    err << cmd << ": infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ConfigError& e) {
    err << cmd << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << cmd << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << cmd << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace detail

struct SolveOptions {
  std::optional<std::string> config;
  Problem problem = Problem::SumRate;
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool dump_channels = false;
};

/// Writes trace.csv, state.json, constraints.json and manifest.json (plus
/// channels.json on request).
inline int cmd_solve(const SolveOptions& o, std::ostream& err) {
  return detail::guarded(err, "solve", [&] {
    const RunConfig rc = detail::resolve_config(o.config, o.seed, o.mode);
    const Scenario sc = make_scenario(rc);
    const Mode mode = rc.scenario.mode;
    Stopwatch sw;
    const SolveResult res = run_problem(sc, rc, o.problem, mode);
    const std::filesystem::path dir(o.out);
    detail::ensure_dir(dir);
    write_text_file(dir / "trace.csv", res.trace.to_csv());
    json state = state_to_json(res.ris, res.bf);
    state["problem"] = to_string(o.problem);
    state["mode"] = to_string(mode);
    state["objective"] = res.trace.rows.empty() ? 0.0 : res.trace.rows.back().objective;
    state["iterations"] = res.trace.iterations();
    state["converged"] = res.trace.converged;
    write_text_file(dir / "state.json", state.dump(2) + "\n");
    const auto targets = o.problem == Problem::PowerMin ? sc.config.targets() : std::vector<double>{};
    write_text_file(dir / "constraints.json",
                    constraints_to_json(check_constraints(sc, res.ris, res.bf, targets)).dump(2) + "\n");
    if (o.dump_channels) write_text_file(dir / "channels.json", channels_to_json(sc).dump() + "\n");
    json m = detail::manifest("solve", run_config_to_json(rc), rc.scenario.rng_seed, sw.seconds());
    m["problem"] = to_string(o.problem);
    m["trace"] = res.trace.to_json();
    write_text_file(dir / "manifest.json", m.dump(2) + "\n");
    if (!res.trace.converged)
      err << "solve: stopped at the iteration cap (" << res.trace.iterations() << ") before reaching the tolerance\n";
    return static_cast<int>(kExitOk);
  });
}

/// Parameter swept by cmd_sweep.
enum class SweepParam { BsPower, RisPower, Elements, ReflectUsers, Target };

inline SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "P_T") return SweepParam::BsPower;
  if (s == "P_R") return SweepParam::RisPower;
  if (s == "M") return SweepParam::Elements;
  if (s == "K_r") return SweepParam::ReflectUsers;
  if (s == "gamma") return SweepParam::Target;
  throw ConfigError("unknown sweep parameter '" + s + "' (expected P_T, P_R, M, K_r or gamma)");
}

inline std::string sweep_column(SweepParam p) {
  switch (p) {
    case SweepParam::BsPower: return "P_T_dbm";
    case SweepParam::RisPower: return "P_R_dbm";
    case SweepParam::Elements: return "M";
    case SweepParam::ReflectUsers: return "K_r";
    case SweepParam::Target: return "gamma_db";
  }
  return "value";
}

struct SweepSpec {
  SweepParam param = SweepParam::BsPower;
  std::vector<double> values;
  int trials = 1;
  RunConfig base;
  Problem problem = Problem::SumRate;
  std::vector<Mode> modes{Mode::OP};
  std::uint64_t seed = 1;

  void validate() const {
    if (values.empty()) throw ConfigError("sweep: value list must not be empty");
    if (trials < 1) throw ConfigError("sweep: trials must be >= 1");
    if (modes.empty()) throw ConfigError("sweep: mode list must not be empty");
  }

  /// Config for one grid point; trial i uses seed + i.
  RunConfig point(double value, Mode mode, int trial) const {
    RunConfig rc = base;
    ScenarioConfig& c = rc.scenario;
    switch (param) {
      case SweepParam::BsPower: c.budget_bs = dbm_to_watts(value); break;
      case SweepParam::RisPower: c.budget_ris = dbm_to_watts(value); break;
      case SweepParam::Elements: c.n_elements = static_cast<int>(std::lround(value)); break;
      case SweepParam::ReflectUsers: c.n_users_reflect = static_cast<int>(std::lround(value)); break;
      case SweepParam::Target: c.sinr_targets = {db_to_linear(value)}; break;
    }
    c.mode = mode;
    c.rng_seed = seed + static_cast<std::uint64_t>(trial);
    c.validate();
    return rc;
  }
};

/// Spec file keys: parameter, values, trials, base (preset name or config path),
/// problem, modes, seed.
inline SweepSpec sweep_spec_from_json(const json& j, const std::filesystem::path& origin = {}) {
  if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
  detail::reject_unknown(j, {"parameter", "values", "trials", "base", "problem", "modes", "seed"}, "sweep spec");
  SweepSpec s;
  s.param = sweep_param_from_string(detail::get_as<std::string>(j, "parameter"));
  s.values = detail::get_as<std::vector<double>>(j, "values");
  if (j.contains("trials")) s.trials = detail::get_as<int>(j, "trials");
  if (j.contains("problem")) s.problem = problem_from_string(detail::get_as<std::string>(j, "problem"));
  if (j.contains("modes")) {
    s.modes.clear();
    for (const auto& m : detail::get_as<std::vector<std::string>>(j, "modes")) s.modes.push_back(mode_from_string(m));
  }
  if (j.contains("seed")) s.seed = detail::get_as<std::uint64_t>(j, "seed");
  const std::string base = j.contains("base") ? detail::get_as<std::string>(j, "base") : default_preset_name();
  if (base == "paper-default" || base == "desk") {
    s.base.preset = base;
    s.base.scenario = preset_config(base);
  } else {
    std::filesystem::path p(base);
    if (p.is_relative() && !origin.empty()) p = origin / p;
    s.base = load_run_config(p.string());
  }
  s.validate();
  return s;
}

struct TrialOutcome {
  std::string status = "ok";
  double objective = std::nan("");
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
};

inline TrialOutcome run_trial(const RunConfig& rc, Problem problem) {
  TrialOutcome t;
  Stopwatch sw;
  try {
    const Scenario sc = make_scenario(rc);
    const SolveResult r = run_problem(sc, rc, problem, rc.scenario.mode);
    t.objective = r.trace.rows.empty() ? 0.0 : r.trace.rows.back().objective;
    t.iterations = r.trace.iterations();
    t.converged = r.trace.converged;
  } catch (const InfeasibleError&) {
    t.status = "infeasible";
  } catch (const ConfigError&) {
    t.status = "config_error";
  } catch (const std::exception&) {
    t.status = "numerical_failure";
  }
  t.seconds = sw.seconds();
  return t;
}

struct AggregateRow {
  double value = 0.0;
  Mode mode = Mode::OP;
  int trials = 0;
  int failures = 0;
  double mean_objective = std::nan("");
  double stderr_objective = std::nan("");
  double mean_iterations = std::nan("");
  double mean_seconds = std::nan("");
};

struct SweepResult {
  std::vector<AggregateRow> rows;
  /// Indexed [value][mode][trial].
  std::vector<std::vector<std::vector<TrialOutcome>>> trials;
};

/// Runs every (value, mode, trial) on `jobs` workers. Results land in
/// seed-indexed slots, so the output does not depend on scheduling.
inline SweepResult run_sweep(const SweepSpec& spec, int jobs) {
  spec.validate();
  const std::size_t nv = spec.values.size(), nm = spec.modes.size(), nt = static_cast<std::size_t>(spec.trials);
  SweepResult out;
  out.trials.assign(nv, std::vector<std::vector<TrialOutcome>>(nm, std::vector<TrialOutcome>(nt)));
  // validate every grid point up front so a bad value is a usage error
  for (double v : spec.values)
    for (Mode m : spec.modes) spec.point(v, m, 0);

  const std::size_t total = nv * nm * nt;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < total; idx = next++) {
      const std::size_t t = idx % nt, m = (idx / nt) % nm, v = idx / (nt * nm);
      out.trials[v][m][t] = run_trial(spec.point(spec.values[v], spec.modes[m], static_cast<int>(t)), spec.problem);
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t m = 0; m < nm; ++m) {
      AggregateRow row;
      row.value = spec.values[v];
      row.mode = spec.modes[m];
      row.trials = spec.trials;
      std::vector<double> obj;
      double iters = 0.0, secs = 0.0;
      for (const auto& t : out.trials[v][m]) {
        if (t.status != "ok") {
          ++row.failures;
          continue;
        }
        obj.push_back(t.objective);
        iters += t.iterations;
        secs += t.seconds;
      }
      if (!obj.empty()) {
        const double n_ok = static_cast<double>(obj.size());
        double mean = 0.0;
        for (double x : obj) mean += x;
        mean /= n_ok;
        double var = 0.0;
        for (double x : obj) var += (x - mean) * (x - mean);
        row.mean_objective = mean;
        row.stderr_objective = obj.size() > 1 ? std::sqrt(var / (n_ok - 1.0) / n_ok) : 0.0;
        row.mean_iterations = iters / n_ok;
        row.mean_seconds = secs / n_ok;
      }
      out.rows.push_back(row);
    }
  return out;
}

inline std::string sweep_aggregate_csv(const SweepSpec& spec, const SweepResult& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  const std::string obj = objective_column(spec.problem);
  os << sweep_column(spec.param) << ",mode,trials,failures,mean_" << obj << ",stderr_" << obj
     << ",mean_iterations\n";
  for (const auto& row : r.rows)
    os << row.value << ',' << to_string(row.mode) << ',' << row.trials << ',' << row.failures << ','
       << row.mean_objective << ',' << row.stderr_objective << ',' << row.mean_iterations << '\n';
  return os.str();
}

inline std::string sweep_trials_csv(const SweepSpec& spec, const SweepResult& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << sweep_column(spec.param) << ",mode,trial,seed,status," << objective_column(spec.problem)
     << ",iterations,converged\n";
  for (std::size_t v = 0; v < r.trials.size(); ++v)
    for (std::size_t m = 0; m < r.trials[v].size(); ++m)
      for (std::size_t t = 0; t < r.trials[v][m].size(); ++t) {
        const auto& x = r.trials[v][m][t];
        os << spec.values[v] << ',' << to_string(spec.modes[m]) << ',' << t << ',' << spec.seed + t << ','
           << x.status << ',' << x.objective << ',' << x.iterations << ',' << (x.converged ? 1 : 0) << '\n';
      }
  return os.str();
}

struct SweepOptions {
  std::string spec;
  std::string out = "out";
  int jobs = 1;
  std::optional<int> trials;
};

/// Writes sweep.csv (one row per value and mode), sweep_trials.csv and manifest.json.
inline int cmd_sweep(const SweepOptions& o, std::ostream& err) {
  return detail::guarded(err, "sweep", [&] {
    if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const json raw = parse_json_text(read_text_file(o.spec), o.spec);
    SweepSpec spec = sweep_spec_from_json(raw, std::filesystem::path(o.spec).parent_path());
    if (o.trials) spec.trials = *o.trials;
    spec.validate();
    Stopwatch sw;
    const SweepResult r = run_sweep(spec, o.jobs);
    const std::filesystem::path dir(o.out);
    detail::ensure_dir(dir);
    write_text_file(dir / "sweep.csv", sweep_aggregate_csv(spec, r));
    write_text_file(dir / "sweep_trials.csv", sweep_trials_csv(spec, r));
    json m = detail::manifest("sweep", raw, spec.seed, sw.seconds());
    m["base_config"] = run_config_to_json(spec.base);
    m["jobs"] = o.jobs;
    json timing = json::array();
    for (const auto& row : r.rows)
      timing.push_back({{"value", row.value}, {"mode", to_string(row.mode)}, {"mean_wall_seconds", row.mean_seconds}});
    m["timing"] = timing;
    write_text_file(dir / "manifest.json", m.dump(2) + "\n");
    int failed = 0;
    for (const auto& row : r.rows) failed += row.failures;
    if (failed) err << "sweep: " << failed << " trial(s) failed; see sweep_trials.csv\n";
    return static_cast<int>(kExitOk);
  });
}

struct ConvergenceOptions {
  std::optional<std::string> config;
  Problem problem = Problem::SumRate;
  std::vector<Mode> modes{Mode::OP, Mode::EP, Mode::SD};
  int seeds = 10;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int jobs = 1;
};

/// Per-iteration objective averaged over seeds, one column per mode. Runs that
/// stop early contribute their final value to later rows.
inline std::vector<std::vector<double>> convergence_curves(const RunConfig& rc, Problem problem,
                                                           const std::vector<Mode>& modes, int seeds,
                                                           int jobs, int* failures = nullptr) {
  std::vector<std::vector<std::vector<double>>> traces(modes.size(), std::vector<std::vector<double>>(seeds));
  const std::size_t total = modes.size() * static_cast<std::size_t>(seeds);
  std::atomic<std::size_t> next{0};
  std::atomic<int> failed{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < total; idx = next++) {
      const std::size_t m = idx / static_cast<std::size_t>(seeds), s = idx % static_cast<std::size_t>(seeds);
      RunConfig r = rc;
      r.scenario.rng_seed = rc.scenario.rng_seed + s;
      r.scenario.mode = modes[m];
      try {
        const Scenario sc = make_scenario(r);
        traces[m][s] = run_problem(sc, r, problem, modes[m]).trace.objectives();
      } catch (const std::exception&) {
        ++failed;
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failures) *failures = failed;

  std::size_t rows = 0;
  for (const auto& mt : traces)
    for (const auto& t : mt) rows = std::max(rows, t.size());
  std::vector<std::vector<double>> curves(modes.size(), std::vector<double>(rows, std::nan("")));
  for (std::size_t m = 0; m < modes.size(); ++m)
    for (std::size_t i = 0; i < rows; ++i) {
      double sum = 0.0;
      int n_ok = 0;
      for (const auto& t : traces[m]) {
        if (t.empty()) continue;
        sum += t[std::min(i, t.size() - 1)];
        ++n_ok;
      }
      if (n_ok) curves[m][i] = sum / n_ok;
    }
  return curves;
}

inline int cmd_convergence(const ConvergenceOptions& o, std::ostream& err) {
  return detail::guarded(err, "convergence", [&] {
    if (o.seeds < 1) throw ConfigError("convergence: need at least one seed");
    if (o.modes.empty()) throw ConfigError("convergence: need at least one mode");
    if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const RunConfig rc = detail::resolve_config(o.config, o.seed, std::nullopt);
    Stopwatch sw;
    int failures = 0;
    const auto curves = convergence_curves(rc, o.problem, o.modes, o.seeds, o.jobs, &failures);
    std::ostringstream os;
    os << std::setprecision(17) << "iteration";
    for (Mode m : o.modes) os << ",mean_" << objective_column(o.problem) << '_' << to_string(m);
    os << '\n';
    const std::size_t rows = curves.empty() ? 0 : curves.front().size();
    for (std::size_t i = 0; i < rows; ++i) {
      os << i + 1;
      for (const auto& c : curves) os << ',' << c[i];
      os << '\n';
    }
    const std::filesystem::path dir(o.out);
    detail::ensure_dir(dir);
    write_text_file(dir / "convergence.csv", os.str());
    json m = detail::manifest("convergence", run_config_to_json(rc), rc.scenario.rng_seed, sw.seconds());
    m["problem"] = to_string(o.problem);
    m["seeds"] = o.seeds;
    m["failures"] = failures;
    write_text_file(dir / "manifest.json", m.dump(2) + "\n");
    if (failures) err << "convergence: " << failures << " run(s) failed and were left out of the means\n";
    return static_cast<int>(kExitOk);
  });
}

/// Prints the fully resolved config as JSON.
inline int cmd_validate_config(const std::optional<std::string>& config, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, "validate-config", [&] {
    const RunConfig rc = detail::resolve_config(config, std::nullopt, std::nullopt);
    if (!rc.channels_file.empty()) make_scenario(rc);
    out << run_config_to_json(rc).dump(2) << '\n';
    return static_cast<int>(kExitOk);
  });
}

}  // namespace risopt
