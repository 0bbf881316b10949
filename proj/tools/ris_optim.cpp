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

// ris_optim: single solves, sweeps and convergence curves for the
// dual-functional active surface optimizers.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "risopt/cli.hpp"

namespace {

const std::map<std::string, risopt::Problem> kProblems{{"sumrate", risopt::Problem::SumRate},
                                                       {"powmin", risopt::Problem::PowerMin}};
const std::map<std::string, risopt::Mode> kModes{
    {"op", risopt::Mode::OP}, {"ep", risopt::Mode::EP}, {"sd", risopt::Mode::SD}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint BS beamforming and dual-functional active surface design"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(RISOPT_VERSION));

  std::string config;
  std::string problem = "sumrate";
  std::vector<std::string> modes;
  std::uint64_t seed = 0;
  int trials = 0;
  int jobs = 1;
  std::string out = "out";
  std::string spec;
  bool dump_channels = false;

  auto* solve = app.add_subcommand("solve", "Run one optimization and write trace/state/constraint files");
  solve->add_option("--config", config, "JSON config file (default: RIS_OPTIM_PRESET or paper-default)")
      ->check(CLI::ExistingFile);
  solve->add_option("--problem", problem, "sumrate or powmin")->check(CLI::IsMember({"sumrate", "powmin"}));
  solve->add_option("--mode", modes, "op, ep or sd")->check(CLI::IsMember({"op", "ep", "sd"}))->expected(1);
  solve->add_option("--seed", seed, "Scenario seed");
  solve->add_option("--out", out, "Output directory");
  solve->add_flag("--dump-channels", dump_channels, "Also write channels.json for exact replay");

  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep over one parameter");
  sweep->add_option("--spec", spec, "Sweep spec JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--trials", trials, "Override trials per point")->check(CLI::PositiveNumber);
  sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out, "Output directory");

  auto* conv = app.add_subcommand("convergence", "Mean objective per outer iteration, one column per mode");
  conv->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
  conv->add_option("--problem", problem, "sumrate or powmin")->check(CLI::IsMember({"sumrate", "powmin"}));
  conv->add_option("--mode", modes, "Modes to compare (repeatable)")->check(CLI::IsMember({"op", "ep", "sd"}));
  conv->add_option("--seed", seed, "First seed");
  conv->add_option("--trials", trials, "Number of seeds")->check(CLI::PositiveNumber);
  conv->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  conv->add_option("--out", out, "Output directory");

  auto* validate = app.add_subcommand("validate-config", "Parse a config and print it fully resolved");
  validate->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : risopt::kExitUsage;
  }

  auto opt_config = [&]() -> std::optional<std::string> {
    return config.empty() ? std::nullopt : std::optional<std::string>(config);
  };
  auto opt_seed = [&](const CLI::App* sub) -> std::optional<std::uint64_t> {
    return sub->count("--seed") ? std::optional<std::uint64_t>(seed) : std::nullopt;
  };

  if (*solve) {
    risopt::SolveOptions o;
    o.config = opt_config();
    o.problem = kProblems.at(problem);
    if (!modes.empty()) o.mode = kModes.at(modes.front());
    o.seed = opt_seed(solve);
    o.out = out;
    o.dump_channels = dump_channels;
    return risopt::cmd_solve(o, std::cerr);
  }
  if (*sweep) {
    risopt::SweepOptions o;
    o.spec = spec;
    o.out = out;
    o.jobs = jobs;
    if (sweep->count("--trials")) o.trials = trials;
    return risopt::cmd_sweep(o, std::cerr);
  }
  if (*conv) {
    risopt::ConvergenceOptions o;
    o.config = opt_config();
    o.problem = kProblems.at(problem);
    if (!modes.empty()) {
      o.modes.clear();
      for (const auto& m : modes) o.modes.push_back(kModes.at(m));
    }
    if (conv->count("--trials")) o.seeds = trials;
    o.seed = opt_seed(conv);
    o.out = out;
    o.jobs = jobs;
    return risopt::cmd_convergence(o, std::cerr);
  }
  return risopt::cmd_validate_config(opt_config(), std::cout, std::cerr);
}
