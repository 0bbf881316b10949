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

// JSON configuration, presets, channel dumps and state serialization.
//
// Config schema (every key optional, unknown keys rejected):
//
//   preset                 "paper-default" | "desk"      base values
//   n_antennas, n_elements, n_users, n_users_reflect      integers
//   bs_ris_distance_m, user_radius_m, reference_distance_m
//   pathloss_ref_db        path loss at the reference distance (dB, e.g. -30)
//   exponents              {bs_ris, ris_user, bs_user_reflect, bs_user_transmit}
//   rician_factor_db
//   noise_user_dbm, noise_ris_dbm, budget_bs_dbm, budget_ris_dbm, budget_element_dbm
//   sinr_target_db         number or one entry per user
//   mode                   "op" | "ep" | "sd"
//   seed                   unsigned integer
//   channels_file          channel dump to replay instead of generating
//   sumrate                {max_iter, rel_tol}
//   powmin                 {alpha, epsilon, max_iter, rel_tol}

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "risopt/powmin.hpp"
#include "risopt/scenario.hpp"
#include "risopt/sumrate.hpp"

namespace risopt {

using json = nlohmann::json;

/// Everything a single run needs.
struct RunConfig {
  ScenarioConfig scenario;
  SumRateParams sumrate;
  PowMinParams powmin;
  std::string preset = "paper-default";
  std::string channels_file;
};

inline ScenarioConfig preset_config(const std::string& name) {
  ScenarioConfig cfg;
  if (name == "paper-default") return cfg;
  if (name == "desk") {
    cfg.n_antennas = 4;
    cfg.n_users = 2;
    cfg.n_users_reflect = 1;
    cfg.n_elements = 16;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "' (expected paper-default or desk)");
}

/// Preset named by RIS_OPTIM_PRESET, else paper-default.
inline std::string default_preset_name() {
  const char* env = std::getenv("RIS_OPTIM_PRESET");
  return env && *env ? std::string(env) : std::string("paper-default");
}

namespace detail {

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

/// Applies a parsed JSON object on top of `base`. dB/dBm values are converted here.
inline RunConfig run_config_from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(j,
                         {"preset", "n_antennas", "n_elements", "n_users", "n_users_reflect",
                          "bs_ris_distance_m", "user_radius_m", "reference_distance_m", "pathloss_ref_db",
                          "exponents", "rician_factor_db", "noise_user_dbm", "noise_ris_dbm",
                          "budget_bs_dbm", "budget_ris_dbm", "budget_element_dbm", "sinr_target_db",
                          "mode", "seed", "channels_file", "sumrate", "powmin"},
                         "config");
  RunConfig rc = std::move(base);
  if (j.contains("preset")) {
    rc.preset = detail::get_as<std::string>(j, "preset");
    rc.scenario = preset_config(rc.preset);
  }
  ScenarioConfig& c = rc.scenario;
  if (j.contains("n_antennas")) c.n_antennas = detail::get_as<int>(j, "n_antennas");
  if (j.contains("n_elements")) c.n_elements = detail::get_as<int>(j, "n_elements");
  if (j.contains("n_users")) c.n_users = detail::get_as<int>(j, "n_users");
  if (j.contains("n_users_reflect")) c.n_users_reflect = detail::get_as<int>(j, "n_users_reflect");
  if (j.contains("bs_ris_distance_m")) c.bs_ris_distance = detail::get_as<double>(j, "bs_ris_distance_m");
  if (j.contains("user_radius_m")) c.user_radius = detail::get_as<double>(j, "user_radius_m");
  if (j.contains("reference_distance_m"))
    c.reference_distance = detail::get_as<double>(j, "reference_distance_m");
  if (j.contains("pathloss_ref_db")) c.pathloss_ref_gain = db_to_linear(detail::get_as<double>(j, "pathloss_ref_db"));
  if (j.contains("exponents")) {
    const json& e = j.at("exponents");
    if (!e.is_object()) throw ConfigError("config key 'exponents' must be an object");
    detail::reject_unknown(e, {"bs_ris", "ris_user", "bs_user_reflect", "bs_user_transmit"}, "exponents");
    if (e.contains("bs_ris")) c.exponents.bs_ris = detail::get_as<double>(e, "bs_ris");
    if (e.contains("ris_user")) c.exponents.ris_user = detail::get_as<double>(e, "ris_user");
    if (e.contains("bs_user_reflect")) c.exponents.bs_user_reflect = detail::get_as<double>(e, "bs_user_reflect");
    if (e.contains("bs_user_transmit"))
      c.exponents.bs_user_transmit = detail::get_as<double>(e, "bs_user_transmit");
  }
  if (j.contains("rician_factor_db")) c.rician_factor = db_to_linear(detail::get_as<double>(j, "rician_factor_db"));
  if (j.contains("noise_user_dbm")) c.noise_user = dbm_to_watts(detail::get_as<double>(j, "noise_user_dbm"));
  if (j.contains("noise_ris_dbm")) c.noise_ris = dbm_to_watts(detail::get_as<double>(j, "noise_ris_dbm"));
  if (j.contains("budget_bs_dbm")) c.budget_bs = dbm_to_watts(detail::get_as<double>(j, "budget_bs_dbm"));
  if (j.contains("budget_ris_dbm")) c.budget_ris = dbm_to_watts(detail::get_as<double>(j, "budget_ris_dbm"));
  if (j.contains("budget_element_dbm"))
    c.budget_element_override = dbm_to_watts(detail::get_as<double>(j, "budget_element_dbm"));
  if (j.contains("sinr_target_db")) {
    const json& t = j.at("sinr_target_db");
    c.sinr_targets.clear();
    if (t.is_number()) {
      c.sinr_targets.push_back(db_to_linear(t.get<double>()));
    } else if (t.is_array()) {
      for (const auto& v : t) {
        if (!v.is_number()) throw ConfigError("config key 'sinr_target_db': entries must be numbers");
        c.sinr_targets.push_back(db_to_linear(v.get<double>()));
      }
    } else {
      throw ConfigError("config key 'sinr_target_db' must be a number or an array");
    }
  }
  if (j.contains("mode")) c.mode = mode_from_string(detail::get_as<std::string>(j, "mode"));
  if (j.contains("seed")) c.rng_seed = detail::get_as<std::uint64_t>(j, "seed");
  if (j.contains("channels_file")) rc.channels_file = detail::get_as<std::string>(j, "channels_file");
  if (j.contains("sumrate")) {
    const json& s = j.at("sumrate");
    detail::reject_unknown(s, {"max_iter", "rel_tol"}, "sumrate");
    if (s.contains("max_iter")) rc.sumrate.max_iter = detail::get_as<int>(s, "max_iter");
    if (s.contains("rel_tol")) rc.sumrate.rel_tol = detail::get_as<double>(s, "rel_tol");
  }
  if (j.contains("powmin")) {
    const json& p = j.at("powmin");
    detail::reject_unknown(p, {"alpha", "epsilon", "max_iter", "rel_tol"}, "powmin");
    if (p.contains("alpha")) rc.powmin.alpha = detail::get_as<double>(p, "alpha");
    if (p.contains("epsilon")) rc.powmin.epsilon = detail::get_as<double>(p, "epsilon");
    if (p.contains("max_iter")) rc.powmin.max_iter = detail::get_as<int>(p, "max_iter");
    if (p.contains("rel_tol")) rc.powmin.rel_tol = detail::get_as<double>(p, "rel_tol");
  }
  c.validate();
  rc.sumrate.validate();
  rc.powmin.validate();
  return rc;
}

inline RunConfig default_run_config() {
  RunConfig rc;
  rc.preset = default_preset_name();
  rc.scenario = preset_config(rc.preset);
  return rc;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

/// Loads a config file; a relative channels_file resolves against the config's directory.
inline RunConfig load_run_config(const std::string& path) {
  RunConfig rc = run_config_from_json(parse_json_text(read_text_file(path), path), default_run_config());
  if (!rc.channels_file.empty() && std::filesystem::path(rc.channels_file).is_relative())
    rc.channels_file = (std::filesystem::path(path).parent_path() / rc.channels_file).string();
  return rc;
}

/// Round-trips through run_config_from_json.
inline json run_config_to_json(const RunConfig& rc) {
  const ScenarioConfig& c = rc.scenario;
  json j;
  j["preset"] = rc.preset;
  j["n_antennas"] = c.n_antennas;
  j["n_elements"] = c.n_elements;
  j["n_users"] = c.n_users;
  j["n_users_reflect"] = c.n_users_reflect;
  j["bs_ris_distance_m"] = c.bs_ris_distance;
  j["user_radius_m"] = c.user_radius;
  j["reference_distance_m"] = c.reference_distance;
  j["pathloss_ref_db"] = linear_to_db(c.pathloss_ref_gain);
  j["exponents"] = {{"bs_ris", c.exponents.bs_ris},
                    {"ris_user", c.exponents.ris_user},
                    {"bs_user_reflect", c.exponents.bs_user_reflect},
                    {"bs_user_transmit", c.exponents.bs_user_transmit}};
  j["rician_factor_db"] = linear_to_db(c.rician_factor);
  j["noise_user_dbm"] = watts_to_dbm(c.noise_user);
  j["noise_ris_dbm"] = watts_to_dbm(c.noise_ris);
  j["budget_bs_dbm"] = watts_to_dbm(c.budget_bs);
  j["budget_ris_dbm"] = watts_to_dbm(c.budget_ris);
  if (c.budget_element_override) j["budget_element_dbm"] = watts_to_dbm(*c.budget_element_override);
  json t = json::array();
  for (double g : c.sinr_targets) t.push_back(linear_to_db(g));
  j["sinr_target_db"] = t;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.rng_seed;
  if (!rc.channels_file.empty()) j["channels_file"] = rc.channels_file;
  j["sumrate"] = {{"max_iter", rc.sumrate.max_iter}, {"rel_tol", rc.sumrate.rel_tol}};
  j["powmin"] = {{"alpha", rc.powmin.alpha},
                 {"epsilon", rc.powmin.epsilon},
                 {"max_iter", rc.powmin.max_iter},
                 {"rel_tol", rc.powmin.rel_tol}};
  return j;
}

inline json complex_to_json(const CVec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back({v(i).real(), v(i).imag()});
  return a;
}

inline CVec complex_from_json(const json& a, const std::string& what) {
  if (!a.is_array()) throw ConfigError(what + ": expected an array of [re, im] pairs");
  CVec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const json& e = a[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ConfigError(what + ": entry " + std::to_string(i) + " is not an [re, im] pair");
    v(static_cast<Eigen::Index>(i)) = cplx(e[0].get<double>(), e[1].get<double>());
  }
  return v;
}

/// G is stored row by row (M rows of length N).
inline json channels_to_json(const Scenario& sc) {
  json j;
  json g = json::array();
  for (int m = 0; m < sc.M(); ++m) g.push_back(complex_to_json(sc.G.row(m).transpose()));
  j["G"] = g;
  json hd = json::array(), hr = json::array();
  for (int k = 0; k < sc.K(); ++k) {
    hd.push_back(complex_to_json(sc.h_d[k]));
    hr.push_back(complex_to_json(sc.h_r[k]));
  }
  j["h_d"] = hd;
  j["h_r"] = hr;
  return j;
}

inline Scenario scenario_from_channel_json(const ScenarioConfig& cfg, const json& j) {
  if (!j.is_object() || !j.contains("G") || !j.contains("h_d") || !j.contains("h_r"))
    throw ConfigError("channel dump needs G, h_d and h_r");
  const json& g = j.at("G");
  if (!g.is_array() || static_cast<int>(g.size()) != cfg.n_elements)
    throw ConfigError("channel dump: G must have n_elements rows");
  CMat G(cfg.n_elements, cfg.n_antennas);
  for (int m = 0; m < cfg.n_elements; ++m) {
    const CVec row = complex_from_json(g[static_cast<std::size_t>(m)], "G");
    if (row.size() != cfg.n_antennas) throw ConfigError("channel dump: G rows must have n_antennas entries");
    G.row(m) = row.transpose();
  }
  std::vector<CVec> hd, hr;
  for (const auto& v : j.at("h_d")) hd.push_back(complex_from_json(v, "h_d"));
  for (const auto& v : j.at("h_r")) hr.push_back(complex_from_json(v, "h_r"));
  return scenario_from_channels(cfg, std::move(G), std::move(hd), std::move(hr));
}

/// Generates the scenario, or replays the configured channel dump.
inline Scenario make_scenario(const RunConfig& rc) {
  if (rc.channels_file.empty()) return build_scenario(rc.scenario);
  return scenario_from_channel_json(rc.scenario,
                                    parse_json_text(read_text_file(rc.channels_file), rc.channels_file));
}

inline json state_to_json(const RisState& ris, const BeamformerSet& bf) {
  json j;
  j["phi_r"] = complex_to_json(ris.phi_r);
  j["phi_t"] = complex_to_json(ris.phi_t);
  j["amplification_gain"] = std::vector<double>(ris.amp.data(), ris.amp.data() + ris.amp.size());
  j["varsigma"] = std::vector<double>(ris.varsigma.data(), ris.varsigma.data() + ris.varsigma.size());
  json w = json::array();
  for (int k = 0; k < bf.K(); ++k) w.push_back(complex_to_json(bf.W.col(k)));
  j["W"] = w;
  return j;
}

inline json constraints_to_json(const ConstraintReport& rep) {
  return json{{"bs_power_slack_watts", rep.bs_power_slack},
              {"ris_power_slack_watts", rep.ris_power_slack},
              {"per_element_slack_watts", rep.per_element_slack},
              {"min_element_slack_watts", rep.min_element_slack()},
              {"unit_modulus_residual", rep.unit_modulus_residual},
              {"varsigma_range_violation", rep.varsigma_range_violation},
              {"sinr_slack", rep.sinr_slack}};
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

}  // namespace risopt
