#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "rit/io.hpp"
#include "rit/policy.hpp"
#include "rit/sim.hpp"

namespace rit {

// Everything a run needs: environment, controller, executor and evaluation
// defaults. Loaded from a flat `key = value` file; every key is optional and
// unknown keys are rejected.
struct ExperimentConfig {
  SimConfig sim;
  PolicyGains gains;
  ExecutorConfig exec;
  int eval_seeds = 4;
  int eval_episodes = 128;
  bool use_time_feature = true;

  void validate() const {
    sim.validate();
    exec.validate();
    if (eval_seeds < 1 || eval_episodes < 1)
      throw std::invalid_argument("eval seeds/episodes must be >= 1");
  }
};

inline std::map<std::string, std::string> parse_flat_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

inline void apply_config(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv) {
  using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"friction_mu", [](auto& c, const auto& v) { c.sim.friction_mu = parse_double(v); }},
      {"tol_xy", [](auto& c, const auto& v) { c.sim.tol_xy = parse_double(v); }},
      {"tol_yaw_deg", [](auto& c, const auto& v) { c.sim.tol_yaw = from_degrees(parse_double(v)); }},
      {"insert_depth", [](auto& c, const auto& v) { c.sim.insert_depth = parse_double(v); }},
      {"init_xy_range", [](auto& c, const auto& v) { c.sim.init_xy_range = parse_double(v); }},
      {"init_z_min", [](auto& c, const auto& v) { c.sim.init_z_min = parse_double(v); }},
      {"init_z_max", [](auto& c, const auto& v) { c.sim.init_z_max = parse_double(v); }},
      {"init_yaw_range_deg",
       [](auto& c, const auto& v) { c.sim.init_yaw_range = from_degrees(parse_double(v)); }},
      {"obs_pos_noise", [](auto& c, const auto& v) { c.sim.obs_pos_noise = parse_double(v); }},
      {"obs_yaw_noise_deg",
       [](auto& c, const auto& v) { c.sim.obs_yaw_noise = from_degrees(parse_double(v)); }},
      {"max_steps", [](auto& c, const auto& v) { c.sim.max_steps = static_cast<int>(parse_int(v)); }},
      {"action_step_pos", [](auto& c, const auto& v) { c.sim.action_step.pos = parse_double(v); }},
      {"action_step_rot_deg",
       [](auto& c, const auto& v) { c.sim.action_step.rot = from_degrees(parse_double(v)); }},
      {"nut_symmetry_order",
       [](auto& c, const auto& v) { c.sim.nut_symmetry_order = static_cast<int>(parse_int(v)); }},
      {"nut_width", [](auto& c, const auto& v) { c.sim.nut_width = parse_double(v); }},
      {"drag_gain", [](auto& c, const auto& v) { c.sim.drag_gain = parse_double(v); }},
      {"drag_clamp_deg",
       [](auto& c, const auto& v) { c.sim.drag_clamp = from_degrees(parse_double(v)); }},
      {"goal_z_overshoot",
       [](auto& c, const auto& v) { c.sim.goal_z_overshoot = parse_double(v); }},
      {"gain_xy", [](auto& c, const auto& v) { c.gains.gain_xy = parse_double(v); }},
      {"gain_yaw", [](auto& c, const auto& v) { c.gains.gain_yaw = parse_double(v); }},
      {"gain_z", [](auto& c, const auto& v) { c.gains.gain_z = parse_double(v); }},
      {"jitter_white", [](auto& c, const auto& v) { c.gains.jitter_white = parse_double(v); }},
      {"wander_step", [](auto& c, const auto& v) { c.gains.wander_step = parse_double(v); }},
      {"wander_decay", [](auto& c, const auto& v) { c.gains.wander_decay = parse_double(v); }},
      {"descend_gate_scale",
       [](auto& c, const auto& v) { c.gains.descend_gate_scale = parse_double(v); }},
      {"glide_gate_scale",
       [](auto& c, const auto& v) { c.gains.glide_gate_scale = parse_double(v); }},
      {"glide_depth", [](auto& c, const auto& v) { c.gains.glide_depth = parse_double(v); }},
      {"recover_steps",
       [](auto& c, const auto& v) { c.exec.recover_steps = static_cast<int>(parse_int(v)); }},
      {"history_len",
       [](auto& c, const auto& v) { c.exec.history_len = static_cast<int>(parse_int(v)); }},
      {"eval_seeds", [](auto& c, const auto& v) { c.eval_seeds = static_cast<int>(parse_int(v)); }},
      {"eval_episodes",
       [](auto& c, const auto& v) { c.eval_episodes = static_cast<int>(parse_int(v)); }},
      {"use_time_feature",
       [](auto& c, const auto& v) { c.use_time_feature = parse_int(v) != 0; }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::runtime_error("unknown config key: " + key);
    it->second(cfg, value);
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg;
  apply_config(cfg, parse_flat_config(read_file(path)));
  cfg.validate();
  return cfg;
}

}  // namespace rit
