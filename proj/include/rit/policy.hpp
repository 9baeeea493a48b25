#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rit/pose.hpp"
#include "rit/rng.hpp"
#include "rit/sim.hpp"

namespace rit {

// Scripted stand-in for the learned insertion controller: proportional
// correction toward the goal in x/y/yaw, a three-tier vertical term, and a
// zero-mean search jitter. The x/y jitter has a white component plus a slowly
// wandering trim that models the drifting miscalibration of a real
// controller; the trim is re-centered whenever the executor re-engages the
// policy after a recovery.
struct PolicyGains {
  double gain_xy = 0.35;
  double gain_yaw = 0.06;
  double gain_z = 0.35;
  double jitter_white = 0.15;        // white jitter, fraction of the action step
  double wander_step = 0.2;          // x/y trim increment, fraction of the action step
  double wander_decay = 0.001;       // pull of the trim back toward zero
  double descend_gate_scale = 1.2;   // insert when observed error <= scale * tolerance
  double glide_gate_scale = 4.0;     // press onto the surface within this xy band
  double glide_depth = 0.001;        // how far below the top face the glide press aims
};

class ScriptedInsertionPolicy {
 public:
  ScriptedInsertionPolicy(const PolicyGains& g, const SimConfig& cfg)
      : g_(g), step_(cfg.action_step), tol_xy_(cfg.tol_xy), tol_yaw_(cfg.tol_yaw),
        yaw_period_(cfg.yaw_period()) {}

  // Five draws per call in fixed order (trim x/y, jitter x/y/yaw).
  PlanarPose act(const Observation& obs, Rng& rng) {
    trim_x_ = (1.0 - g_.wander_decay) * trim_x_ + rng.symmetric(g_.wander_step * step_.pos);
    trim_y_ = (1.0 - g_.wander_decay) * trim_y_ + rng.symmetric(g_.wander_step * step_.pos);
    const double jx = rng.symmetric(g_.jitter_white * step_.pos);
    const double jy = rng.symmetric(g_.jitter_white * step_.pos);
    const double jyaw = rng.symmetric(g_.jitter_white * step_.rot);

    const double ex = obs.goal_rel.x - obs.rel_pose.x;
    const double ey = obs.goal_rel.y - obs.rel_pose.y;
    const double eyaw = wrap_to_period(obs.goal_rel.yaw - obs.rel_pose.yaw, yaw_period_);
    const double ez = obs.goal_rel.z - obs.rel_pose.z;

    PlanarPose a;
    a.x = std::clamp(g_.gain_xy * ex + trim_x_ + jx, -step_.pos, step_.pos);
    a.y = std::clamp(g_.gain_xy * ey + trim_y_ + jy, -step_.pos, step_.pos);
    a.yaw = std::clamp(g_.gain_yaw * eyaw + jyaw, -step_.rot, step_.rot);
    // three-tier vertical behavior: insert when the fit looks right, press
    // onto the top face while searching nearby, hold altitude otherwise
    const double exy = xy_error(ex, ey);
    const double ayaw = std::abs(eyaw);
    if (exy <= g_.descend_gate_scale * tol_xy_ && ayaw <= g_.descend_gate_scale * tol_yaw_) {
      a.z = std::clamp(g_.gain_z * ez, -step_.pos, step_.pos);
    } else if (exy <= g_.glide_gate_scale * tol_xy_) {
      // positioned over the nut: press toward just below the top face and
      // search from there; never climb back out of the pocket
      a.z = std::clamp(g_.gain_z * (-g_.glide_depth - obs.rel_pose.z), -step_.pos, 0.0);
    } else {
      a.z = 0.0;
    }
    return a;
  }

  // Called when control is handed back after a recovery.
  void reset_search() { trim_x_ = trim_y_ = 0.0; }

 private:
  PolicyGains g_;
  ActionStep step_;
  double tol_xy_, tol_yaw_, yaw_period_;
  double trim_x_ = 0.0, trim_y_ = 0.0;
};

// Step toward the first sub-goal of the bounded path from the current pose to
// the pre-insertion pose. Both poses are expressed in the nut frame, so the
// target follows the nut if it has rotated since the episode began.
inline PlanarPose recovery_delta(const PlanarPose& current, const PlanarPose& pre_insertion,
                                 const ActionStep& step) {
  const auto path =
      interpolate_path(to_pose(current), to_pose(pre_insertion), {step.pos, step.rot});
  const PlanarPose g0 = to_planar(path.front());
  return {g0.x - current.x, g0.y - current.y, g0.z - current.z,
          wrap_angle(g0.yaw - current.yaw)};
}

enum class Mode : int { kInsert = 0, kRecover = 1 };

struct StepRecord {
  int t = 0;
  PlanarPose rel_pose;   // observation the controller acted on
  PlanarPose goal_rel;
  PlanarPose action;
  Mode mode = Mode::kInsert;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  Outcome outcome;
  std::uint64_t seed = 0;
  double final_nut_yaw = 0.0;  // lets rhythmic rounds carry the nut state over
};

struct ExecutorConfig {
  int recover_steps = 30;  // T_R: length of one recovery burst
  int history_len = 10;    // T_H: observation window for the failure monitor

  void validate() const {
    if (recover_steps < 1) throw std::invalid_argument("recover_steps must be >= 1");
    if (history_len < 1) throw std::invalid_argument("history_len must be >= 1");
  }
};

// What a failure monitor sees when consulted: the window of the most recent
// INSERT-mode observations (earliest first), the episode step, and the
// attempt step. The attempt clock restarts whenever a recovery hands control
// back, so a retry looks to the monitor like the fresh trial it is; before
// the first recovery the two clocks coincide, which is also the only regime
// present in (monitor-free) training data.
struct MonitorInput {
  std::span<const PlanarPose> window;
  int episode_step = 0;
  int attempt_step = 0;
};

using TriggerFn = std::function<bool(const MonitorInput&)>;

// Runs one episode to success or the step limit, arbitrating between the
// insertion policy and the lift-and-retry recovery.
//
//  - the trigger is consulted only in INSERT mode, and is suppressed for the
//    first history_len steps after a recovery hands control back so the
//    window refills with INSERT-mode observations;
//  - a firing trigger switches to RECOVER for exactly recover_steps steps
//    (fewer only if the episode ends first);
//  - the pre-insertion pose is the first observed relative pose; being a
//    nut-frame quantity it tracks the nut's current orientation.
inline Trajectory run_episode(const SimConfig& sim_cfg, const PolicyGains& gains,
                              const ExecutorConfig& exec_cfg, const TriggerFn* trigger,
                              std::uint64_t episode_seed,
                              std::optional<double> keep_nut_yaw = std::nullopt) {
  exec_cfg.validate();
  InsertionSim sim(sim_cfg);
  Observation obs = keep_nut_yaw
                        ? sim.reset_keep_nut(derive_seed(episode_seed, 0), *keep_nut_yaw)
                        : sim.reset(derive_seed(episode_seed, 0));
  Rng policy_rng(derive_seed(episode_seed, 1));
  ScriptedInsertionPolicy policy(gains, sim_cfg);

  const PlanarPose pre_insertion = obs.rel_pose;
  std::vector<PlanarPose> window;
  window.reserve(exec_cfg.history_len);
  window.push_back(obs.rel_pose);

  Trajectory traj;
  traj.seed = episode_seed;
  Mode mode = Mode::kInsert;
  int recover_left = 0;
  int suppress = 0;
  int attempt_step = 0;

  while (true) {
    if (mode == Mode::kInsert && trigger != nullptr && suppress == 0) {
      const MonitorInput in{std::span<const PlanarPose>(window), sim.state().t, attempt_step};
      if ((*trigger)(in)) {
        mode = Mode::kRecover;
        recover_left = exec_cfg.recover_steps;
      }
    }
    PlanarPose action;
    if (mode == Mode::kInsert) {
      action = policy.act(obs, policy_rng);
    } else {
      action = recovery_delta(obs.rel_pose, pre_insertion, sim_cfg.action_step);
    }
    const int t_now = sim.state().t;
    const auto res = sim.step(action);
    traj.steps.push_back({t_now, obs.rel_pose, obs.goal_rel, action, mode});
    obs = res.obs;

    if (mode == Mode::kRecover) {
      if (--recover_left == 0) {
        mode = Mode::kInsert;
        suppress = exec_cfg.history_len;
        window.clear();
        attempt_step = 0;
        policy.reset_search();
      }
    } else {
      if (suppress > 0) --suppress;
      ++attempt_step;
      window.push_back(obs.rel_pose);
      if (window.size() > static_cast<std::size_t>(exec_cfg.history_len))
        window.erase(window.begin());
    }

    if (res.success) {
      traj.outcome = {true, sim.state().t};
      break;
    }
    if (sim.state().t >= sim_cfg.max_steps) {
      traj.outcome = {false, sim_cfg.max_steps};
      break;
    }
  }
  traj.final_nut_yaw = sim.state().nut_yaw;
  return traj;
}

inline bool contains_recovery(const Trajectory& traj) {
  for (const auto& s : traj.steps)
    if (s.mode == Mode::kRecover) return true;
  return false;
}

}  // namespace rit
