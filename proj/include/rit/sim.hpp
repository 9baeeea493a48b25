#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "rit/pose.hpp"
#include "rit/rng.hpp"

namespace rit {

// Per-axis action bounds; pos applies to x, y and z independently.
struct ActionStep {
  double pos = 0.001;
  double rot = from_degrees(3.0);
};

// Kinematic surrogate of the wrench-on-nut insertion environment. The nut
// sits at the world origin with its top face at z = 0 and is free to rotate
// about the bolt axis; the tool is position-controlled in 4 DOF.
struct SimConfig {
  double friction_mu = 0.0;                      // tool-nut rotational coupling
  double tol_xy = 0.0015;                        // goal tolerance, meters
  double tol_yaw = from_degrees(3.0);            // goal tolerance per symmetry sector
  double insert_depth = 0.010;                   // required descent below the top face
  double init_xy_range = 0.01;                   // reset: tool xy uniform in +-range
  double init_z_min = 0.005;                     // reset: height above the top face
  double init_z_max = 0.010;
  double init_yaw_range = from_degrees(10.0);    // reset: yaw offset from the nut
  double obs_pos_noise = 0.002;                  // observation noise, per axis
  double obs_yaw_noise = from_degrees(10.0);
  int max_steps = 255;                           // episode limit T
  ActionStep action_step;
  int nut_symmetry_order = 6;                    // hex nut
  double nut_width = 0.046;                      // side-to-side, caps the drag lever arm
  double drag_gain = 200000.0;                   // rad of nut rotation per m^2 of contact moment
  double drag_clamp = from_degrees(2.0);         // per-step bound on drag-induced rotation
  double goal_z_overshoot = 0.002;               // commanded depth beyond insert_depth

  void validate() const {
    if (friction_mu < 0.0) throw std::invalid_argument("friction_mu must be >= 0");
    if (tol_xy < 0.0 || tol_yaw < 0.0) throw std::invalid_argument("tolerances must be >= 0");
    if (insert_depth < 0.0) throw std::invalid_argument("insert_depth must be >= 0");
    if (init_xy_range < 0.0 || init_yaw_range < 0.0)
      throw std::invalid_argument("init ranges must be >= 0");
    if (init_z_min < 0.0 || init_z_max < init_z_min)
      throw std::invalid_argument("init_z range must satisfy 0 <= min <= max");
    if (obs_pos_noise < 0.0 || obs_yaw_noise < 0.0)
      throw std::invalid_argument("observation noise must be >= 0");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    if (!(action_step.pos > 0.0) || !(action_step.rot > 0.0))
      throw std::invalid_argument("action_step must be positive");
    if (nut_symmetry_order < 1) throw std::invalid_argument("nut_symmetry_order must be >= 1");
    if (nut_width <= 0.0) throw std::invalid_argument("nut_width must be > 0");
    if (drag_gain < 0.0 || drag_clamp < 0.0)
      throw std::invalid_argument("drag parameters must be >= 0");
  }

  double yaw_period() const { return 2.0 * kPi / nut_symmetry_order; }

  // goal pose of the tool in the nut frame
  PlanarPose goal_rel() const { return {0.0, 0.0, -(insert_depth + goal_z_overshoot), 0.0}; }
};

struct SimState {
  PlanarPose tool;          // world frame; z measured from the nut top face
  double nut_yaw = 0.0;     // free rotation about the bolt axis, (-pi, pi]
  int t = 0;
  bool in_contact = false;  // last step was a blocked, misaligned press
};

struct Observation {
  PlanarPose rel_pose;  // tool in the nut frame, noise injected
  PlanarPose goal_rel;
  int t = 0;
};

struct Outcome {
  bool success = false;
  int success_time = 0;  // equals max_steps when the episode failed
};

inline PlanarPose tool_in_nut_frame(const SimState& s) {
  const Pose nut = to_pose(PlanarPose{0.0, 0.0, 0.0, s.nut_yaw});
  return to_planar(relative(to_pose(s.tool), nut));
}

inline double xy_error(double x, double y) { return std::hypot(x, y); }

inline double yaw_error(double tool_yaw, double nut_yaw, const SimConfig& cfg) {
  return std::abs(wrap_to_period(tool_yaw - nut_yaw, cfg.yaw_period()));
}

inline bool aligned_with_nut(double x, double y, double yaw, double nut_yaw, const SimConfig& cfg) {
  return xy_error(x, y) <= cfg.tol_xy && yaw_error(yaw, nut_yaw, cfg) <= cfg.tol_yaw;
}

inline bool is_success(const SimState& s, const SimConfig& cfg) {
  return aligned_with_nut(s.tool.x, s.tool.y, s.tool.yaw, s.nut_yaw, cfg) &&
         s.tool.z <= -cfg.insert_depth;
}

inline PlanarPose clamp_action(const PlanarPose& a, const ActionStep& step) {
  return {std::clamp(a.x, -step.pos, step.pos), std::clamp(a.y, -step.pos, step.pos),
          std::clamp(a.z, -step.pos, step.pos), std::clamp(a.yaw, -step.rot, step.rot)};
}

// Draw order: nut yaw, rel x, rel y, rel z, rel yaw.
inline SimState sample_initial_state(const SimConfig& cfg, Rng& rng) {
  SimState s;
  s.nut_yaw = wrap_angle(rng.uniform(-kPi, kPi));
  const double rx = rng.symmetric(cfg.init_xy_range);
  const double ry = rng.symmetric(cfg.init_xy_range);
  const double rz = rng.uniform(cfg.init_z_min, cfg.init_z_max);
  const double ryaw = rng.symmetric(cfg.init_yaw_range);
  const double c = std::cos(s.nut_yaw), sn = std::sin(s.nut_yaw);
  s.tool.x = c * rx - sn * ry;
  s.tool.y = sn * rx + c * ry;
  s.tool.z = rz;
  s.tool.yaw = wrap_angle(s.nut_yaw + ryaw);
  return s;
}

inline Observation observe(const SimState& s, const SimConfig& cfg, Rng& rng) {
  Observation o;
  o.rel_pose = perturb_planar(tool_in_nut_frame(s), cfg.obs_pos_noise, cfg.obs_yaw_noise, rng);
  o.goal_rel = cfg.goal_rel();
  o.t = s.t;
  return o;
}

// One tick of the surrogate dynamics. The action is a displacement of the
// tool expressed in the nut frame, clamped per axis before application.
//
//  - above the top face the tool moves freely;
//  - a press across the top face while misaligned is blocked at z = 0 and
//    couples the nut through friction: the nut picks up friction_mu times the
//    commanded yaw delta plus a bounded term from the xy sweep of the contact
//    point (the lever arm is capped at half the nut width);
//  - an aligned press enters the pocket; inside, the walls confine xy and yaw
//    to the goal tolerance while vertical motion stays free.
//
// Pure function of (state, action, config): observation noise is the only
// stochastic element of the environment and lives in observe().
inline SimState apply_action(const SimState& s, const PlanarPose& raw_action, const SimConfig& cfg) {
  if (s.t >= cfg.max_steps)
    throw std::logic_error("apply_action: episode already at the step limit");
  const PlanarPose a = clamp_action(raw_action, cfg.action_step);
  const double c = std::cos(s.nut_yaw), sn = std::sin(s.nut_yaw);
  const double wx = c * a.x - sn * a.y;
  const double wy = sn * a.x + c * a.y;

  SimState n = s;
  n.in_contact = false;
  double nx = s.tool.x + wx;
  double ny = s.tool.y + wy;
  double nyaw = wrap_angle(s.tool.yaw + a.yaw);
  double nz = s.tool.z + a.z;

  if (s.tool.z < 0.0) {
    // already in the pocket: walls hold alignment, z is unconstrained
    const double r = xy_error(nx, ny);
    if (r > cfg.tol_xy) {
      nx *= cfg.tol_xy / r;
      ny *= cfg.tol_xy / r;
    }
    const double ye = wrap_to_period(nyaw - s.nut_yaw, cfg.yaw_period());
    if (std::abs(ye) > cfg.tol_yaw)
      nyaw = wrap_angle(nyaw - ye + std::clamp(ye, -cfg.tol_yaw, cfg.tol_yaw));
  } else if (nz < 0.0 && !aligned_with_nut(nx, ny, nyaw, s.nut_yaw, cfg)) {
    // misaligned press: blocked at the rim, friction drags the nut
    nz = 0.0;
    n.in_contact = true;
    const double r = xy_error(nx, ny);
    double lx = nx, ly = ny;
    const double arm_cap = 0.5 * cfg.nut_width;
    if (r > arm_cap) {
      lx *= arm_cap / r;
      ly *= arm_cap / r;
    }
    const double moment = lx * wy - ly * wx;
    const double drag = std::clamp(cfg.drag_gain * moment, -cfg.drag_clamp, cfg.drag_clamp);
    n.nut_yaw = wrap_angle(s.nut_yaw + cfg.friction_mu * (a.yaw + drag));
  }

  n.tool = {nx, ny, nz, nyaw};
  n.t = s.t + 1;
  return n;
}

class InsertionSim {
 public:
  explicit InsertionSim(SimConfig cfg) : cfg_(std::move(cfg)), rng_(0) { cfg_.validate(); }

  Observation reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    state_ = sample_initial_state(cfg_, rng_);
    return observe(state_, cfg_, rng_);
  }

  // Rhythmic rounds keep the nut where the previous round left it: only the
  // tool is re-placed above the current nut orientation.
  Observation reset_keep_nut(std::uint64_t seed, double nut_yaw) {
    rng_ = Rng(seed);
    SimState s;
    s.nut_yaw = wrap_angle(nut_yaw);
    const double rx = rng_.symmetric(cfg_.init_xy_range);
    const double ry = rng_.symmetric(cfg_.init_xy_range);
    const double rz = rng_.uniform(cfg_.init_z_min, cfg_.init_z_max);
    const double ryaw = rng_.symmetric(cfg_.init_yaw_range);
    const double c = std::cos(s.nut_yaw), sn = std::sin(s.nut_yaw);
    s.tool = {c * rx - sn * ry, sn * rx + c * ry, rz, wrap_angle(s.nut_yaw + ryaw)};
    state_ = s;
    return observe(state_, cfg_, rng_);
  }

  struct StepResult {
    Observation obs;
    bool success = false;
    bool blocked = false;
  };

  StepResult step(const PlanarPose& action) {
    state_ = apply_action(state_, action, cfg_);
    StepResult r;
    r.obs = observe(state_, cfg_, rng_);
    r.success = is_success(state_, cfg_);
    r.blocked = state_.in_contact;
    return r;
  }

  const SimState& state() const { return state_; }
  const SimConfig& config() const { return cfg_; }

 private:
  SimConfig cfg_;
  SimState state_;
  Rng rng_;
};

}  // namespace rit
