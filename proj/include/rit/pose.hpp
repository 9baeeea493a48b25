#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rit/rng.hpp"

namespace rit {

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double from_degrees(double d) { return d * kPi / 180.0; }
inline constexpr double to_degrees(double r) { return r * 180.0 / kPi; }

// wrap to (-pi, pi]
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

// fold into the symmetric sector (-period/2, period/2]
inline double wrap_to_period(double a, double period) {
  double w = std::remainder(a, period);
  if (w <= -0.5 * period) w += period;
  return w;
}

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v[0], s * v[1], s * v[2]}; }
inline double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// Unit quaternion, scalar-first (w, x, y, z).
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quat conjugate() const { return {w, -x, -y, -z}; }

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  Vec3 rotate(const Vec3& v) const {
    // q v q*
    const Quat p{0.0, v[0], v[1], v[2]};
    const Quat r = (*this) * p * conjugate();
    return {r.x, r.y, r.z};
  }

  static Quat from_yaw(double yaw) { return {std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw)}; }
};

inline double dot(const Quat& a, const Quat& b) { return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z; }

// Rigid transform: rotation then translation.
struct Pose {
  Quat rot;
  Vec3 t{0.0, 0.0, 0.0};
};

inline Pose identity_pose() { return {}; }

// a then b is the transform mapping a point through b first: (a*b)(p) = a(b(p)).
// Quaternions are renormalized after every product so that long chains
// (episodes run for hundreds of compositions) never drift off the unit sphere.
inline Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rot = (a.rot * b.rot).normalized();
  out.t = a.rot.rotate(b.t) + a.t;
  return out;
}

inline Pose inverse(const Pose& p) {
  Pose out;
  out.rot = p.rot.conjugate().normalized();
  out.t = -1.0 * out.rot.rotate(p.t);
  return out;
}

// Pose of the tool expressed in the object's frame. Invariant under any
// common rigid motion applied to both inputs, which is what makes policies
// built on it placement- and embodiment-independent.
inline Pose relative(const Pose& tool_cam, const Pose& obj_cam) {
  return compose(inverse(obj_cam), tool_cam);
}

inline double translation_distance(const Pose& a, const Pose& b) { return norm(a.t - b.t); }

// Geodesic angle between the two rotations, 2*acos(|<q1,q2>|), evaluated in
// the atan2 form which stays accurate near zero where acos loses precision.
inline double rotation_distance(const Pose& a, const Pose& b) {
  Quat q2 = b.rot;
  if (dot(a.rot, q2) < 0.0) q2 = {-q2.w, -q2.x, -q2.y, -q2.z};
  const Quat diff{a.rot.w - q2.w, a.rot.x - q2.x, a.rot.y - q2.y, a.rot.z - q2.z};
  const Quat sum{a.rot.w + q2.w, a.rot.x + q2.x, a.rot.y + q2.y, a.rot.z + q2.z};
  return 4.0 * std::atan2(diff.norm(), sum.norm());
}

inline Quat slerp(const Quat& a, const Quat& b, double u) {
  Quat bb = b;
  double d = dot(a, bb);
  if (d < 0.0) {  // shortest arc
    bb = {-b.w, -b.x, -b.y, -b.z};
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    // nearly parallel: linear blend, then renormalize
    Quat q{a.w + u * (bb.w - a.w), a.x + u * (bb.x - a.x), a.y + u * (bb.y - a.y),
           a.z + u * (bb.z - a.z)};
    return q.normalized();
  }
  const double theta = std::acos(d);
  const double s = std::sin(theta);
  const double ca = std::sin((1.0 - u) * theta) / s;
  const double cb = std::sin(u * theta) / s;
  Quat q{ca * a.w + cb * bb.w, ca * a.x + cb * bb.x, ca * a.y + cb * bb.y, ca * a.z + cb * bb.z};
  return q.normalized();
}

// per-sub-goal motion limits
struct StepLimit {
  double pos;  // meters
  double rot;  // radians
};

// Straight-line/geodesic path from `from` to `to`, split into the smallest
// number of sub-goals such that consecutive poses differ by at most
// max_step.pos in translation and max_step.rot in rotation angle. The final
// element is exactly `to`; `from` itself is not included.
inline std::vector<Pose> interpolate_path(const Pose& from, const Pose& to, StepLimit max_step) {
  if (!(max_step.pos > 0.0) || !(max_step.rot > 0.0))
    throw std::invalid_argument("interpolate_path: max_step components must be positive");
  const double d_pos = translation_distance(from, to);
  const double d_rot = rotation_distance(from, to);
  const double ratio = std::max(d_pos / max_step.pos, d_rot / max_step.rot);
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio)));
  std::vector<Pose> path;
  path.reserve(n);
  for (std::size_t k = 1; k < n; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(n);
    Pose p;
    p.rot = slerp(from.rot, to.rot, u);
    p.t = from.t + u * (to.t - from.t);
    path.push_back(p);
  }
  path.push_back(to);
  return path;
}

// Uniform position noise on each translation axis and uniform yaw noise about
// the world z axis; roll and pitch are untouched. Draw order is fixed
// (x, y, z, yaw) so that streams replay identically.
inline Pose perturb(const Pose& p, double pos_noise, double yaw_noise, Rng& rng) {
  if (pos_noise < 0.0 || yaw_noise < 0.0)
    throw std::invalid_argument("perturb: noise bounds must be >= 0");
  Pose out;
  out.t = {p.t[0] + rng.symmetric(pos_noise), p.t[1] + rng.symmetric(pos_noise),
           p.t[2] + rng.symmetric(pos_noise)};
  const double dyaw = rng.symmetric(yaw_noise);
  out.rot = (Quat::from_yaw(dyaw) * p.rot).normalized();
  return out;
}

// 4-DOF pose used by the surrogate environment: position plus yaw,
// yaw kept in (-pi, pi].
struct PlanarPose {
  double x = 0.0, y = 0.0, z = 0.0, yaw = 0.0;
};

inline Pose to_pose(const PlanarPose& p) {
  return {Quat::from_yaw(p.yaw), {p.x, p.y, p.z}};
}

// ZYX yaw extraction; exact round-trip for roll = pitch = 0.
inline PlanarPose to_planar(const Pose& p) {
  const Quat& q = p.rot;
  const double yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
  return {p.t[0], p.t[1], p.t[2], wrap_angle(yaw)};
}

inline PlanarPose perturb_planar(const PlanarPose& p, double pos_noise, double yaw_noise, Rng& rng) {
  if (pos_noise < 0.0 || yaw_noise < 0.0)
    throw std::invalid_argument("perturb_planar: noise bounds must be >= 0");
  PlanarPose out;
  out.x = p.x + rng.symmetric(pos_noise);
  out.y = p.y + rng.symmetric(pos_noise);
  out.z = p.z + rng.symmetric(pos_noise);
  out.yaw = wrap_angle(p.yaw + rng.symmetric(yaw_noise));
  return out;
}

// wire layout used by every file format: [qw, qx, qy, qz, tx, ty, tz]
inline std::array<double, 7> to_array7(const Pose& p) {
  return {p.rot.w, p.rot.x, p.rot.y, p.rot.z, p.t[0], p.t[1], p.t[2]};
}

inline Pose from_array7(const std::array<double, 7>& a) {
  Pose p;
  p.rot = Quat{a[0], a[1], a[2], a[3]}.normalized();
  p.t = {a[4], a[5], a[6]};
  return p;
}

}  // namespace rit
