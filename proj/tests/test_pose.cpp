#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "rit/pose.hpp"
#include "rit/rng.hpp"

using namespace rit;

namespace {

// Independent oracle: 4x4 homogeneous matrices.
using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 to_mat(const Pose& p) {
  const Quat& q = p.rot;
  Mat4 m{};
  m[0][0] = 1 - 2 * (q.y * q.y + q.z * q.z);
  m[0][1] = 2 * (q.x * q.y - q.w * q.z);
  m[0][2] = 2 * (q.x * q.z + q.w * q.y);
  m[1][0] = 2 * (q.x * q.y + q.w * q.z);
  m[1][1] = 1 - 2 * (q.x * q.x + q.z * q.z);
  m[1][2] = 2 * (q.y * q.z - q.w * q.x);
  m[2][0] = 2 * (q.x * q.z - q.w * q.y);
  m[2][1] = 2 * (q.y * q.z + q.w * q.x);
  m[2][2] = 1 - 2 * (q.x * q.x + q.y * q.y);
  for (int i = 0; i < 3; ++i) m[i][3] = p.t[i];
  m[3][3] = 1.0;
  return m;
}

Mat4 mat_mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// rigid-transform inverse: R^T, -R^T t
Mat4 mat_inverse(const Mat4& m) {
  Mat4 inv{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv[i][j] = m[j][i];
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += inv[i][j] * m[j][3];
    inv[i][3] = -s;
  }
  inv[3][3] = 1.0;
  return inv;
}

double mat_diff(const Mat4& a, const Mat4& b) {
  double d = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
  return d;
}

Pose random_pose(Rng& rng) {
  // uniform-ish rotation from 4 gaussian-free draws, normalized
  Quat q{rng.symmetric(1.0), rng.symmetric(1.0), rng.symmetric(1.0), rng.symmetric(1.0)};
  if (q.norm() < 1e-3) q = Quat{1, 0, 0, 0};
  Pose p;
  p.rot = q.normalized();
  p.t = {rng.symmetric(2.0), rng.symmetric(2.0), rng.symmetric(2.0)};
  return p;
}

bool near_identity(const Pose& p, double tol = 1e-9) {
  return rotation_distance(p, identity_pose()) <= tol && norm(p.t) <= tol;
}

}  // namespace

TEST_CASE("compose: identity is neutral") {
  Rng rng(11);
  const Pose p = random_pose(rng);
  const Pose a = compose(identity_pose(), p);
  const Pose b = compose(p, identity_pose());
  CHECK(translation_distance(a, p) < 1e-12);
  CHECK(rotation_distance(a, p) < 1e-12);
  CHECK(translation_distance(b, p) < 1e-12);
  CHECK(rotation_distance(b, p) < 1e-12);
}

TEST_CASE("compose: inverse cancels") {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    CHECK(near_identity(compose(p, inverse(p))));
    CHECK(near_identity(compose(inverse(p), p)));
  }
}

TEST_CASE("compose: yaw 30 then yaw 60 is yaw 90, against the matrix oracle") {
  const Pose a = to_pose(PlanarPose{0, 0, 0, from_degrees(30)});
  const Pose b = to_pose(PlanarPose{0, 0, 0, from_degrees(60)});
  const Pose ab = compose(a, b);
  CHECK(std::abs(to_planar(ab).yaw - from_degrees(90)) < 1e-12);
  CHECK(mat_diff(to_mat(ab), mat_mul(to_mat(a), to_mat(b))) < 1e-12);
}

TEST_CASE("compose matches the homogeneous-matrix oracle on random pairs") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    CHECK(mat_diff(to_mat(compose(a, b)), mat_mul(to_mat(a), to_mat(b))) < 1e-12);
  }
}

TEST_CASE("compose is associative") {
  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose l = compose(compose(a, b), c);
    const Pose r = compose(a, compose(b, c));
    CHECK(translation_distance(l, r) < 1e-9);
    CHECK(rotation_distance(l, r) < 1e-9);
  }
}

TEST_CASE("inverse: trivial cases and the matrix oracle") {
  CHECK(near_identity(inverse(identity_pose())));
  Pose tr;
  tr.t = {1, 2, 3};
  const Pose inv = inverse(tr);
  CHECK(inv.t[0] == -1.0);
  CHECK(inv.t[1] == -2.0);
  CHECK(inv.t[2] == -3.0);
  CHECK(rotation_distance(inv, identity_pose()) < 1e-12);

  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    CHECK(mat_diff(to_mat(inverse(p)), mat_inverse(to_mat(p))) < 1e-9);
  }
}

TEST_CASE("quaternion norm stays within 1e-9 of one over long chains") {
  Rng rng(16);
  Pose acc = identity_pose();
  for (int i = 0; i < 2000; ++i) {
    acc = compose(acc, random_pose(rng));
    CHECK(std::abs(acc.rot.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("relative: equal frames give the identity") {
  Rng rng(17);
  const Pose p = random_pose(rng);
  CHECK(near_identity(relative(p, p)));
}

TEST_CASE("relative is invariant to a common frame change") {
  Rng rng(18);
  for (int i = 0; i < 200; ++i) {
    const Pose g = random_pose(rng), a = random_pose(rng), b = random_pose(rng);
    const Pose r1 = relative(a, b);
    const Pose r2 = relative(compose(g, a), compose(g, b));
    CHECK(translation_distance(r1, r2) < 1e-9);
    CHECK(rotation_distance(r1, r2) < 1e-9);
  }
}

TEST_CASE("relative: numeric case against the matrix oracle") {
  // object at yaw 90 deg translated (1,0,0); tool at the identity
  const Pose obj = to_pose(PlanarPose{1, 0, 0, from_degrees(90)});
  const Pose tool = identity_pose();
  const Pose rel = relative(tool, obj);
  const Mat4 expect = mat_mul(mat_inverse(to_mat(obj)), to_mat(tool));
  CHECK(mat_diff(to_mat(rel), expect) < 1e-12);
  // inv(obj) maps the origin to (0, 1, 0) after the -90 deg rotation
  CHECK(std::abs(rel.t[0] - 0.0) < 1e-12);
  CHECK(std::abs(rel.t[1] - 1.0) < 1e-12);
  CHECK(std::abs(to_planar(rel).yaw + from_degrees(90)) < 1e-12);
}

TEST_CASE("interpolate_path: degenerate and arithmetic cases") {
  const Pose p = to_pose(PlanarPose{0.3, -0.1, 0.2, 0.4});
  const auto same = interpolate_path(p, p, {0.01, 0.01});
  REQUIRE(same.size() == 1);
  CHECK(translation_distance(same[0], p) == 0.0);

  // 0.05 m translation at 0.01 m steps: five sub-goals, evenly spaced
  const Pose from = identity_pose();
  Pose to = identity_pose();
  to.t = {0.05, 0, 0};
  const auto path = interpolate_path(from, to, {0.01, 0.1});
  REQUIRE(path.size() == 5);
  Pose prev = from;
  for (const Pose& q : path) {
    CHECK(translation_distance(prev, q) == Catch::Approx(0.01).margin(1e-12));
    prev = q;
  }
  CHECK(translation_distance(path.back(), to) == 0.0);

  // rotation-only 90 deg at 10 deg steps: ceil(9) = 9 sub-goals
  const Pose rot_to = to_pose(PlanarPose{0, 0, 0, from_degrees(90)});
  const auto rpath = interpolate_path(from, rot_to, {0.01, from_degrees(10)});
  CHECK(rpath.size() == 9);
}

TEST_CASE("interpolate_path: spacing bound holds on random endpoints") {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const StepLimit lim{rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)};
    const auto path = interpolate_path(a, b, lim);
    Pose prev = a;
    for (const Pose& q : path) {
      CHECK(translation_distance(prev, q) <= lim.pos + 1e-12);
      CHECK(rotation_distance(prev, q) <= lim.rot + 1e-9);
      prev = q;
    }
    CHECK(translation_distance(path.back(), b) == 0.0);
    const double expect = std::max(translation_distance(a, b) / lim.pos,
                                   rotation_distance(a, b) / lim.rot);
    CHECK(path.size() == std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(expect))));
  }
}

TEST_CASE("interpolate_path rejects non-positive steps") {
  const Pose p = identity_pose();
  CHECK_THROWS_AS(interpolate_path(p, p, {0.0, 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(interpolate_path(p, p, {0.1, -0.1}), std::invalid_argument);
}

TEST_CASE("perturb: zero noise leaves the pose unchanged") {
  Rng rng(20);
  const Pose p = random_pose(rng);
  const Pose q = perturb(p, 0.0, 0.0, rng);
  CHECK(translation_distance(p, q) == 0.0);
  CHECK(rotation_distance(p, q) < 1e-12);
}

TEST_CASE("perturb: samples stay inside the stated bounds") {
  // 2 mm position / 10 deg yaw windows
  Rng rng(21);
  const Pose base = to_pose(PlanarPose{0.1, -0.2, 0.05, 0.3});
  for (int i = 0; i < 10000; ++i) {
    const Pose q = perturb(base, 0.002, from_degrees(10), rng);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(q.t[k] - base.t[k]) <= 0.002);
    const PlanarPose pl = to_planar(q);
    CHECK(std::abs(wrap_angle(pl.yaw - 0.3)) <= from_degrees(10) + 1e-12);
  }
}

TEST_CASE("perturb: offsets are zero-mean") {
  Rng rng(22);
  const Pose base = identity_pose();
  double mx = 0, my = 0, mz = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Pose q = perturb(base, 0.002, from_degrees(10), rng);
    mx += q.t[0];
    my += q.t[1];
    mz += q.t[2];
  }
  CHECK(std::abs(mx / n) < 1e-4);
  CHECK(std::abs(my / n) < 1e-4);
  CHECK(std::abs(mz / n) < 1e-4);
}

TEST_CASE("perturb rejects negative bounds") {
  Rng rng(23);
  CHECK_THROWS_AS(perturb(identity_pose(), -0.001, 0.0, rng), std::invalid_argument);
}

TEST_CASE("planar round-trip is lossless for roll = pitch = 0") {
  Rng rng(24);
  for (int i = 0; i < 1000; ++i) {
    PlanarPose p{rng.symmetric(1.0), rng.symmetric(1.0), rng.symmetric(1.0),
                 rng.uniform(-kPi, kPi)};
    if (p.yaw <= -kPi) p.yaw = kPi;
    const PlanarPose q = to_planar(to_pose(p));
    CHECK(std::abs(q.x - p.x) < 1e-9);
    CHECK(std::abs(q.y - p.y) < 1e-9);
    CHECK(std::abs(q.z - p.z) < 1e-9);
    CHECK(std::abs(wrap_angle(q.yaw - p.yaw)) < 1e-9);
  }
}

TEST_CASE("pose wire layout is [qw qx qy qz tx ty tz]") {
  Rng rng(25);
  const Pose p = random_pose(rng);
  const auto a = to_array7(p);
  CHECK(a[0] == p.rot.w);
  CHECK(a[4] == p.t[0]);
  const Pose q = from_array7(a);
  CHECK(translation_distance(p, q) == 0.0);
  CHECK(rotation_distance(p, q) < 1e-12);
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(wrap_angle(kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(-kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(3 * kPi) == Catch::Approx(kPi));
  CHECK(std::abs(wrap_angle(2 * kPi)) < 1e-12);
  Rng rng(26);
  for (int i = 0; i < 1000; ++i) {
    const double w = wrap_angle(rng.symmetric(50.0));
    CHECK(w > -kPi);
    CHECK(w <= kPi);
  }
}
