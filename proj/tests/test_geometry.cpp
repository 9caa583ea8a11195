#include <cmath>

#include "doctest.h"
#include "snipper/error.hpp"
#include "snipper/geometry.hpp"
#include "snipper/rng.hpp"

using namespace snipper;
using namespace snipper::geometry;

namespace {

CameraIntrinsics cam() { return {80.0, 80.0, 32.0, 32.0}; }

Pose random_pose(Rng& rng) {
  Pose p = Pose::zeros(kDefaultJoints);
  p.root = {rng.uniform(0, 64), rng.uniform(0, 64), rng.uniform(3, 8)};
  for (auto& o : p.offsets) o = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-0.3, 0.3)};
  return p;
}

}  // namespace

TEST_CASE("lift and project are inverse") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 j{rng.uniform(-20, 80), rng.uniform(-20, 80), rng.uniform(0.5, 10)};
    const Vec3 back = project_to_2p5d(lift_to_3d(j, cam()), cam());
    for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(j[a]).epsilon(1e-12));
  }
  // (x - cx) d / fx by hand
  const Vec3 p = lift_to_3d({48.0, 16.0, 5.0}, cam());
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(-1.0));
  CHECK(p[2] == 5.0);
}

TEST_CASE("star pose compose/decompose round trip") {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng);
    const auto joints = compose_joints(p);
    REQUIRE(joints.size() == kDefaultJoints);
    const auto offsets = decompose_joints(joints, p.root);
    for (std::size_t k = 0; k < kDefaultJoints; ++k)
      for (int a = 0; a < 3; ++a) CHECK(offsets[k][a] == doctest::Approx(p.offsets[k][a]).epsilon(1e-12));
  }
}

TEST_CASE("offset normalization uses root depth and focal length") {
  Rng rng(3);
  const Vec3 o{8.0, -4.0, 0.2};
  const Vec3 n = normalize_offset(o, 5.0, cam());
  CHECK(n[0] == doctest::Approx(0.5));
  CHECK(n[1] == doctest::Approx(-0.25));
  CHECK(n[2] == 0.2);
  for (int i = 0; i < 100; ++i) {
    const Vec3 v{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-1, 1)};
    const double d = rng.uniform(1, 9);
    const Vec3 back = denormalize_offset(normalize_offset(v, d, cam()), d, cam());
    for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(v[a]).epsilon(1e-12));
  }
}

TEST_CASE("pose_to_3d lifts every composed joint") {
  Rng rng(4);
  const Pose p = random_pose(rng);
  const auto lifted = pose_to_3d(p, cam());
  const auto joints = compose_joints(p);
  for (std::size_t k = 0; k < joints.size(); ++k) {
    const Vec3 e = lift_to_3d(joints[k], cam());
    CHECK(distance(lifted[k], e) < 1e-12);
  }
}

TEST_CASE("camera validation and probability clamping") {
  CHECK_THROWS_AS((CameraIntrinsics{0.0, 1.0, 0.0, 0.0}.validate()), DomainError);
  CHECK_NOTHROW(cam().validate());
  Pose p = Pose::zeros(3);
  p.visibility = {-0.2, 0.5, 1.7};
  p.occurrence = 2.0;
  p.clamp_probabilities();
  CHECK(p.visibility[0] == 0.0);
  CHECK(p.visibility[2] == 1.0);
  CHECK(p.occurrence == 1.0);
}
