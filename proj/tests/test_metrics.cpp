#include <cmath>
#include <sstream>

#include "doctest.h"
#include "snipper/error.hpp"
#include "snipper/metrics.hpp"

using namespace snipper;
using namespace snipper::metrics;
using geometry::Pose;

namespace {

const geometry::CameraIntrinsics kCam{80.0, 80.0, 32.0, 32.0};

// Person with every joint at camera-space (x, 0, 5) meters.
EvalPerson at(int id, double x, std::size_t joints = 3) {
  EvalPerson p;
  p.id = id;
  p.pose = Pose::zeros(joints);
  p.pose.root = {32.0 + x * 80.0 / 5.0, 32.0, 5.0};
  std::fill(p.pose.visibility.begin(), p.pose.visibility.end(), 1.0);
  return p;
}

}  // namespace

TEST_CASE("per-pose errors by hand") {
  const std::vector<Vec3> target{{0, 0, 5}, {0.3, 0, 5}, {0, 0.4, 5}};
  const std::vector<Vec3> pred{{0.1, 0, 5}, {0.3, 0.2, 5}, {9, 9, 9}};
  const std::vector<double> vis{1.0, 1.0, 0.0};
  CHECK(mpjpe(pred, target, vis) == doctest::Approx(150.0));
  // root-aligned: joint 0 -> 0, joint 1 -> |(-0.1, 0.2, 0)|
  CHECK(mpjpe_rel(pred, target, vis) == doctest::Approx(0.5 * 1000.0 * std::sqrt(0.05)));
  // 100 mm is inside 150, 200 mm is not; the hidden joint does not count
  CHECK(pck3d(pred, target, vis) == doctest::Approx(50.0));
  CHECK(pck3d(pred, target, vis, 100.0) == 0.0);  // strictly closer
  CHECK_THROWS_AS(mpjpe(pred, target, {0.0, 0.0, 0.0}), DegenerateError);
  CHECK_THROWS_AS(mpjpe(pred, {{0, 0, 5}}, vis), DimensionError);
}

TEST_CASE("people pair greedily by root distance within the gate") {
  const std::vector<EvalPerson> preds{at(0, 0.5), at(1, 0.0), at(2, 8.0)};
  const std::vector<EvalPerson> targets{at(10, 0.1), at(11, 0.9)};
  const auto pairs = match_people(preds, targets, kCam);
  REQUIRE(pairs.size() == 2);
  // closest pair first: (1, 0) at 0.1, then (0, 1) at 0.4
  CHECK(pairs[0].pred == 1);
  CHECK(pairs[0].target == 0);
  CHECK(pairs[1].pred == 0);
  CHECK(pairs[1].target == 1);
  CHECK(match_people(preds, targets, kCam, 0.05).empty());
}

TEST_CASE("joint-level F1 by hand") {
  EvalFrame f;
  EvalPerson p = at(0, 0.0), t = at(10, 0.0);
  p.pose.offsets[1] = {16.0, 0.0, 0.0};  // 1 m off
  t.pose.visibility[2] = 0.0;
  f.preds = {p, at(1, 20.0)};
  f.targets = {t, at(11, -20.0)};
  const auto c = f1_at({f}, kCam, 0.1);
  // matched: joint 0 hit, joint 1 miss, joint 2 hidden; 3 stray, 3 unfound
  CHECK(c.tp == 1);
  CHECK(c.fp == 4);
  CHECK(c.fn == 4);
  CHECK(c.precision == doctest::Approx(0.2));
  CHECK(c.recall == doctest::Approx(0.2));
  CHECK(c.f1 == doctest::Approx(0.2));
  const auto loose = f1_at({f}, kCam, 2.0);
  CHECK(loose.tp == 2);
  const auto none = f1_at({}, kCam, 0.1);
  CHECK(none.f1 == 0.0);
}

TEST_CASE("scene pose scores count unmatched targets as PCK misses") {
  EvalFrame f;
  f.preds = {at(0, 0.05)};
  f.targets = {at(10, 0.0), at(11, 5.0)};
  const auto s = pose_scores({f}, kCam);
  CHECK(s.matched_joints == 3);
  CHECK(s.target_joints == 6);
  CHECK(s.mpjpe == doctest::Approx(50.0));
  CHECK(s.mpjpe_rel == doctest::Approx(0.0));
  CHECK(s.pck == doctest::Approx(50.0));
}

TEST_CASE("CLEAR-MOT counts by hand") {
  std::vector<EvalFrame> frames(4);
  // 0: both matched
  frames[0].targets = {at(10, 0.0), at(11, 3.0)};
  frames[0].preds = {at(1, 0.1), at(2, 3.1)};
  // 1: predictions swap places -> two id switches
  frames[1].targets = {at(10, 0.0), at(11, 3.0)};
  frames[1].preds = {at(1, 3.0), at(2, 0.05)};
  // 2: target 11 missed, stray prediction
  frames[2].targets = {at(10, 0.0), at(11, 3.0)};
  frames[2].preds = {at(2, 0.0), at(3, 10.0)};
  // 3: target 10 keeps prediction 2 inside the gate although 4 is closer
  frames[3].targets = {at(10, 0.0), at(11, 3.0)};
  frames[3].preds = {at(2, 0.9), at(4, 0.0)};
  const auto r = mota(frames, kCam);
  CHECK(r.targets == 8);
  CHECK(r.matches == 6);
  CHECK(r.id_switches == 2);
  CHECK(r.misses == 2);
  CHECK(r.false_positives == 2);
  CHECK(r.mota == doctest::Approx(25.0));
  std::size_t switches = 0;
  for (const auto& e : r.events)
    if (e.kind == MotEventKind::kIdSwitch) {
      ++switches;
      CHECK(e.frame == 1);
    }
  CHECK(switches == 2);
  CHECK(event_name(MotEventKind::kIdSwitch) == "id-switch");

  std::vector<EvalFrame> empty(2);
  empty[0].preds = {at(1, 0.0)};
  CHECK_THROWS_AS(mota(empty, kCam), DegenerateError);
}

TEST_CASE("perfect tracking scores 100") {
  std::vector<EvalFrame> frames(5);
  for (std::size_t f = 0; f < 5; ++f) {
    frames[f].targets = {at(10, 0.1 * static_cast<double>(f)), at(11, 2.0)};
    frames[f].preds = {at(7, 0.1 * static_cast<double>(f)), at(8, 2.0)};
  }
  const auto r = mota(frames, kCam);
  CHECK(r.mota == 100.0);
  CHECK(r.id_switches == 0);
  CHECK(pose_scores(frames, kCam).pck == 100.0);
  CHECK(pose_scores(frames, kCam).mpjpe == 0.0);
}

TEST_CASE("path error per horizon step") {
  const std::vector<std::vector<Vec3>> forecasts{{{0, 0, 5}, {0, 0, 5}}, {{1, 0, 5}, {1, 0, 5}}};
  const std::vector<std::vector<Vec3>> targets{{{0.3, 0.4, 5}, {0, 0, 6}}, {{1, 0, 5}, {1, 0, 5}}};
  const auto e = path_error(forecasts, targets);
  REQUIRE(e.size() == 2);
  CHECK(e[0] == doctest::Approx(250.0));
  CHECK(e[1] == doctest::Approx(500.0));
  CHECK_THROWS_AS(path_error({{{0, 0, 1}}}, {}), DimensionError);
}

TEST_CASE("metric csv layout") {
  std::ostringstream out;
  write_csv(out, {{"mota:val:0", 62.5, 40}, {"pck:val:1", 1.0 / 3.0, 9}});
  CHECK(out.str() == "metric,value,count\nmota:val:0,62.5,40\npck:val:1,0.333333333,9\n");
  CHECK(format_real(1e-12) == "1e-12");
}
