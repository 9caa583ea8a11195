#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "snipper/error.hpp"
#include "snipper/synth.hpp"
#include "support/tempdir.hpp"

using namespace snipper;
using namespace snipper::synth;

namespace {

SceneConfig config(std::size_t people, std::uint64_t seed) {
  SceneConfig c;
  c.people = people;
  c.frames = 12;
  c.seed = seed;
  return c;
}

double bone(const Person& p, std::size_t f, std::size_t k) {
  const auto& a = p.joints[f][k];
  const auto& b = p.joints[f][static_cast<std::size_t>(kParent[k])];
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void dump(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("scene generation is deterministic per seed") {
  const Scene a = generate_scene(config(3, 5));
  const Scene b = generate_scene(config(3, 5));
  const Scene c = generate_scene(config(3, 6));
  REQUIRE(a.people.size() == 3);
  bool differs = false;
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(a.people[p].joints == b.people[p].joints);
    CHECK(a.people[p].present == b.people[p].present);
    differs = differs || a.people[p].joints != c.people[p].joints;
  }
  CHECK(differs);
  CHECK(render(a).frames == render(b).frames);
}

TEST_CASE("skeletons keep their bone lengths") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = generate_scene(config(3, seed));
    for (const auto& p : s.people)
      for (std::size_t f = 0; f < s.frames; ++f)
        for (std::size_t k = 1; k < kJoints; ++k) CHECK(std::abs(bone(p, f, k) - p.bone_length[k]) < 1e-9);
  }
}

TEST_CASE("zero speeds give static skeletons") {
  auto c = config(2, 9);
  c.linear_speed = 0.0;
  c.angular_speed = 0.0;
  const Scene s = generate_scene(c);
  for (const auto& p : s.people)
    for (std::size_t f = 1; f < s.frames; ++f) CHECK(p.joints[f] == p.joints[0]);
  const Scene st = generate_scene([] {
    auto c = config(3, 4);
    c.script = Script::kStatic;
    return c;
  }());
  for (const auto& p : st.people)
    for (std::size_t f = 1; f < st.frames; ++f) CHECK(p.joints[f] == p.joints[0]);
}

TEST_CASE("moving people actually move") {
  const Scene s = generate_scene(config(2, 3));
  for (const auto& p : s.people) CHECK(p.joints.back()[0] != p.joints.front()[0]);
}

TEST_CASE("impossible scene configs are rejected") {
  CHECK_THROWS_AS(generate_scene(config(9, 1)), ConfigError);
  auto c = config(1, 1);
  c.script = Script::kCrossing;
  CHECK_THROWS_AS(generate_scene(c), ConfigError);
  c = config(2, 1);
  c.frames = 0;
  CHECK_THROWS_AS(generate_scene(c), ConfigError);
  c = config(2, 1);
  c.occlusion_rate = 1.5;
  CHECK_THROWS_AS(generate_scene(c), ConfigError);
}

TEST_CASE("an empty scene renders background only") {
  const RenderedSequence seq = render(generate_scene(config(0, 1)));
  REQUIRE(seq.frames.size() == 12);
  CHECK(seq.annotations.empty());
  for (const auto& f : seq.frames) {
    CHECK(f.size() == 64 * 64 * 3);
    for (std::size_t i = 0; i < f.size(); i += 3) CHECK((f[i] == f[0] && f[i + 1] == f[1] && f[i + 2] == f[2]));
  }
}

TEST_CASE("a person on the optical axis projects to the principal point") {
  Scene s;
  s.camera = default_camera();
  s.frames = 1;
  Person p;
  p.present = {true};
  std::vector<Vec3> j(kJoints, Vec3{0.0, 0.0, 5.0});
  for (std::size_t k = 1; k < kJoints; ++k) j[k] = {0.0, -0.02 * static_cast<double>(k), 5.0};
  p.joints = {j};
  s.people.push_back(p);
  const auto seq = render(s);
  REQUIRE(seq.annotations.size() == 1);
  CHECK(seq.annotations[0].joints[0] == Vec3{32.0, 32.0, 5.0});
  // behind the camera
  s.people[0].joints[0][4][2] = -1.0;
  CHECK_THROWS_AS(render(s), DomainError);
}

TEST_CASE("occlusion flags agree with the nearer bodies' masks") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = config(2, seed);
    c.script = Script::kCrossing;
    c.frames = 16;
    const Scene s = generate_scene(c);
    const RenderedSequence seq = render(s);
    std::size_t hidden = 0;
    for (const auto& a : seq.annotations) {
      if (!a.present) continue;
      const std::size_t p = static_cast<std::size_t>(a.person);
      const double depth = s.people[p].joints[a.frame][0][2];
      for (std::size_t k = 0; k < kJoints; ++k) {
        const double x = std::floor(a.joints[k][0]), y = std::floor(a.joints[k][1]);
        const bool inside = x >= 0 && y >= 0 && x < 64 && y < 64;
        bool covered = false;
        for (std::size_t q = 0; q < s.people.size() && inside; ++q) {
          if (q == p || !s.people[q].present[a.frame]) continue;
          const auto mask = body_mask(s, q, a.frame);
          if (mask[static_cast<std::size_t>(y) * 64 + static_cast<std::size_t>(x)]) {
            // whoever hides a joint is nearer
            if (s.people[q].joints[a.frame][0][2] < depth) covered = true;
          }
        }
        CHECK(a.visible[k] == (inside && !covered ? 1 : 0));
        hidden += a.visible[k] == 0;
      }
    }
    // the crossing hides the far person completely at least once
    CHECK(hidden > 0);
    std::size_t full = 0;
    for (const auto& a : seq.annotations) full += a.person == 1 && seq.fully_occluded(a);
    CHECK(full > 0);
  }
}

TEST_CASE("serialization round trip") {
  TempDir dir("synth_rt");
  const Scene s = generate_scene(config(3, 21));
  const RenderedSequence seq = render(s);
  serialize(seq, dir.path());
  const RenderedSequence back = deserialize(dir.path());
  CHECK(back.frames == seq.frames);
  CHECK(back.annotations == seq.annotations);
  CHECK(back.width == 64);
  CHECK(back.camera.fx == seq.camera.fx);
  // stored 2.5D reprojects from the scene's 3D joints
  double worst = 0.0;
  for (const auto& a : back.annotations) {
    if (!a.present) continue;
    for (std::size_t k = 0; k < kJoints; ++k) {
      const Vec3 j = geometry::project_to_2p5d(s.people[static_cast<std::size_t>(a.person)].joints[a.frame][k],
                                               s.camera);
      worst = std::max({worst, std::abs(j[0] - a.joints[k][0]), std::abs(j[1] - a.joints[k][1])});
    }
  }
  CHECK(worst < 1e-6);
  // writing again gives identical bytes
  TempDir again("synth_rt2");
  serialize(back, again.path());
  CHECK(slurp(dir / "annot.jsonl") == slurp(again / "annot.jsonl"));
  CHECK(slurp(dir / "meta") == slurp(again / "meta"));
  CHECK(quantize(1.0 / 3.0) == 0.333333333);
}

TEST_CASE("malformed datasets are parse errors") {
  TempDir dir("synth_bad");
  const RenderedSequence seq = render(generate_scene(config(2, 22)));
  serialize(seq, dir.path());
  const std::string annot = slurp(dir / "annot.jsonl");
  const std::string meta = slurp(dir / "meta");
  const std::string frame = slurp(dir / "frames" / "00003.ppm");

  dump(dir / "annot.jsonl", annot.substr(0, annot.size() / 2));
  CHECK_THROWS_AS(deserialize(dir.path()), ParseError);
  dump(dir / "annot.jsonl", "{\"frame\": 0, \"person\": \"x\"}\n" + annot);
  CHECK_THROWS_AS(deserialize(dir.path()), ParseError);
  dump(dir / "annot.jsonl", annot);

  dump(dir / "frames" / "00003.ppm", frame.substr(0, frame.size() - 10));
  CHECK_THROWS_AS(deserialize(dir.path()), ParseError);
  dump(dir / "frames" / "00003.ppm", frame);

  std::string v2 = meta;
  v2.replace(v2.find("version=1"), 9, "version=2");
  dump(dir / "meta", v2);
  CHECK_THROWS_AS(deserialize(dir.path()), VersionError);
  dump(dir / "meta", "fps=6\n");
  CHECK_THROWS_AS(deserialize(dir.path()), ParseError);
  dump(dir / "meta", meta);
  CHECK_NOTHROW(deserialize(dir.path()));
  std::filesystem::remove(dir / "meta");
  CHECK_THROWS_AS(deserialize(dir.path()), ParseError);
}

TEST_CASE("splits are disjoint and the occlusion split is verified by a flag scan") {
  std::vector<RenderedSequence> seqs;
  for (std::uint64_t i = 0; i < 12; ++i) {
    auto c = config(2 + i % 2, 100 + i);
    c.frames = 20;
    c.occlusion_rate = 0.7;
    seqs.push_back(render(generate_scene(c)));
  }
  SplitConfig sc;
  sc.held_out_fraction = 0.5;
  sc.seed = 4;
  const Splits a = make_splits(seqs, sc);
  const Splits b = make_splits(seqs, sc);
  CHECK(a.val.size() == b.val.size());
  CHECK(a.occlusion.size() == b.occlusion.size());
  std::set<std::size_t> train_seqs, held_seqs;
  for (const auto& c : a.train) train_seqs.insert(c.sequence);
  for (const auto& c : a.val) held_seqs.insert(c.sequence);
  for (const auto& c : a.occlusion) held_seqs.insert(c.sequence);
  for (std::size_t q : held_seqs) CHECK(train_seqs.count(q) == 0);
  CHECK(held_seqs.size() == 6);
  REQUIRE(!a.occlusion.empty());
  auto occluded = [&](const Clip& c) {
    for (const auto& an : seqs[c.sequence].annotations)
      if (an.frame >= c.start && an.frame < c.start + c.length && an.present &&
          std::count(an.visible.begin(), an.visible.end(), 1) == 0)
        return true;
    return false;
  };
  for (const auto& c : a.occlusion) CHECK(occluded(c));
  for (const auto& c : a.val) CHECK(!occluded(c));

  // no crossings anywhere: empty occlusion split
  std::vector<RenderedSequence> calm;
  for (std::uint64_t i = 0; i < 4; ++i) {
    auto c = config(1, 200 + i);
    calm.push_back(render(generate_scene(c)));
  }
  CHECK(make_splits(calm, sc).occlusion.empty());
  CHECK_THROWS_AS(make_splits({calm[0]}, sc), ConfigError);
}

TEST_CASE("split files round trip") {
  TempDir dir("splits");
  Splits s;
  s.train = {{0, 0, 5}, {0, 1, 5}};
  s.val = {{1, 0, 10}};
  s.occlusion = {{2, 10, 10}};
  write_splits(s, dir / "splits.txt");
  const Splits back = read_splits(dir / "splits.txt");
  CHECK(back.train.size() == 2);
  CHECK(back.occlusion[0].start == 10);
  dump(dir / "splits.txt", "train 0 zero 5\n");
  CHECK_THROWS_AS(read_splits(dir / "splits.txt"), ParseError);
}

TEST_CASE("frames tensor scales bytes to [0, 1]") {
  const RenderedSequence seq = render(generate_scene(config(1, 30)));
  const Tensor t = frames_tensor(seq, 2, 3);
  REQUIRE(t.shape() == Shape{3, 64, 64, 3});
  CHECK(t[0] == doctest::Approx(seq.frames[2][0] / 255.0));
  CHECK_THROWS(frames_tensor(seq, 11, 3));
}
