#include "snipper/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "snipper/error.hpp"
#include "snipper/rng.hpp"

namespace snipper::synth {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxPeople = 8;
constexpr double kNearest = 4.0, kFarthest = 8.0;  // root depth range, m
constexpr double kPelvisHeight = 0.5;              // pelvis below the camera; ground plane
constexpr double kMaxSwing = 0.7;                  // rad
constexpr double kMaxYaw = 0.5;
constexpr double kMinSeparation = 1.0;             // m, initial root spacing
constexpr double kBorderPixels = 8.0;

struct BoneSpec {
  Vec3 rest;  // unnormalized rest direction from the parent
  double min_len, max_len;
  double radius;  // capsule radius for rendering, m
  bool swings;
};

// Index matches the joint; entry 0 (root) is unused.
const std::array<BoneSpec, kJoints> kBones = {{
    {{0, 0, 0}, 0, 0, 0, false},
    {{0, -1, 0}, 0.45, 0.55, 0.21, false},     // thorax
    {{0, -1, 0}, 0.22, 0.28, 0.06, false},     // head (neck)
    {{-1, 0, 0}, 0.17, 0.22, 0.09, false},     // right shoulder
    {{-0.25, 1, 0}, 0.26, 0.32, 0.07, true},   // right elbow
    {{-0.1, 1, 0}, 0.22, 0.28, 0.06, true},    // right wrist
    {{1, 0, 0}, 0.17, 0.22, 0.09, false},      // left shoulder
    {{0.25, 1, 0}, 0.26, 0.32, 0.07, true},    // left elbow
    {{0.1, 1, 0}, 0.22, 0.28, 0.06, true},     // left wrist
    {{-1, 0, 0}, 0.10, 0.14, 0.10, false},     // right hip
    {{0, 1, 0}, 0.38, 0.46, 0.08, true},       // right knee
    {{0, 1, 0}, 0.36, 0.44, 0.07, true},       // right ankle
    {{1, 0, 0}, 0.10, 0.14, 0.10, false},      // left hip
    {{0, 1, 0}, 0.38, 0.46, 0.08, true},       // left knee
    {{0, 1, 0}, 0.36, 0.44, 0.07, true},       // left ankle
}};
constexpr double kHeadRadius = 0.13;

const std::array<std::array<std::uint8_t, 3>, kMaxPeople> kPalette = {{
    {230, 80, 60}, {70, 170, 230}, {240, 200, 60}, {120, 220, 110},
    {200, 110, 230}, {250, 150, 200}, {90, 230, 210}, {240, 240, 240},
}};
constexpr std::array<std::uint8_t, 3> kBackground = {36, 38, 44};

Vec3 unit(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 rotate_x(const Vec3& v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {v[0], v[1] * c - v[2] * s, v[1] * s + v[2] * c};
}

Vec3 rotate_y(const Vec3& v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {v[0] * c + v[2] * s, v[1], -v[0] * s + v[2] * c};
}

// Bounded random walk of an angle with bounded velocity.
struct AngleWalk {
  double angle = 0.0, velocity = 0.0;

  void step(Rng& rng, double max_speed, double limit) {
    if (max_speed <= 0.0) return;
    velocity = std::clamp(velocity + rng.uniform(-0.5, 0.5) * max_speed, -max_speed, max_speed);
    angle += velocity;
    if (std::abs(angle) > limit) {
      angle = std::copysign(2.0 * limit, angle) - angle;
      velocity = -velocity;
    }
  }
};

struct RootPlan {
  std::vector<Vec3> positions;
};

double x_limit(double z, const geometry::CameraIntrinsics& cam, std::size_t width) {
  const double half = std::min(cam.cx, static_cast<double>(width) - cam.cx) - kBorderPixels;
  return std::max(0.0, half) * z / cam.fx;
}

RootPlan random_walk(const Vec3& start, double speed, std::size_t frames, Rng& rng,
                     const geometry::CameraIntrinsics& cam, std::size_t width) {
  RootPlan plan;
  Vec3 p = start;
  double vx = 0.0, vz = 0.0;
  if (speed > 0.0) {
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double mag = rng.uniform(0.3 * speed, speed);
    vx = mag * std::cos(heading);
    vz = mag * std::sin(heading);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    plan.positions.push_back(p);
    if (speed <= 0.0) continue;
    vx += rng.uniform(-0.3, 0.3) * speed;
    vz += rng.uniform(-0.3, 0.3) * speed;
    const double mag = std::hypot(vx, vz);
    if (mag > speed) {
      vx *= speed / mag;
      vz *= speed / mag;
    }
    p[0] += vx;
    p[2] += vz;
    if (p[2] < kNearest || p[2] > kFarthest) {
      p[2] = std::clamp(p[2], kNearest, kFarthest);
      vz = -vz;
    }
    const double lim = x_limit(p[2], cam, width);
    if (std::abs(p[0]) > lim) {
      p[0] = std::clamp(p[0], -lim, lim);
      vx = -vx;
    }
  }
  return plan;
}

std::vector<Vec3> pose_skeleton(const Vec3& root, const Person& person,
                                const std::array<AngleWalk, kJoints>& swing, double yaw) {
  std::vector<Vec3> j(kJoints);
  j[0] = root;
  for (std::size_t k = 1; k < kJoints; ++k) {
    const auto& spec = kBones[k];
    Vec3 dir = unit(spec.rest);
    if (spec.swings) dir = rotate_x(dir, swing[k].angle);
    dir = rotate_y(dir, yaw);
    const Vec3& parent = j[static_cast<std::size_t>(kParent[k])];
    const double len = person.bone_length[k];
    j[k] = {parent[0] + len * dir[0], parent[1] + len * dir[1], parent[2] + len * dir[2]};
  }
  return j;
}

}  // namespace

geometry::CameraIntrinsics default_camera(std::size_t width, std::size_t height) {
  const double f = 1.25 * static_cast<double>(width);
  return {f, f, 0.5 * static_cast<double>(width), 0.5 * static_cast<double>(height)};
}

void SceneConfig::validate() const {
  if (people > kMaxPeople) {
    throw ConfigError(std::to_string(people) + " people do not fit the scene (max " +
                      std::to_string(kMaxPeople) + ")");
  }
  if (frames == 0) throw ConfigError("scene needs at least one frame");
  if (width == 0 || height == 0) throw ConfigError("image size must be positive");
  if (linear_speed < 0.0 || angular_speed < 0.0) throw ConfigError("speeds must be >= 0");
  if (occlusion_rate < 0.0 || occlusion_rate > 1.0) throw ConfigError("occlusion_rate not in [0,1]");
  if ((script == Script::kCrossing || script == Script::kExitEnter) && people < 2) {
    throw ConfigError("scripted scene needs at least two people");
  }
  camera.validate();
}

Scene generate_scene(const SceneConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Scene scene;
  scene.camera = config.camera;
  scene.frames = config.frames;
  scene.width = config.width;
  scene.height = config.height;
  scene.seed = config.seed;

  const std::size_t frames = config.frames;
  const bool crossing = config.script == Script::kCrossing ||
                        (config.script == Script::kNone && config.people >= 2 &&
                         rng.uniform() < config.occlusion_rate);
  const bool still = config.script == Script::kStatic;
  const double speed = still ? 0.0 : config.linear_speed;
  const double angular = still ? 0.0 : config.angular_speed;

  std::vector<Vec3> starts;
  for (std::size_t i = 0; i < config.people; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double z = rng.uniform(kNearest + 0.5, kFarthest - 0.5);
      const double lim = x_limit(z, config.camera, config.width);
      const Vec3 c{rng.uniform(-lim, lim), kPelvisHeight, z};
      placed = std::all_of(starts.begin(), starts.end(), [&](const Vec3& o) {
        return std::hypot(o[0] - c[0], o[2] - c[2]) >= kMinSeparation;
      });
      if (placed) starts.push_back(c);
    }
    if (!placed) throw ConfigError("could not place " + std::to_string(config.people) + " people");
  }

  // Crossing pair: person 0 passes in front of person 1 at frame `meet`,
  // both on the optical axis then, so the near body hides the far one.
  const std::size_t meet = frames >= 8 ? 3 + rng.below(frames - 7) : frames / 2;
  const double near_z = 4.5, far_z = 6.5, near_speed = 0.1;

  for (std::size_t i = 0; i < config.people; ++i) {
    Person person;
    person.id = static_cast<int>(i);
    person.color = kPalette[i];
    for (std::size_t k = 1; k < kJoints; ++k) {
      person.bone_length[k] = rng.uniform(kBones[k].min_len, kBones[k].max_len);
    }
    // Mirror limbs share lengths so the figure is symmetric.
    for (auto [r, l] : {std::pair{3, 6}, {4, 7}, {5, 8}, {9, 12}, {10, 13}, {11, 14}}) {
      person.bone_length[static_cast<std::size_t>(l)] = person.bone_length[static_cast<std::size_t>(r)];
    }
    const bool scripted_pair = crossing && i < 2;
    std::vector<Vec3> roots;
    if (scripted_pair) {
      const double z = i == 0 ? near_z : far_z;
      const double v = i == 0 ? near_speed : -near_speed * far_z / near_z;
      for (std::size_t t = 0; t < frames; ++t) {
        const double dt = static_cast<double>(t) - static_cast<double>(meet);
        roots.push_back({v * dt, kPelvisHeight, z});
      }
    } else {
      roots = random_walk(starts[i], speed, frames, rng, config.camera, config.width).positions;
    }
    std::array<AngleWalk, kJoints> swing{};
    AngleWalk yaw;
    person.present.assign(frames, true);
    if (config.script == Script::kExitEnter && i < 2) {
      const std::size_t cut = frames / 2;
      for (std::size_t t = 0; t < frames; ++t) person.present[t] = i == 0 ? t < cut : t > cut;
    }
    for (std::size_t t = 0; t < frames; ++t) {
      if (t > 0) {
        // The crossing pair keeps a rigid stance so the near body can hide
        // the far one completely.
        const double limb_speed = scripted_pair ? 0.0 : angular;
        for (std::size_t k = 1; k < kJoints; ++k)
          if (kBones[k].swings) swing[k].step(rng, limb_speed, kMaxSwing);
        if (!scripted_pair) yaw.step(rng, 0.5 * angular, kMaxYaw);
      }
      person.joints.push_back(pose_skeleton(roots[t], person, swing, yaw.angle));
    }
    scene.people.push_back(std::move(person));
  }
  return scene;
}

namespace {

struct Segment {
  double ax, ay, bx, by, radius;
};

// Projected capsules (and the head disc) of one person in one frame.
std::vector<Segment> body_segments(const Scene& scene, std::size_t person, std::size_t frame) {
  const auto& joints = scene.people[person].joints[frame];
  std::vector<Vec3> px(kJoints);
  for (std::size_t k = 0; k < kJoints; ++k) {
    if (joints[k][2] <= 0.0) {
      throw DomainError("joint " + std::to_string(k) + " of person " + std::to_string(person) +
                        " is behind the camera at frame " + std::to_string(frame));
    }
    px[k] = geometry::project_to_2p5d(joints[k], scene.camera);
  }
  std::vector<Segment> segs;
  for (std::size_t k = 1; k < kJoints; ++k) {
    const auto& p = px[static_cast<std::size_t>(kParent[k])];
    const double depth = 0.5 * (p[2] + px[k][2]);
    segs.push_back({p[0], p[1], px[k][0], px[k][1], kBones[k].radius * scene.camera.fx / depth});
  }
  segs.push_back({px[2][0], px[2][1], px[2][0], px[2][1], kHeadRadius * scene.camera.fx / px[2][2]});
  return segs;
}

double segment_distance(const Segment& s, double x, double y) {
  const double dx = s.bx - s.ax, dy = s.by - s.ay;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0.0 ? ((x - s.ax) * dx + (y - s.ay) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return std::hypot(x - (s.ax + u * dx), y - (s.ay + u * dy));
}

// Anti-aliased coverage in [0, 1] per pixel.
std::vector<double> coverage(const std::vector<Segment>& segs, std::size_t width, std::size_t height) {
  std::vector<double> cov(width * height, 0.0);
  for (const auto& s : segs) {
    const double pad = s.radius + 1.0;
    const auto lo_x = static_cast<long>(std::floor(std::min(s.ax, s.bx) - pad));
    const auto hi_x = static_cast<long>(std::ceil(std::max(s.ax, s.bx) + pad));
    const auto lo_y = static_cast<long>(std::floor(std::min(s.ay, s.by) - pad));
    const auto hi_y = static_cast<long>(std::ceil(std::max(s.ay, s.by) + pad));
    for (long i = std::max(0L, lo_y); i <= std::min(static_cast<long>(height) - 1, hi_y); ++i)
      for (long j = std::max(0L, lo_x); j <= std::min(static_cast<long>(width) - 1, hi_x); ++j) {
        const double d = segment_distance(s, static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5);
        const double c = std::clamp(s.radius - d + 0.5, 0.0, 1.0);
        auto& cell = cov[static_cast<std::size_t>(i) * width + static_cast<std::size_t>(j)];
        cell = std::max(cell, c);
      }
  }
  return cov;
}

}  // namespace

std::vector<std::uint8_t> body_mask(const Scene& scene, std::size_t person, std::size_t frame) {
  const auto cov = coverage(body_segments(scene, person, frame), scene.width, scene.height);
  std::vector<std::uint8_t> mask(cov.size());
  for (std::size_t i = 0; i < cov.size(); ++i) mask[i] = cov[i] >= 0.5 ? 1 : 0;
  return mask;
}

double quantize(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

RenderedSequence render(const Scene& scene) {
  RenderedSequence seq;
  seq.width = scene.width;
  seq.height = scene.height;
  seq.camera = scene.camera;
  const std::size_t w = scene.width, h = scene.height, n = scene.people.size();
  for (std::size_t f = 0; f < scene.frames; ++f) {
    std::vector<std::size_t> order;
    for (std::size_t p = 0; p < n; ++p)
      if (scene.people[p].present[f]) order.push_back(p);
    // Far to near; ties broken by index for determinism.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scene.people[a].joints[f][0][2] > scene.people[b].joints[f][0][2];
    });
    std::vector<double> image(w * h * 3);
    for (std::size_t i = 0; i < w * h; ++i)
      for (std::size_t c = 0; c < 3; ++c) image[i * 3 + c] = kBackground[c];
    std::vector<std::vector<std::uint8_t>> masks(n);
    for (std::size_t p : order) {
      const auto cov = coverage(body_segments(scene, p, f), w, h);
      masks[p].resize(w * h);
      const auto& color = scene.people[p].color;
      for (std::size_t i = 0; i < w * h; ++i) {
        masks[p][i] = cov[i] >= 0.5 ? 1 : 0;
        for (std::size_t c = 0; c < 3; ++c)
          image[i * 3 + c] = image[i * 3 + c] * (1.0 - cov[i]) + color[c] * cov[i];
      }
    }
    std::vector<std::uint8_t> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
      bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0, 255.0)));
    seq.frames.push_back(std::move(bytes));

    for (std::size_t p = 0; p < n; ++p) {
      Annotation a;
      a.frame = f;
      a.person = scene.people[p].id;
      a.present = scene.people[p].present[f];
      a.joints.assign(kJoints, Vec3{0, 0, 0});
      a.visible.assign(kJoints, 0);
      if (a.present) {
        const double depth = scene.people[p].joints[f][0][2];
        for (std::size_t k = 0; k < kJoints; ++k) {
          const Vec3 j = geometry::project_to_2p5d(scene.people[p].joints[f][k], scene.camera);
          a.joints[k] = {quantize(j[0]), quantize(j[1]), quantize(j[2])};
          const double fx = std::floor(j[0]), fy = std::floor(j[1]);
          if (fx < 0 || fy < 0 || fx >= static_cast<double>(w) || fy >= static_cast<double>(h)) continue;
          const std::size_t idx = static_cast<std::size_t>(fy) * w + static_cast<std::size_t>(fx);
          bool covered = false;
          for (std::size_t q : order) {
            if (q == p || scene.people[q].joints[f][0][2] >= depth) continue;
            if (masks[q][idx]) covered = true;
          }
          a.visible[k] = covered ? 0 : 1;
        }
      }
      seq.annotations.push_back(std::move(a));
    }
  }
  return seq;
}

std::size_t RenderedSequence::visible_joints(const Annotation& a) {
  return static_cast<std::size_t>(std::count(a.visible.begin(), a.visible.end(), 1));
}

std::vector<const Annotation*> RenderedSequence::at_frame(std::size_t frame) const {
  std::vector<const Annotation*> out;
  for (const auto& a : annotations)
    if (a.frame == frame) out.push_back(&a);
  return out;
}

namespace {

std::size_t people_count(const RenderedSequence& seq) {
  if (seq.frames.empty()) return 0;
  return seq.annotations.size() / seq.frames.size();
}

void write_ppm(const fs::path& file, const std::vector<std::uint8_t>& rgb, std::size_t w,
               std::size_t h) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ParseError("cannot write " + file.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

std::vector<std::uint8_t> read_ppm(const fs::path& file, std::size_t w, std::size_t h) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open " + file.string());
  std::string magic;
  std::size_t fw = 0, fh = 0, maxval = 0;
  in >> magic >> fw >> fh >> maxval;
  if (!in || magic != "P6" || maxval != 255) throw ParseError(file.string() + ": bad PPM header");
  if (fw != w || fh != h) {
    throw ParseError(file.string() + ": size " + std::to_string(fw) + "x" + std::to_string(fh) +
                     " disagrees with meta");
  }
  in.get();  // single whitespace after the header
  std::vector<std::uint8_t> rgb(w * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) {
    throw ParseError(file.string() + ": truncated pixel data at offset " +
                     std::to_string(in.gcount()));
  }
  return rgb;
}

std::string frame_name(std::size_t f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.ppm", f);
  return buf;
}

}  // namespace

void serialize(const RenderedSequence& seq, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  {
    std::ofstream meta(dir / "meta");
    meta << "version=" << kFormatVersion << "\n"
         << "fps=" << kFps << "\n"
         << "width=" << seq.width << "\n"
         << "height=" << seq.height << "\n"
         << "frames=" << seq.frames.size() << "\n"
         << "people=" << people_count(seq) << "\n"
         << "joints=" << kJoints << "\n"
         << "intrinsics=" << quantize(seq.camera.fx) << ' ' << quantize(seq.camera.fy) << ' '
         << quantize(seq.camera.cx) << ' ' << quantize(seq.camera.cy) << "\n";
    if (!meta) throw ParseError("cannot write " + (dir / "meta").string());
  }
  for (std::size_t f = 0; f < seq.frames.size(); ++f)
    write_ppm(dir / "frames" / frame_name(f), seq.frames[f], seq.width, seq.height);
  std::ofstream annot(dir / "annot.jsonl");
  for (const auto& a : seq.annotations) {
    nlohmann::json rec;
    rec["frame"] = a.frame;
    rec["person"] = a.person;
    rec["present"] = a.present;
    nlohmann::json joints = nlohmann::json::array();
    for (const auto& j : a.joints) joints.push_back({quantize(j[0]), quantize(j[1]), quantize(j[2])});
    rec["joints"] = std::move(joints);
    rec["visible"] = a.visible;
    annot << rec.dump() << "\n";
  }
  if (!annot) throw ParseError("cannot write annot.jsonl");
}

RenderedSequence deserialize(const fs::path& dir) {
  std::ifstream meta(dir / "meta");
  if (!meta) throw ParseError("missing meta file in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError((dir / "meta").string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError((dir / "meta").string() + ": missing key '" + key + "'");
    return it->second;
  };
  auto get_size = [&](const std::string& key) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument(key);
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw ParseError((dir / "meta").string() + ": bad integer for '" + key + "'");
    }
  };
  if (get("version") != std::to_string(kFormatVersion)) {
    throw VersionError("dataset version " + get("version") + " is not supported (expected " +
                       std::to_string(kFormatVersion) + ")");
  }
  RenderedSequence seq;
  seq.width = get_size("width");
  seq.height = get_size("height");
  const std::size_t frames = get_size("frames");
  const std::size_t people = get_size("people");
  if (get_size("joints") != kJoints) throw ParseError("meta: unsupported joint count");
  {
    std::istringstream in(get("intrinsics"));
    if (!(in >> seq.camera.fx >> seq.camera.fy >> seq.camera.cx >> seq.camera.cy)) {
      throw ParseError((dir / "meta").string() + ": bad intrinsics");
    }
  }
  for (std::size_t f = 0; f < frames; ++f)
    seq.frames.push_back(read_ppm(dir / "frames" / frame_name(f), seq.width, seq.height));

  std::ifstream annot(dir / "annot.jsonl");
  if (!annot) throw ParseError("missing annot.jsonl in " + dir.string());
  const std::string where = (dir / "annot.jsonl").string();
  line_no = 0;
  while (std::getline(annot, line)) {
    ++line_no;
    const std::string at = where + ":" + std::to_string(line_no) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(at + "byte " + std::to_string(e.byte) + ": malformed record");
    }
    Annotation a;
    try {
      a.frame = rec.at("frame").get<std::size_t>();
      a.person = rec.at("person").get<int>();
      a.present = rec.at("present").get<bool>();
      const auto& joints = rec.at("joints");
      if (joints.size() != kJoints) throw ParseError(at + "expected 15 joints");
      for (const auto& j : joints) {
        if (!j.is_array() || j.size() != 3) throw ParseError(at + "joint needs 3 values");
        a.joints.push_back({j[0].get<double>(), j[1].get<double>(), j[2].get<double>()});
      }
      a.visible = rec.at("visible").get<std::vector<std::uint8_t>>();
      if (a.visible.size() != kJoints) throw ParseError(at + "expected 15 visibility bits");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(at + e.what());
    }
    const std::size_t index = seq.annotations.size();
    if (people == 0 || a.frame != index / people) {
      throw ParseError(at + "record out of order (frame " + std::to_string(a.frame) + ")");
    }
    seq.annotations.push_back(std::move(a));
  }
  if (seq.annotations.size() != frames * people) {
    throw ParseError(where + ": expected " + std::to_string(frames * people) + " records, found " +
                     std::to_string(seq.annotations.size()) + " (truncated?)");
  }
  return seq;
}

Tensor frames_tensor(const RenderedSequence& seq, std::size_t start, std::size_t count) {
  if (start + count > seq.frames.size()) {
    throw ContractError("frames [" + std::to_string(start) + ", " + std::to_string(start + count) +
                        ") exceed the sequence");
  }
  std::vector<double> v;
  v.reserve(count * seq.width * seq.height * 3);
  for (std::size_t f = start; f < start + count; ++f)
    for (std::uint8_t b : seq.frames[f]) v.push_back(static_cast<double>(b) / 255.0);
  return Tensor({count, seq.height, seq.width, 3}, std::move(v));
}

geometry::Pose annotation_pose(const Annotation& a) {
  geometry::Pose p = geometry::Pose::zeros(a.joints.size());
  if (a.joints.empty()) return p;
  p.root = a.joints[0];
  p.offsets = geometry::decompose_joints(a.joints, p.root);
  for (std::size_t k = 0; k < a.visible.size(); ++k) p.visibility[k] = a.visible[k];
  p.occurrence = a.present ? 1.0 : 0.0;
  return p;
}

Splits make_splits(const std::vector<RenderedSequence>& sequences, const SplitConfig& config) {
  if (sequences.size() < 2) throw ConfigError("need at least two sequences to split");
  if (config.train_window == 0 || config.eval_window == 0) throw ConfigError("window must be positive");
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  auto held = static_cast<std::size_t>(
      std::ceil(config.held_out_fraction * static_cast<double>(sequences.size())));
  held = std::clamp<std::size_t>(held, 1, sequences.size() - 1);
  std::vector<std::size_t> held_out(order.begin(), order.begin() + static_cast<long>(held));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(held), order.end());
  std::sort(held_out.begin(), held_out.end());
  std::sort(train.begin(), train.end());

  Splits s;
  for (std::size_t q : train) {
    const std::size_t n = sequences[q].frame_count();
    for (std::size_t start = 0; start + config.train_window <= n; ++start)
      s.train.push_back({q, start, config.train_window});
  }
  for (std::size_t q : held_out) {
    const auto& seq = sequences[q];
    for (std::size_t start = 0; start + config.eval_window <= seq.frame_count();
         start += config.eval_window) {
      bool occluded = false;
      for (const auto& a : seq.annotations)
        if (a.frame >= start && a.frame < start + config.eval_window && seq.fully_occluded(a))
          occluded = true;
      (occluded ? s.occlusion : s.val).push_back({q, start, config.eval_window});
    }
  }
  if (s.train.empty()) throw ConfigError("no training window fits the sequences");
  if (s.occlusion.empty()) std::cerr << "warning: occlusion split is empty\n";
  return s;
}

void write_splits(const Splits& splits, const fs::path& file) {
  std::ofstream out(file);
  out << "# split sequence start length\n";
  auto emit = [&](const char* name, const std::vector<Clip>& clips) {
    for (const auto& c : clips) out << name << ' ' << c.sequence << ' ' << c.start << ' ' << c.length << '\n';
  };
  emit("train", splits.train);
  emit("val", splits.val);
  emit("occlusion", splits.occlusion);
  if (!out) throw ParseError("cannot write " + file.string());
}

Splits read_splits(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  Splits s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name;
    Clip c;
    if (!(ls >> name >> c.sequence >> c.start >> c.length)) {
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": malformed split line");
    }
    if (name == "train") s.train.push_back(c);
    else if (name == "val") s.val.push_back(c);
    else if (name == "occlusion") s.occlusion.push_back(c);
    else throw ParseError(file.string() + ":" + std::to_string(line_no) + ": unknown split '" + name + "'");
  }
  return s;
}

}  // namespace snipper::synth
