#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snipper/geometry.hpp"
#include "snipper/tensor.hpp"

namespace snipper::synth {

using geometry::Vec3;

// Joint order: pelvis (root), thorax, head, right shoulder/elbow/wrist, left
// shoulder/elbow/wrist, right hip/knee/ankle, left hip/knee/ankle.
inline constexpr std::size_t kJoints = 15;
inline constexpr std::array<int, kJoints> kParent = {-1, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 0, 12, 13};
inline constexpr int kFormatVersion = 1;
inline constexpr double kFps = 6.0;  // one frame ~ 166 ms

geometry::CameraIntrinsics default_camera(std::size_t width = 64, std::size_t height = 64);

enum class Script {
  kNone,
  kStatic,     // people stand still
  kCrossing,   // two people cross at different depths; the far one is hidden
  kExitEnter,  // one person leaves, another enters a frame later
};

struct SceneConfig {
  std::size_t people = 2;
  std::size_t frames = 16;
  double linear_speed = 0.15;   // max root speed, m / frame
  double angular_speed = 0.12;  // max limb angular speed, rad / frame
  // Probability that a random scene contains a scripted crossing pair.
  double occlusion_rate = 0.0;
  Script script = Script::kNone;
  std::uint64_t seed = 0;
  geometry::CameraIntrinsics camera = default_camera();
  std::size_t width = 64;
  std::size_t height = 64;

  void validate() const;
};

struct Person {
  int id = 0;
  std::vector<std::vector<Vec3>> joints;  // [frame][joint], camera meters
  std::vector<bool> present;              // one contiguous run
  std::array<double, kJoints> bone_length{};  // bone to parent; [0] unused
  std::array<std::uint8_t, 3> color{};
};

struct Scene {
  std::vector<Person> people;
  geometry::CameraIntrinsics camera;
  std::size_t frames = 0;
  std::size_t width = 64;
  std::size_t height = 64;
  std::uint64_t seed = 0;
};

Scene generate_scene(const SceneConfig& config);

struct Annotation {
  std::size_t frame = 0;
  int person = 0;
  bool present = false;
  std::vector<Vec3> joints;       // 2.5D (x px, y px, d m); zeros when absent
  std::vector<std::uint8_t> visible;

  bool operator==(const Annotation&) const = default;
};

struct RenderedSequence {
  std::size_t width = 0;
  std::size_t height = 0;
  geometry::CameraIntrinsics camera;
  std::vector<std::vector<std::uint8_t>> frames;  // RGB bytes, row-major
  std::vector<Annotation> annotations;            // frame-major, person-minor

  std::size_t frame_count() const { return frames.size(); }
  // Annotations of one frame in person order.
  std::vector<const Annotation*> at_frame(std::size_t frame) const;
  // Present and no joint visible.
  bool fully_occluded(const Annotation& a) const { return a.present && visible_joints(a) == 0; }
  static std::size_t visible_joints(const Annotation& a);
};

/// Stick-figure rendering with painter's order by root depth. A joint is
/// invisible when outside the image or covered by a nearer person's mask.
RenderedSequence render(const Scene& scene);

// Per-pixel body coverage of one person in one frame (1 = covered).
std::vector<std::uint8_t> body_mask(const Scene& scene, std::size_t person, std::size_t frame);

/// Writes `dir/meta`, `dir/frames/%05d.ppm` and `dir/annot.jsonl`.
void serialize(const RenderedSequence& seq, const std::filesystem::path& dir);
RenderedSequence deserialize(const std::filesystem::path& dir);

// Rounds through 9 significant decimal digits (the on-disk precision).
double quantize(double v);

/// Frames [start, start + count) as a [count, H, W, 3] tensor in [0, 1].
Tensor frames_tensor(const RenderedSequence& seq, std::size_t start, std::size_t count);

/// Annotation -> star pose (pixels / meters); occurrence is the present flag.
geometry::Pose annotation_pose(const Annotation& a);

struct Clip {
  std::size_t sequence = 0;
  std::size_t start = 0;
  std::size_t length = 0;
};

struct Splits {
  std::vector<Clip> train;      // windows of train sequences
  std::vector<Clip> val;        // held-out clips without full occlusion
  std::vector<Clip> occlusion;  // held-out clips with >= 1 fully occluded person-frame
};

struct SplitConfig {
  double held_out_fraction = 0.3;
  std::size_t train_window = 5;   // T + T_f
  std::size_t eval_window = 10;   // frames per evaluation clip
  std::uint64_t seed = 0;
};

Splits make_splits(const std::vector<RenderedSequence>& sequences, const SplitConfig& config);

void write_splits(const Splits& splits, const std::filesystem::path& file);
Splits read_splits(const std::filesystem::path& file);

}  // namespace snipper::synth
