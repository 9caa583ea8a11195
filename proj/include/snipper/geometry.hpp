#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

namespace snipper::geometry {

inline constexpr std::size_t kDefaultJoints = 15;

using Vec3 = std::array<double, 3>;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  // Throws DomainError unless both focal lengths are positive.
  void validate() const;
};

/// Star pose: a root (x px, y px, depth m) plus per-joint offsets from it.
struct Pose {
  Vec3 root{0.0, 0.0, 1.0};
  std::vector<Vec3> offsets;
  std::vector<double> visibility;
  double occurrence = 1.0;

  static Pose zeros(std::size_t joints);
  std::size_t joint_count() const { return offsets.size(); }
  // Clamps visibility and occurrence into [0, 1].
  void clamp_probabilities();
};

/// One identity over T + T_f slots; empty slots mean the person is absent.
struct Trajectory {
  std::vector<std::optional<Pose>> poses;
  int identity = -1;
};

std::vector<Vec3> compose_joints(const Pose& pose);
// Offsets of `joints` relative to `root`; inverse of compose_joints.
std::vector<Vec3> decompose_joints(const std::vector<Vec3>& joints, const Vec3& root);

Vec3 lift_to_3d(const Vec3& joint, const CameraIntrinsics& cam);
Vec3 project_to_2p5d(const Vec3& point, const CameraIntrinsics& cam);

// Pixel offsets -> metric offsets using the root depth: (dx*d/fx, dy*d/fy, dd).
Vec3 normalize_offset(const Vec3& offset, double root_depth, const CameraIntrinsics& cam);
Vec3 denormalize_offset(const Vec3& offset, double root_depth, const CameraIntrinsics& cam);

// All joints of a pose lifted to camera-space meters.
std::vector<Vec3> pose_to_3d(const Pose& pose, const CameraIntrinsics& cam);

double distance(const Vec3& a, const Vec3& b);

}  // namespace snipper::geometry
