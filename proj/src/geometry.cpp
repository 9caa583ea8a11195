#include "snipper/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snipper/error.hpp"

namespace snipper::geometry {

namespace {

void require_depth(double d, const char* what) {
  if (!(d > 0.0)) {
    throw DomainError(std::string(what) + ": depth must be positive, got " + std::to_string(d));
  }
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("camera focal lengths must be positive");
}

Pose Pose::zeros(std::size_t joints) {
  Pose p;
  p.offsets.assign(joints, Vec3{0.0, 0.0, 0.0});
  p.visibility.assign(joints, 1.0);
  return p;
}

void Pose::clamp_probabilities() {
  for (auto& v : visibility) v = std::clamp(v, 0.0, 1.0);
  occurrence = std::clamp(occurrence, 0.0, 1.0);
}

std::vector<Vec3> compose_joints(const Pose& pose) {
  std::vector<Vec3> joints(pose.offsets.size());
  for (std::size_t k = 0; k < joints.size(); ++k) {
    for (int a = 0; a < 3; ++a) joints[k][a] = pose.root[a] + pose.offsets[k][a];
  }
  return joints;
}

std::vector<Vec3> decompose_joints(const std::vector<Vec3>& joints, const Vec3& root) {
  std::vector<Vec3> offsets(joints.size());
  for (std::size_t k = 0; k < joints.size(); ++k) {
    for (int a = 0; a < 3; ++a) offsets[k][a] = joints[k][a] - root[a];
  }
  return offsets;
}

Vec3 lift_to_3d(const Vec3& joint, const CameraIntrinsics& cam) {
  require_depth(joint[2], "lift_to_3d");
  const double d = joint[2];
  return {(joint[0] - cam.cx) * d / cam.fx, (joint[1] - cam.cy) * d / cam.fy, d};
}

Vec3 project_to_2p5d(const Vec3& point, const CameraIntrinsics& cam) {
  require_depth(point[2], "project_to_2p5d");
  return {cam.fx * point[0] / point[2] + cam.cx, cam.fy * point[1] / point[2] + cam.cy, point[2]};
}

Vec3 normalize_offset(const Vec3& offset, double root_depth, const CameraIntrinsics& cam) {
  require_depth(root_depth, "normalize_offset");
  return {offset[0] * root_depth / cam.fx, offset[1] * root_depth / cam.fy, offset[2]};
}

Vec3 denormalize_offset(const Vec3& offset, double root_depth, const CameraIntrinsics& cam) {
  require_depth(root_depth, "denormalize_offset");
  return {offset[0] * cam.fx / root_depth, offset[1] * cam.fy / root_depth, offset[2]};
}

std::vector<Vec3> pose_to_3d(const Pose& pose, const CameraIntrinsics& cam) {
  auto joints = compose_joints(pose);
  for (auto& j : joints) j = lift_to_3d(j, cam);
  return joints;
}

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace snipper::geometry
