#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "snipper/geometry.hpp"

namespace snipper::tracking {

/// Trajectories of one snippet in pixel / meter units. Slot t covers video
/// frame `start + t`; slots t >= frames are forecasts.
struct SnippetResult {
  std::size_t start = 0;
  std::size_t frames = 0;  // T
  std::size_t future = 0;  // T_f
  std::vector<geometry::Trajectory> trajectories;

  std::size_t last_observed() const { return start + frames - 1; }
};

enum class TrackState { kActive, kTerminated };

struct TrackEntry {
  std::size_t frame = 0;
  geometry::Pose pose;
  bool provisional = false;  // forecast, not yet observed
};

struct Track {
  int id = 0;
  std::vector<TrackEntry> entries;  // strictly increasing frames
  TrackState state = TrackState::kActive;
};

struct TrackingConfig {
  double threshold = 0.5;  // meters
  double presence = 0.5;   // occurrence threshold tau
  double visible = 0.5;    // joints used for distances need both sides above this
  bool hungarian = false;  // optimal instead of greedy pairing
};

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prev slot, next slot)
  std::vector<std::size_t> spawned;     // next slots that start a new identity
  std::vector<std::size_t> terminated;  // prev slots whose identity ends
};

// Mean 3D joint distance in meters over joints visible in both poses (all
// joints when none are).
double pose_distance(const geometry::Pose& a, const geometry::Pose& b,
                     const geometry::CameraIntrinsics& cam, double visible = 0.5);

/// Links the people of `next` to those of `prev` at their shared observed
/// frame. Throws ProtocolError when the snippets share no observed frame.
Association associate(const SnippetResult& prev, const SnippetResult& next,
                      const geometry::CameraIntrinsics& cam, const TrackingConfig& config);

/// Folds associate over snippets tiled with a one-frame overlap
/// (next.start == prev.start + T - 1). Throws ProtocolError on a gap.
std::vector<Track> track_video(const std::vector<SnippetResult>& snippets,
                               const geometry::CameraIntrinsics& cam,
                               const TrackingConfig& config);

/// Frame-to-frame optimal assignment for single-frame models. `frames[f]`
/// lists the poses detected at video frame f.
std::vector<Track> track_single_frame(const std::vector<std::vector<geometry::Pose>>& frames,
                                      const geometry::CameraIntrinsics& cam,
                                      const TrackingConfig& config);

// Observed (non-provisional) pose of `track` at `frame`, if any.
const geometry::Pose* pose_at(const Track& track, std::size_t frame);

}  // namespace snipper::tracking
