#include "snipper/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "snipper/error.hpp"
#include "snipper/matching.hpp"

namespace snipper::tracking {

using geometry::Pose;

namespace {

constexpr double kUnreachable = std::numeric_limits<double>::infinity();

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

// dist[i][j] between row i and column j; infinite entries never pair.
Pairs pair_up(const std::vector<std::vector<double>>& dist, double threshold, bool optimal) {
  Pairs out;
  const std::size_t rows = dist.size();
  const std::size_t cols = rows ? dist[0].size() : 0;
  if (rows == 0 || cols == 0) return out;
  if (!optimal) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        if (dist[i][j] <= threshold) cand.emplace_back(dist[i][j], i, j);
    std::sort(cand.begin(), cand.end());
    std::vector<bool> row_used(rows, false), col_used(cols, false);
    for (const auto& [d, i, j] : cand) {
      if (row_used[i] || col_used[j]) continue;
      row_used[i] = col_used[j] = true;
      out.emplace_back(i, j);
    }
  } else {
    // Gated costs: anything beyond the threshold costs the same, then is cut.
    const double cap = 2.0 * threshold + 1.0;
    const bool transpose = cols > rows;
    matching::CostMatrix cost(transpose ? cols : rows,
                              std::vector<double>(transpose ? rows : cols));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const double c = dist[i][j] <= threshold ? dist[i][j] : cap;
        (transpose ? cost[j][i] : cost[i][j]) = c;
      }
    const auto a = matching::hungarian(cost);
    for (std::size_t c = 0; c < a.target_to_pred.size(); ++c) {
      const std::size_t i = transpose ? c : a.target_to_pred[c];
      const std::size_t j = transpose ? a.target_to_pred[c] : c;
      if (dist[i][j] <= threshold) out.emplace_back(i, j);
    }
    std::sort(out.begin(), out.end());
  }
  return out;
}

const Pose* slot_pose(const geometry::Trajectory& traj, std::size_t slot) {
  if (slot >= traj.poses.size() || !traj.poses[slot]) return nullptr;
  return &*traj.poses[slot];
}

bool present(const Pose* p, double presence) { return p != nullptr && p->occurrence >= presence; }

bool observed_anywhere(const SnippetResult& s, std::size_t slot_owner, double presence) {
  for (std::size_t t = 0; t < s.frames; ++t)
    if (present(slot_pose(s.trajectories[slot_owner], t), presence)) return true;
  return false;
}

void validate(const SnippetResult& s) {
  if (s.frames == 0) throw ContractError("snippet has no observed frame");
  for (const auto& traj : s.trajectories)
    if (traj.poses.size() != s.frames + s.future) {
      throw DimensionError("trajectory length " + std::to_string(traj.poses.size()) +
                           " != T + T_f = " + std::to_string(s.frames + s.future));
    }
}

void add_entry(Track& track, std::size_t frame, const Pose& pose, bool provisional) {
  auto it = std::lower_bound(track.entries.begin(), track.entries.end(), frame,
                             [](const TrackEntry& e, std::size_t f) { return e.frame < f; });
  if (it != track.entries.end() && it->frame == frame) {
    *it = TrackEntry{frame, pose, provisional};
  } else {
    track.entries.insert(it, TrackEntry{frame, pose, provisional});
  }
}

// Appends the snippet's above-threshold poses of `slot` to `track`.
void absorb(Track& track, const SnippetResult& s, std::size_t slot, double presence) {
  const auto& traj = s.trajectories[slot];
  for (std::size_t t = 0; t < traj.poses.size(); ++t) {
    const Pose* p = slot_pose(traj, t);
    if (!present(p, presence)) continue;
    add_entry(track, s.start + t, *p, t >= s.frames);
  }
}

}  // namespace

double pose_distance(const Pose& a, const Pose& b, const geometry::CameraIntrinsics& cam,
                     double visible) {
  if (a.joint_count() != b.joint_count()) throw DimensionError("joint counts differ");
  const auto ja = geometry::pose_to_3d(a, cam);
  const auto jb = geometry::pose_to_3d(b, cam);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < ja.size(); ++k) {
    if (a.visibility[k] < visible || b.visibility[k] < visible) continue;
    sum += geometry::distance(ja[k], jb[k]);
    ++n;
  }
  if (n == 0) {
    for (std::size_t k = 0; k < ja.size(); ++k) sum += geometry::distance(ja[k], jb[k]);
    n = ja.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Association associate(const SnippetResult& prev, const SnippetResult& next,
                      const geometry::CameraIntrinsics& cam, const TrackingConfig& config) {
  validate(prev);
  validate(next);
  if (next.start < prev.start || next.start > prev.last_observed()) {
    throw ProtocolError("snippets starting at " + std::to_string(prev.start) + " and " +
                        std::to_string(next.start) + " share no observed frame");
  }
  const std::size_t tp = next.start - prev.start;  // common frame as a prev slot
  const std::size_t n_prev = prev.trajectories.size(), n_next = next.trajectories.size();
  std::vector<std::vector<double>> dist(n_prev, std::vector<double>(n_next, kUnreachable));
  for (std::size_t i = 0; i < n_prev; ++i) {
    const Pose* a = slot_pose(prev.trajectories[i], tp);
    if (!present(a, config.presence)) continue;
    for (std::size_t j = 0; j < n_next; ++j) {
      const Pose* b = slot_pose(next.trajectories[j], 0);
      if (!present(b, config.presence)) continue;
      dist[i][j] = pose_distance(*a, *b, cam, config.visible);
    }
  }
  Association out;
  out.pairs = pair_up(dist, config.threshold, config.hungarian);
  std::vector<bool> prev_used(n_prev, false), next_used(n_next, false);
  for (const auto& [i, j] : out.pairs) prev_used[i] = next_used[j] = true;
  for (std::size_t i = 0; i < n_prev; ++i)
    if (!prev_used[i]) out.terminated.push_back(i);
  for (std::size_t j = 0; j < n_next; ++j)
    if (!next_used[j] && observed_anywhere(next, j, config.presence)) out.spawned.push_back(j);
  return out;
}

std::vector<Track> track_video(const std::vector<SnippetResult>& snippets,
                               const geometry::CameraIntrinsics& cam,
                               const TrackingConfig& config) {
  std::vector<Track> tracks;
  if (snippets.empty()) return tracks;
  int next_id = 0;
  // slot_track[s] = index into `tracks` for slot s of the current snippet.
  std::vector<std::optional<std::size_t>> slot_track;

  auto spawn = [&](const SnippetResult& s, std::size_t slot) {
    Track t;
    t.id = next_id++;
    absorb(t, s, slot, config.presence);
    tracks.push_back(std::move(t));
    return tracks.size() - 1;
  };

  const SnippetResult& first = snippets.front();
  validate(first);
  slot_track.assign(first.trajectories.size(), std::nullopt);
  for (std::size_t s = 0; s < first.trajectories.size(); ++s)
    if (observed_anywhere(first, s, config.presence)) slot_track[s] = spawn(first, s);

  for (std::size_t k = 1; k < snippets.size(); ++k) {
    const SnippetResult& prev = snippets[k - 1];
    const SnippetResult& next = snippets[k];
    validate(next);
    if (next.start != prev.last_observed()) {
      throw ProtocolError("snippet " + std::to_string(k) + " starts at frame " +
                          std::to_string(next.start) + ", expected " +
                          std::to_string(prev.last_observed()));
    }
    const Association a = associate(prev, next, cam, config);

    // Observed content of `next` supersedes earlier forecasts it covers.
    const std::size_t covered_end = next.start + next.frames;
    for (auto& t : tracks) {
      std::erase_if(t.entries, [&](const TrackEntry& e) {
        return e.provisional && e.frame >= next.start && e.frame < covered_end;
      });
    }
    std::vector<std::optional<std::size_t>> next_slot_track(next.trajectories.size());
    for (const auto& [i, j] : a.pairs) {
      // Any slot present at the shared frame was observed, so it has a track.
      next_slot_track[j] = slot_track[i];
      absorb(tracks[*slot_track[i]], next, j, config.presence);
    }
    for (std::size_t i : a.terminated)
      if (slot_track[i]) tracks[*slot_track[i]].state = TrackState::kTerminated;
    for (std::size_t j : a.spawned) next_slot_track[j] = spawn(next, j);
    slot_track = std::move(next_slot_track);
  }
  std::erase_if(tracks, [](const Track& t) { return t.entries.empty(); });
  return tracks;
}

std::vector<Track> track_single_frame(const std::vector<std::vector<Pose>>& frames,
                                      const geometry::CameraIntrinsics& cam,
                                      const TrackingConfig& config) {
  std::vector<Track> tracks;
  int next_id = 0;
  // Track indices and poses of the people detected in the previous frame.
  std::vector<std::size_t> prev_tracks;
  std::vector<const Pose*> prev_poses;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<const Pose*> cur;
    for (const auto& p : frames[f])
      if (p.occurrence >= config.presence) cur.push_back(&p);
    std::vector<std::vector<double>> dist(prev_poses.size(),
                                          std::vector<double>(cur.size(), kUnreachable));
    for (std::size_t i = 0; i < prev_poses.size(); ++i)
      for (std::size_t j = 0; j < cur.size(); ++j)
        dist[i][j] = pose_distance(*prev_poses[i], *cur[j], cam, config.visible);
    const Pairs pairs = pair_up(dist, config.threshold, true);
    std::vector<std::optional<std::size_t>> cur_track(cur.size());
    std::vector<bool> prev_used(prev_poses.size(), false);
    for (const auto& [i, j] : pairs) {
      prev_used[i] = true;
      cur_track[j] = prev_tracks[i];
    }
    for (std::size_t i = 0; i < prev_poses.size(); ++i)
      if (!prev_used[i]) tracks[prev_tracks[i]].state = TrackState::kTerminated;
    std::vector<std::size_t> next_tracks;
    for (std::size_t j = 0; j < cur.size(); ++j) {
      if (!cur_track[j]) {
        Track t;
        t.id = next_id++;
        tracks.push_back(std::move(t));
        cur_track[j] = tracks.size() - 1;
      }
      tracks[*cur_track[j]].entries.push_back(TrackEntry{f, *cur[j], false});
      next_tracks.push_back(*cur_track[j]);
    }
    prev_tracks = std::move(next_tracks);
    prev_poses = std::move(cur);
  }
  return tracks;
}

const Pose* pose_at(const Track& track, std::size_t frame) {
  auto it = std::lower_bound(track.entries.begin(), track.entries.end(), frame,
                             [](const TrackEntry& e, std::size_t f) { return e.frame < f; });
  if (it == track.entries.end() || it->frame != frame || it->provisional) return nullptr;
  return &it->pose;
}

}  // namespace snipper::tracking
