#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "snipper/geometry.hpp"

namespace snipper::metrics {

using geometry::Vec3;

// Joint inputs are camera-space meters; results are millimeters / percent.
// Joints with visibility < 0.5 are ignored. Throws DegenerateError when no
// joint is visible.
double mpjpe(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
             const std::vector<double>& visibility);
// Both poses translated so their root (joint 0) sits at the origin first.
double mpjpe_rel(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
                 const std::vector<double>& visibility);
// Percent of visible joints strictly closer than threshold_mm.
double pck3d(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
             const std::vector<double>& visibility, double threshold_mm = 150.0);

struct EvalPerson {
  int id = -1;
  geometry::Pose pose;  // pixels / meters
};

struct EvalFrame {
  std::vector<EvalPerson> preds;
  std::vector<EvalPerson> targets;
};

struct PersonPair {
  std::size_t pred = 0;
  std::size_t target = 0;
};

/// Greedy ascending root-distance pairing with a gate (meters).
std::vector<PersonPair> match_people(const std::vector<EvalPerson>& preds,
                                     const std::vector<EvalPerson>& targets,
                                     const geometry::CameraIntrinsics& cam, double gate = 1.0);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Joint-level detection scores: for matched people a visible target joint
/// is a true positive when within `thr` meters, else one false positive and
/// one false negative; unmatched predictions add all their joints as false
/// positives, unmatched targets add their visible joints as false negatives.
Confusion f1_at(const std::vector<EvalFrame>& frames, const geometry::CameraIntrinsics& cam,
                double thr, double gate = 1.0);

/// Scene-level pose accuracy: MPJPE terms over matched people; PCK also
/// counts visible joints of unmatched targets as misses.
struct PoseScores {
  double mpjpe = 0.0;      // mm
  double mpjpe_rel = 0.0;  // mm
  double pck = 0.0;        // percent
  std::size_t matched_joints = 0;
  std::size_t target_joints = 0;
};

PoseScores pose_scores(const std::vector<EvalFrame>& frames, const geometry::CameraIntrinsics& cam,
                       double gate = 1.0, double pck_threshold_mm = 150.0);

enum class MotEventKind { kMatch, kMiss, kFalsePositive, kIdSwitch };

std::string event_name(MotEventKind kind);

struct MotEvent {
  std::size_t frame = 0;
  MotEventKind kind = MotEventKind::kMatch;
  int pred_id = -1;
  int target_id = -1;
};

struct MotaResult {
  double mota = 0.0;  // percent
  std::size_t matches = 0, misses = 0, false_positives = 0, id_switches = 0, targets = 0;
  std::vector<MotEvent> events;
};

/// CLEAR-MOT accounting: a target keeps its previous prediction while that
/// prediction stays within the gate; remaining people pair greedily by root
/// distance. An id switch is logged at the frame a target's matched
/// prediction id changes. Throws DegenerateError with no target detections.
MotaResult mota(const std::vector<EvalFrame>& frames, const geometry::CameraIntrinsics& cam,
                double gate = 1.0);

/// Mean root error in mm per forecast step. forecasts[s][h] and targets[s][h]
/// are the root positions (meters) of sample s at horizon step h.
std::vector<double> path_error(const std::vector<std::vector<Vec3>>& forecasts,
                               const std::vector<std::vector<Vec3>>& targets);

struct MetricRow {
  std::string metric;  // e.g. "mota:occlusion:0"
  double value = 0.0;
  std::size_t count = 0;
};

// "metric,value,count" header plus one row each; values use %.9g.
void write_csv(std::ostream& out, const std::vector<MetricRow>& rows);
std::string format_real(double v);

}  // namespace snipper::metrics
