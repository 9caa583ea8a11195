#pragma once

#include <cstddef>
#include <vector>

#include "snipper/geometry.hpp"
#include "snipper/model.hpp"
#include "snipper/tensor.hpp"

namespace snipper::matching {

using CostMatrix = std::vector<std::vector<double>>;  // rows: predictions, cols: targets

/// target_to_pred[j] is the prediction matched to target j.
struct Assignment {
  std::vector<std::size_t> target_to_pred;
  double total_cost = 0.0;
};

// The cost terms below read pose values as given, so callers pass both sides
// in the same units (training uses loss space, see to_loss_space). Prediction
// slots must all be filled; target slots may be empty.

// -(sum of predicted occurrence over target-present frames) / (#present).
double occ_cost(const geometry::Trajectory& pred, const geometry::Trajectory& target);
// Visibility-weighted mean L1 distance of composed joints.
double traj_cost(const geometry::Trajectory& pred, const geometry::Trajectory& target);
// Mean squared visibility error over all joints and slots; absent target
// slots count as invisible.
double vis_cost(const geometry::Trajectory& pred, const geometry::Trajectory& target);

CostMatrix cost_matrix(const std::vector<geometry::Trajectory>& preds,
                       const std::vector<geometry::Trajectory>& targets);

/// Minimum-cost injective map from columns (targets) to rows (predictions),
/// O(M^2 N). Throws CapacityError when there are more columns than rows.
Assignment hungarian(const CostMatrix& cost);

struct MatchResult {
  Assignment assignment;         // indices refer to `kept_targets`
  std::vector<std::size_t> kept_targets;
  std::vector<std::size_t> dropped_targets;  // never present or never visible
};

// Drops degenerate targets (with a warning on stderr) and matches the rest.
MatchResult match(const std::vector<geometry::Trajectory>& preds,
                  const std::vector<geometry::Trajectory>& targets);

/// Pixel-space trajectory -> loss space: root (x / W_in, y / H_in, d) and
/// offsets normalized to meters with the trajectory's own root depth.
geometry::Trajectory to_loss_space(const geometry::Trajectory& pixel, double image_width,
                                   double image_height, const geometry::CameraIntrinsics& cam);

/// Loss-space trajectories of one decoder layer (values only, no graph).
std::vector<geometry::Trajectory> layer_trajectories(const model::LayerPrediction& layer,
                                                     std::size_t people, std::size_t slots,
                                                     std::size_t joints);

struct LossWeights {
  double occ = 1.0;
  double traj = 1.0;
  double vis = 1.0;
  double offset = 1.0;
  double smooth = 1.0;
  double heatmap = 1.0;
};

struct LossConfig {
  LossWeights weights;
  double log_floor_prob = 1e-8;
  // Also push matched predictions toward absence where the target is absent.
  bool supervise_absent = false;
};

struct LossBreakdown {
  double occ = 0.0;
  double traj = 0.0;
  double vis = 0.0;
  double offset = 0.0;
  double smooth = 0.0;
  double heatmap = 0.0;
  double total = 0.0;
};

struct TrainingLoss {
  Tensor total;                      // differentiable scalar
  std::vector<LossBreakdown> layers; // heatmap term is only in `summed`
  LossBreakdown summed;
  MatchResult match;
  std::size_t clamped_logs = 0;
};

/// Targets are loss-space trajectories. Matching uses the final layer and is
/// reused for every layer; pose terms are divided by the number of kept
/// targets, the heatmap term by the number of frames.
TrainingLoss training_loss(const std::vector<model::LayerPrediction>& layers,
                           const std::vector<geometry::Trajectory>& targets,
                           const Tensor& heatmaps, const Tensor& target_heatmaps,
                           std::size_t people, std::size_t slots, std::size_t joints,
                           const LossConfig& config = {});

/// Per-frame people in pixel units -> [T, H, W, N_J] maps holding, per joint
/// channel, the max over people of Gaussians (sigma in grid cells) centered
/// at each visible joint. Pixel x maps to grid x / W_in * (W - 1).
Tensor target_heatmaps(const std::vector<std::vector<geometry::Pose>>& frames,
                       std::size_t joints, std::size_t height, std::size_t width,
                       double image_width, double image_height, double sigma = 2.0);

}  // namespace snipper::matching
