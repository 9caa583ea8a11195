#include "snipper/matching.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "snipper/error.hpp"
#include "snipper/ops.hpp"

namespace snipper::matching {

using geometry::Pose;
using geometry::Trajectory;

namespace {

void require_same_length(const Trajectory& pred, const Trajectory& target) {
  if (pred.poses.size() != target.poses.size()) {
    throw DimensionError("trajectory lengths differ: " + std::to_string(pred.poses.size()) +
                         " vs " + std::to_string(target.poses.size()));
  }
}

const Pose& pred_pose(const Trajectory& pred, std::size_t t) {
  if (!pred.poses[t]) throw ContractError("prediction slot " + std::to_string(t) + " is empty");
  return *pred.poses[t];
}

double visible_weight(const Trajectory& target) {
  double w = 0.0;
  for (const auto& p : target.poses)
    if (p)
      for (double v : p->visibility) w += v;
  return w;
}

std::size_t present_count(const Trajectory& target) {
  return static_cast<std::size_t>(
      std::count_if(target.poses.begin(), target.poses.end(), [](const auto& p) { return p.has_value(); }));
}

}  // namespace

double occ_cost(const Trajectory& pred, const Trajectory& target) {
  require_same_length(pred, target);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t t = 0; t < target.poses.size(); ++t) {
    if (!target.poses[t]) continue;
    sum += pred_pose(pred, t).occurrence;
    ++present;
  }
  if (present == 0) throw DegenerateError("target is never present");
  return -sum / static_cast<double>(present);
}

double traj_cost(const Trajectory& pred, const Trajectory& target) {
  require_same_length(pred, target);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < target.poses.size(); ++t) {
    if (!target.poses[t]) continue;
    const auto tj = geometry::compose_joints(*target.poses[t]);
    const auto pj = geometry::compose_joints(pred_pose(pred, t));
    if (pj.size() != tj.size()) throw DimensionError("joint counts differ");
    for (std::size_t k = 0; k < tj.size(); ++k) {
      const double v = target.poses[t]->visibility[k];
      if (v == 0.0) continue;
      num += v * (std::abs(pj[k][0] - tj[k][0]) + std::abs(pj[k][1] - tj[k][1]) +
                  std::abs(pj[k][2] - tj[k][2]));
      den += v;
    }
  }
  if (den == 0.0) throw DegenerateError("target has no visible joint");
  return num / den;
}

double vis_cost(const Trajectory& pred, const Trajectory& target) {
  require_same_length(pred, target);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.poses.size(); ++t) {
    const Pose& p = pred_pose(pred, t);
    for (std::size_t k = 0; k < p.visibility.size(); ++k) {
      const double tv = target.poses[t] ? target.poses[t]->visibility.at(k) : 0.0;
      const double d = p.visibility[k] - tv;
      sum += d * d;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

CostMatrix cost_matrix(const std::vector<Trajectory>& preds, const std::vector<Trajectory>& targets) {
  CostMatrix cost(preds.size(), std::vector<double>(targets.size()));
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < targets.size(); ++j)
      cost[i][j] = occ_cost(preds[i], targets[j]) + traj_cost(preds[i], targets[j]) +
                   vis_cost(preds[i], targets[j]);
  return cost;
}

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n_pred = cost.size();
  const std::size_t n_tgt = n_pred ? cost[0].size() : 0;
  for (const auto& row : cost)
    if (row.size() != n_tgt) throw DimensionError("ragged cost matrix");
  if (n_tgt > n_pred) {
    throw CapacityError(std::to_string(n_tgt) + " targets exceed " + std::to_string(n_pred) +
                        " predictions");
  }
  Assignment out;
  if (n_tgt == 0) return out;
  for (const auto& row : cost)
    for (double c : row)
      if (!std::isfinite(c)) throw NumericError("non-finite matching cost");

  // Potential-based shortest augmenting paths; targets are the rows of the
  // working problem (1-based, index 0 is the virtual source).
  const std::size_t n = n_tgt, m = n_pred;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[j - 1][i0 - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.target_to_pred.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (owner[j] != 0) out.target_to_pred[owner[j] - 1] = j - 1;
  for (std::size_t t = 0; t < n; ++t) out.total_cost += cost[out.target_to_pred[t]][t];
  return out;
}

MatchResult match(const std::vector<Trajectory>& preds, const std::vector<Trajectory>& targets) {
  MatchResult out;
  std::vector<Trajectory> kept;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (present_count(targets[j]) == 0 || visible_weight(targets[j]) == 0.0) {
      std::cerr << "warning: dropping degenerate target " << j
                << " (never present or never visible)\n";
      out.dropped_targets.push_back(j);
      continue;
    }
    out.kept_targets.push_back(j);
    kept.push_back(targets[j]);
  }
  out.assignment = hungarian(cost_matrix(preds, kept));
  return out;
}

Trajectory to_loss_space(const Trajectory& pixel, double image_width, double image_height,
                         const geometry::CameraIntrinsics& cam) {
  Trajectory out;
  out.identity = pixel.identity;
  out.poses.resize(pixel.poses.size());
  for (std::size_t t = 0; t < pixel.poses.size(); ++t) {
    if (!pixel.poses[t]) continue;
    Pose p = *pixel.poses[t];
    for (auto& o : p.offsets) o = geometry::normalize_offset(o, p.root[2], cam);
    p.root[0] /= image_width;
    p.root[1] /= image_height;
    out.poses[t] = std::move(p);
  }
  return out;
}

namespace {

double logistic(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

}  // namespace

std::vector<Trajectory> layer_trajectories(const model::LayerPrediction& layer, std::size_t people,
                                           std::size_t slots, std::size_t joints) {
  const auto xy = layer.root_xy.values();
  const auto d = layer.root_depth.values();
  const auto off = layer.offsets.values();
  const auto vis = layer.vis_logits.values();
  const auto occ = layer.occ_logits.values();
  if (d.size() != people * slots || off.size() != people * slots * joints * 3) {
    throw DimensionError("layer prediction does not match people/slots/joints");
  }
  std::vector<Trajectory> out(people);
  for (std::size_t i = 0; i < people; ++i) {
    out[i].identity = static_cast<int>(i);
    out[i].poses.resize(slots);
    for (std::size_t t = 0; t < slots; ++t) {
      const std::size_t q = i * slots + t;
      Pose p = Pose::zeros(joints);
      p.root = {xy[2 * q], xy[2 * q + 1], d[q]};
      for (std::size_t k = 0; k < joints; ++k) {
        const std::size_t base = (q * joints + k) * 3;
        p.offsets[k] = {off[base], off[base + 1], off[base + 2]};
        p.visibility[k] = logistic(vis[q * joints + k]);
      }
      p.occurrence = logistic(occ[q]);
      out[i].poses[t] = std::move(p);
    }
  }
  return out;
}

namespace {

// One layer's pose terms given the fixed assignment. Inputs are the gathered
// rows of all matched pairs (pair-major, slot-minor) plus constant targets.
struct PairTensors {
  std::vector<std::size_t> rows;          // query rows of matched predictions
  std::vector<double> present;            // [R]
  std::vector<double> joint_target;       // [R, NJ*3] composed target joints
  std::vector<double> offset_target;      // [R, NJ*3]
  std::vector<double> position_weight;    // [R, NJ*3] vis / pair weight / M
  std::vector<double> vis_target;         // [R, NJ]
  std::vector<std::size_t> smooth_cur, smooth_prev;  // indices into rows
};

Tensor weighted_sum(const Tensor& x, std::vector<double> weights) {
  return ops::sum(ops::mul(x, Tensor(x.shape(), std::move(weights))));
}

}  // namespace

TrainingLoss training_loss(const std::vector<model::LayerPrediction>& layers,
                           const std::vector<Trajectory>& targets, const Tensor& heatmaps,
                           const Tensor& target_heatmaps, std::size_t people, std::size_t slots,
                           std::size_t joints, const LossConfig& config) {
  if (layers.empty()) throw ContractError("training_loss needs at least one decoder layer");
  if (heatmaps.shape() != target_heatmaps.shape()) {
    throw DimensionError("heatmap shape " + shape_string(heatmaps.shape()) + " vs target " +
                         shape_string(target_heatmaps.shape()));
  }
  for (const auto& t : targets)
    if (t.poses.size() != slots) throw DimensionError("target trajectory length != slots");

  TrainingLoss out;
  out.match = match(layer_trajectories(layers.back(), people, slots, joints), targets);
  const auto& assign = out.match.assignment.target_to_pred;
  const std::size_t m = assign.size();
  const double inv_m = 1.0 / static_cast<double>(std::max<std::size_t>(m, 1));
  const std::size_t nj3 = joints * 3;

  PairTensors pt;
  std::vector<bool> matched(people, false);
  for (std::size_t j = 0; j < m; ++j) {
    const Trajectory& target = targets[out.match.kept_targets[j]];
    const std::size_t pred = assign[j];
    matched[pred] = true;
    const double pair_weight = visible_weight(target);
    for (std::size_t t = 0; t < slots; ++t) {
      const std::size_t r = pt.rows.size();
      pt.rows.push_back(pred * slots + t);
      if (t > 0) {
        pt.smooth_cur.push_back(r);
        pt.smooth_prev.push_back(r - 1);
      }
      const auto& pose = target.poses[t];
      pt.present.push_back(pose ? 1.0 : 0.0);
      if (pose) {
        const auto joints_t = geometry::compose_joints(*pose);
        for (std::size_t k = 0; k < joints; ++k) {
          for (std::size_t a = 0; a < 3; ++a) {
            pt.joint_target.push_back(joints_t[k][a]);
            pt.offset_target.push_back(pose->offsets[k][a]);
            pt.position_weight.push_back(pose->visibility[k] / pair_weight * inv_m);
          }
          pt.vis_target.push_back(pose->visibility[k]);
        }
      } else {
        pt.joint_target.insert(pt.joint_target.end(), nj3, 0.0);
        pt.offset_target.insert(pt.offset_target.end(), nj3, 0.0);
        pt.position_weight.insert(pt.position_weight.end(), nj3, 0.0);
        pt.vis_target.insert(pt.vis_target.end(), joints, 0.0);
      }
    }
  }
  const std::size_t r_count = pt.rows.size();
  const double log_floor = std::log(config.log_floor_prob);

  // Occurrence weights over all queries: log o where a matched target is
  // present, log(1 - o) for every slot of an unmatched prediction.
  std::vector<double> w_pos(people * slots, 0.0), w_neg(people * slots, 0.0);
  for (std::size_t r = 0; r < r_count; ++r) {
    if (pt.present[r] > 0.0) {
      w_pos[pt.rows[r]] = -inv_m;
    } else if (config.supervise_absent) {
      w_neg[pt.rows[r]] = -inv_m;
    }
  }
  for (std::size_t i = 0; i < people; ++i)
    if (!matched[i])
      for (std::size_t t = 0; t < slots; ++t) w_neg[i * slots + t] = -inv_m;

  const auto& w = config.weights;
  Tensor total;
  auto accumulate = [&](const Tensor& term, double weight) {
    if (weight == 0.0) return;
    const Tensor scaled = weight == 1.0 ? term : ops::scale(term, weight);
    total = total.defined() ? ops::add(total, scaled) : scaled;
  };

  for (const auto& layer : layers) {
    LossBreakdown b;
    std::size_t clamped = 0;
    const Tensor occ = ops::add(
        weighted_sum(ops::log_sigmoid(layer.occ_logits, log_floor, &clamped), w_pos),
        weighted_sum(ops::log_sigmoid(ops::scale(layer.occ_logits, -1.0), log_floor, &clamped),
                     w_neg));
    out.clamped_logs += clamped;
    b.occ = occ.item();
    accumulate(occ, w.occ);

    if (r_count > 0) {
      const Tensor root = ops::concat({ops::gather_rows(layer.root_xy, pt.rows),
                                       ops::gather_rows(layer.root_depth, pt.rows)},
                                      1);  // [R, 3]
      std::vector<std::size_t> tile;
      tile.reserve(r_count * joints);
      for (std::size_t r = 0; r < r_count; ++r) tile.insert(tile.end(), joints, r);
      const Tensor root_tiled = ops::reshape(ops::gather_rows(root, tile), {r_count, nj3});
      const Tensor offsets = ops::gather_rows(layer.offsets, pt.rows);  // [R, NJ*3]
      const Tensor joints_pred = ops::add(root_tiled, offsets);

      const Tensor traj = ops::l1_loss(joints_pred, Tensor({r_count, nj3}, pt.joint_target),
                                       Tensor({r_count, nj3}, pt.position_weight));
      const Tensor offset = ops::l1_loss(offsets, Tensor({r_count, nj3}, pt.offset_target),
                                         Tensor({r_count, nj3}, pt.position_weight));
      const Tensor vis_prob = ops::sigmoid(ops::gather_rows(layer.vis_logits, pt.rows));
      const Tensor vis = ops::scale(ops::l2_loss(vis_prob, Tensor({r_count, joints}, pt.vis_target)),
                                    inv_m / static_cast<double>(joints * slots));
      b.traj = traj.item();
      b.offset = offset.item();
      b.vis = vis.item();
      accumulate(traj, w.traj);
      accumulate(offset, w.offset);
      accumulate(vis, w.vis);
      if (!pt.smooth_cur.empty()) {
        const Tensor smooth = ops::scale(
            ops::l2_loss(ops::gather_rows(offsets, pt.smooth_cur),
                         ops::gather_rows(offsets, pt.smooth_prev)),
            inv_m / static_cast<double>(joints * (slots - 1)));
        b.smooth = smooth.item();
        accumulate(smooth, w.smooth);
      }
    }
    b.total = w.occ * b.occ + w.traj * b.traj + w.vis * b.vis + w.offset * b.offset +
              w.smooth * b.smooth;
    out.summed.occ += b.occ;
    out.summed.traj += b.traj;
    out.summed.vis += b.vis;
    out.summed.offset += b.offset;
    out.summed.smooth += b.smooth;
    out.layers.push_back(b);
  }

  const double frames = static_cast<double>(heatmaps.rank() > 0 ? heatmaps.dim(0) : 1);
  const Tensor heat = ops::scale(ops::l2_loss(heatmaps, target_heatmaps), 1.0 / frames);
  out.summed.heatmap = heat.item();
  accumulate(heat, w.heatmap);
  out.summed.total = w.occ * out.summed.occ + w.traj * out.summed.traj + w.vis * out.summed.vis +
                     w.offset * out.summed.offset + w.smooth * out.summed.smooth +
                     w.heatmap * out.summed.heatmap;
  out.total = total;
  if (out.clamped_logs > 0) {
    std::cerr << "warning: " << out.clamped_logs << " occurrence log terms hit the floor\n";
  }
  return out;
}

Tensor target_heatmaps(const std::vector<std::vector<Pose>>& frames, std::size_t joints,
                       std::size_t height, std::size_t width, double image_width,
                       double image_height, double sigma) {
  if (height == 0 || width == 0) throw DimensionError("heatmap grid must be non-empty");
  if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
  std::vector<double> maps(frames.size() * height * width * joints, 0.0);
  const double sx = width > 1 ? static_cast<double>(width - 1) / image_width : 0.0;
  const double sy = height > 1 ? static_cast<double>(height - 1) / image_height : 0.0;
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (const Pose& pose : frames[t]) {
      if (pose.joint_count() != joints) throw DimensionError("pose joint count mismatch");
      const auto js = geometry::compose_joints(pose);
      for (std::size_t k = 0; k < joints; ++k) {
        if (pose.visibility[k] < 0.5) continue;
        const double gx = js[k][0] * sx, gy = js[k][1] * sy;
        for (std::size_t i = 0; i < height; ++i) {
          const double dy = static_cast<double>(i) - gy;
          for (std::size_t j = 0; j < width; ++j) {
            const double dx = static_cast<double>(j) - gx;
            double& cell = maps[((t * height + i) * width + j) * joints + k];
            cell = std::max(cell, std::exp(-(dx * dx + dy * dy) * inv_two_var));
          }
        }
      }
    }
  }
  return Tensor({frames.size(), height, width, joints}, std::move(maps));
}

}  // namespace snipper::matching
