#include "snipper/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <tuple>

#include "snipper/error.hpp"

namespace snipper::metrics {

namespace {

constexpr double kMillimeters = 1000.0;

bool visible(double v) { return v >= 0.5; }

void check_sizes(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
                 const std::vector<double>& visibility) {
  if (pred.size() != target.size() || visibility.size() != target.size()) {
    throw DimensionError("joint lists differ in length");
  }
}

double mean_error(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
                  const std::vector<double>& visibility, const Vec3& pred_shift,
                  const Vec3& target_shift) {
  check_sizes(pred, target, visibility);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!visible(visibility[k])) continue;
    const Vec3 a{pred[k][0] - pred_shift[0], pred[k][1] - pred_shift[1], pred[k][2] - pred_shift[2]};
    const Vec3 b{target[k][0] - target_shift[0], target[k][1] - target_shift[1],
                 target[k][2] - target_shift[2]};
    sum += geometry::distance(a, b);
    ++n;
  }
  if (n == 0) throw DegenerateError("no visible joint to evaluate");
  return kMillimeters * sum / static_cast<double>(n);
}

Vec3 root_3d(const geometry::Pose& p, const geometry::CameraIntrinsics& cam) {
  return geometry::lift_to_3d(p.root, cam);
}

std::vector<std::vector<double>> root_distances(const std::vector<EvalPerson>& preds,
                                                const std::vector<EvalPerson>& targets,
                                                const geometry::CameraIntrinsics& cam) {
  std::vector<Vec3> pr, tr;
  for (const auto& p : preds) pr.push_back(root_3d(p.pose, cam));
  for (const auto& t : targets) tr.push_back(root_3d(t.pose, cam));
  std::vector<std::vector<double>> d(pr.size(), std::vector<double>(tr.size()));
  for (std::size_t i = 0; i < pr.size(); ++i)
    for (std::size_t j = 0; j < tr.size(); ++j) d[i][j] = geometry::distance(pr[i], tr[j]);
  return d;
}

// Greedy pairing over rows/cols not yet used.
void greedy(const std::vector<std::vector<double>>& d, double gate, std::vector<bool>& pred_used,
            std::vector<bool>& target_used, std::vector<PersonPair>& out) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (pred_used[i]) continue;
    for (std::size_t j = 0; j < d[i].size(); ++j)
      if (!target_used[j] && d[i][j] <= gate) cand.emplace_back(d[i][j], i, j);
  }
  std::sort(cand.begin(), cand.end());
  for (const auto& [dist, i, j] : cand) {
    if (pred_used[i] || target_used[j]) continue;
    pred_used[i] = target_used[j] = true;
    out.push_back({i, j});
  }
}

std::size_t visible_count(const geometry::Pose& p) {
  return static_cast<std::size_t>(
      std::count_if(p.visibility.begin(), p.visibility.end(), visible));
}

}  // namespace

double mpjpe(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
             const std::vector<double>& visibility) {
  return mean_error(pred, target, visibility, {0, 0, 0}, {0, 0, 0});
}

double mpjpe_rel(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
                 const std::vector<double>& visibility) {
  if (pred.empty() || target.empty()) throw DegenerateError("no joints");
  return mean_error(pred, target, visibility, pred[0], target[0]);
}

double pck3d(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
             const std::vector<double>& visibility, double threshold_mm) {
  check_sizes(pred, target, visibility);
  std::size_t hit = 0, n = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!visible(visibility[k])) continue;
    ++n;
    if (kMillimeters * geometry::distance(pred[k], target[k]) < threshold_mm) ++hit;
  }
  if (n == 0) throw DegenerateError("no visible joint to evaluate");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(n);
}

std::vector<PersonPair> match_people(const std::vector<EvalPerson>& preds,
                                     const std::vector<EvalPerson>& targets,
                                     const geometry::CameraIntrinsics& cam, double gate) {
  std::vector<PersonPair> out;
  std::vector<bool> pu(preds.size(), false), tu(targets.size(), false);
  greedy(root_distances(preds, targets, cam), gate, pu, tu, out);
  return out;
}

Confusion f1_at(const std::vector<EvalFrame>& frames, const geometry::CameraIntrinsics& cam,
                double thr, double gate) {
  Confusion c;
  for (const auto& frame : frames) {
    const auto pairs = match_people(frame.preds, frame.targets, cam, gate);
    std::vector<bool> pu(frame.preds.size(), false), tu(frame.targets.size(), false);
    for (const auto& pr : pairs) {
      pu[pr.pred] = tu[pr.target] = true;
      const auto& tp = frame.targets[pr.target].pose;
      const auto a = geometry::pose_to_3d(frame.preds[pr.pred].pose, cam);
      const auto b = geometry::pose_to_3d(tp, cam);
      if (a.size() != b.size()) throw DimensionError("joint counts differ");
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (!visible(tp.visibility[k])) continue;
        if (geometry::distance(a[k], b[k]) < thr) {
          ++c.tp;
        } else {
          ++c.fp;
          ++c.fn;
        }
      }
    }
    for (std::size_t i = 0; i < pu.size(); ++i)
      if (!pu[i]) c.fp += frame.preds[i].pose.joint_count();
    for (std::size_t j = 0; j < tu.size(); ++j)
      if (!tu[j]) c.fn += visible_count(frame.targets[j].pose);
  }
  const double tp = static_cast<double>(c.tp);
  c.precision = c.tp + c.fp ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
  c.f1 = c.precision + c.recall > 0.0
             ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
             : 0.0;
  return c;
}

PoseScores pose_scores(const std::vector<EvalFrame>& frames, const geometry::CameraIntrinsics& cam,
                       double gate, double pck_threshold_mm) {
  PoseScores s;
  double err = 0.0, err_rel = 0.0;
  std::size_t hits = 0;
  for (const auto& frame : frames) {
    const auto pairs = match_people(frame.preds, frame.targets, cam, gate);
    for (const auto& t : frame.targets) s.target_joints += visible_count(t.pose);
    for (const auto& pr : pairs) {
      const auto& tp = frame.targets[pr.target].pose;
      const auto a = geometry::pose_to_3d(frame.preds[pr.pred].pose, cam);
      const auto b = geometry::pose_to_3d(tp, cam);
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (!visible(tp.visibility[k])) continue;
        const double d = geometry::distance(a[k], b[k]);
        const Vec3 ar{a[k][0] - a[0][0], a[k][1] - a[0][1], a[k][2] - a[0][2]};
        const Vec3 br{b[k][0] - b[0][0], b[k][1] - b[0][1], b[k][2] - b[0][2]};
        err += d;
        err_rel += geometry::distance(ar, br);
        if (kMillimeters * d < pck_threshold_mm) ++hits;
        ++s.matched_joints;
      }
    }
  }
  if (s.matched_joints > 0) {
    s.mpjpe = kMillimeters * err / static_cast<double>(s.matched_joints);
    s.mpjpe_rel = kMillimeters * err_rel / static_cast<double>(s.matched_joints);
  }
  if (s.target_joints > 0) {
    s.pck = 100.0 * static_cast<double>(hits) / static_cast<double>(s.target_joints);
  }
  return s;
}

std::string event_name(MotEventKind kind) {
  switch (kind) {
    case MotEventKind::kMatch: return "match";
    case MotEventKind::kMiss: return "miss";
    case MotEventKind::kFalsePositive: return "false-positive";
    case MotEventKind::kIdSwitch: return "id-switch";
  }
  return "unknown";
}

MotaResult mota(const std::vector<EvalFrame>& frames, const geometry::CameraIntrinsics& cam,
                double gate) {
  MotaResult r;
  std::map<int, int> last_pred;  // target id -> pred id it was last matched to
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    const auto d = root_distances(frame.preds, frame.targets, cam);
    std::vector<bool> pu(frame.preds.size(), false), tu(frame.targets.size(), false);
    std::vector<PersonPair> pairs;
    for (std::size_t j = 0; j < frame.targets.size(); ++j) {
      const auto it = last_pred.find(frame.targets[j].id);
      if (it == last_pred.end()) continue;
      for (std::size_t i = 0; i < frame.preds.size(); ++i) {
        if (pu[i] || frame.preds[i].id != it->second || d[i][j] > gate) continue;
        pu[i] = tu[j] = true;
        pairs.push_back({i, j});
        break;
      }
    }
    greedy(d, gate, pu, tu, pairs);
    std::sort(pairs.begin(), pairs.end(),
              [](const PersonPair& a, const PersonPair& b) { return a.target < b.target; });
    r.targets += frame.targets.size();
    for (const auto& pr : pairs) {
      const int tid = frame.targets[pr.target].id, pid = frame.preds[pr.pred].id;
      const auto it = last_pred.find(tid);
      if (it != last_pred.end() && it->second != pid) {
        ++r.id_switches;
        r.events.push_back({f, MotEventKind::kIdSwitch, pid, tid});
      }
      ++r.matches;
      r.events.push_back({f, MotEventKind::kMatch, pid, tid});
      last_pred[tid] = pid;
    }
    for (std::size_t j = 0; j < tu.size(); ++j)
      if (!tu[j]) {
        ++r.misses;
        r.events.push_back({f, MotEventKind::kMiss, -1, frame.targets[j].id});
      }
    for (std::size_t i = 0; i < pu.size(); ++i)
      if (!pu[i]) {
        ++r.false_positives;
        r.events.push_back({f, MotEventKind::kFalsePositive, frame.preds[i].id, -1});
      }
  }
  if (r.targets == 0) throw DegenerateError("MOTA needs at least one target detection");
  r.mota = 100.0 * (1.0 - static_cast<double>(r.misses + r.false_positives + r.id_switches) /
                              static_cast<double>(r.targets));
  return r;
}

std::vector<double> path_error(const std::vector<std::vector<Vec3>>& forecasts,
                               const std::vector<std::vector<Vec3>>& targets) {
  if (forecasts.size() != targets.size()) throw DimensionError("sample counts differ");
  std::vector<double> sum;
  std::vector<std::size_t> count;
  for (std::size_t s = 0; s < forecasts.size(); ++s) {
    if (forecasts[s].size() != targets[s].size()) throw DimensionError("horizon lengths differ");
    if (forecasts[s].size() > sum.size()) {
      sum.resize(forecasts[s].size(), 0.0);
      count.resize(forecasts[s].size(), 0);
    }
    for (std::size_t h = 0; h < forecasts[s].size(); ++h) {
      sum[h] += geometry::distance(forecasts[s][h], targets[s][h]);
      ++count[h];
    }
  }
  for (std::size_t h = 0; h < sum.size(); ++h)
    sum[h] = kMillimeters * sum[h] / static_cast<double>(count[h]);
  return sum;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "metric,value,count\n";
  for (const auto& r : rows) out << r.metric << ',' << format_real(r.value) << ',' << r.count << '\n';
}

}  // namespace snipper::metrics
