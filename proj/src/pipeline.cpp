#include "snipper/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "snipper/checkpoint.hpp"
#include "snipper/error.hpp"
#include "snipper/ops.hpp"

namespace snipper::cli {

namespace fs = std::filesystem;
using geometry::Pose;
using geometry::Trajectory;
using geometry::Vec3;

namespace {

constexpr std::uint64_t kDataStream = 0x6a09e667f3bcc909ULL;
constexpr std::uint64_t kOrderStream = 0xbb67ae8584caa73bULL;

std::string seq_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%05zu", i);
  return buf;
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

std::map<std::string, std::string> echo_map(const RunConfig& config) {
  std::map<std::string, std::string> out;
  std::istringstream in(config.echo());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out["run." + line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void accumulate(matching::LossBreakdown& acc, const matching::LossBreakdown& x, double w) {
  acc.occ += w * x.occ;
  acc.traj += w * x.traj;
  acc.vis += w * x.vis;
  acc.offset += w * x.offset;
  acc.smooth += w * x.smooth;
  acc.heatmap += w * x.heatmap;
  acc.total += w * x.total;
}

struct Window {
  std::size_t sequence = 0;
  std::size_t start = 0;
  bool operator<(const Window& o) const {
    return sequence != o.sequence ? sequence < o.sequence : start < o.start;
  }
};

std::vector<Pose> present_poses(const synth::RenderedSequence& seq, std::size_t frame) {
  std::vector<Pose> out;
  for (const auto* a : seq.at_frame(frame))
    if (a->present) out.push_back(synth::annotation_pose(*a));
  return out;
}

std::vector<metrics::EvalPerson> present_targets(const synth::RenderedSequence& seq,
                                                 std::size_t frame, int id_offset) {
  std::vector<metrics::EvalPerson> out;
  for (const auto* a : seq.at_frame(frame))
    if (a->present) out.push_back({a->person + id_offset, synth::annotation_pose(*a)});
  return out;
}

const Pose* slot_pose(const Trajectory& t, std::size_t slot, double presence) {
  if (slot >= t.poses.size() || !t.poses[slot]) return nullptr;
  return t.poses[slot]->occurrence >= presence ? &*t.poses[slot] : nullptr;
}

// Snippet starts tiling a clip with a one-frame overlap (T >= 2) or every
// frame (T = 1).
std::vector<std::size_t> snippet_starts(const synth::Clip& clip, std::size_t frames) {
  std::vector<std::size_t> out;
  if (clip.length < frames) return out;
  const std::size_t stride = frames >= 2 ? frames - 1 : 1;
  for (std::size_t s = clip.start; s + frames <= clip.start + clip.length; s += stride) out.push_back(s);
  return out;
}

std::string key(const std::string& name, const std::string& split, std::size_t h) {
  return name + ":" + split + ":" + std::to_string(h);
}

}  // namespace

const std::vector<synth::Clip>& Dataset::split(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "occlusion") return splits.occlusion;
  throw ConfigError("unknown split '" + name + "'");
}

std::vector<std::size_t> Dataset::train_sequences() const {
  std::set<std::size_t> seen;
  for (const auto& c : splits.train) seen.insert(c.sequence);
  return {seen.begin(), seen.end()};
}

Dataset generate_dataset(const DataConfig& config, std::size_t train_window, std::uint64_t seed) {
  if (config.scenes < 2) throw ConfigError("data.scenes must be at least 2");
  if (config.people_min == 0 || config.people_min > config.people_max) {
    throw ConfigError("need 1 <= data.people_min <= data.people_max");
  }
  Dataset data;
  Rng rng(seed ^ kDataStream);
  for (std::size_t i = 0; i < config.scenes; ++i) {
    synth::SceneConfig sc;
    sc.people = config.people_min + rng.below(config.people_max - config.people_min + 1);
    sc.frames = config.scene_frames;
    sc.linear_speed = config.linear_speed;
    sc.angular_speed = config.angular_speed;
    sc.occlusion_rate = config.occlusion_rate;
    sc.seed = rng.next_u64();
    data.sequences.push_back(synth::render(synth::generate_scene(sc)));
  }
  synth::SplitConfig split;
  split.held_out_fraction = config.held_out_fraction;
  split.train_window = train_window;
  split.eval_window = config.eval_window;
  split.seed = seed;
  data.splits = synth::make_splits(data.sequences, split);
  return data;
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    synth::serialize(data.sequences[i], dir / seq_dir_name(i));
  }
  synth::write_splits(data.splits, dir / "splits.txt");
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  Dataset data;
  for (std::size_t i = 0; fs::is_directory(dir / seq_dir_name(i)); ++i) {
    data.sequences.push_back(synth::deserialize(dir / seq_dir_name(i)));
  }
  if (data.sequences.empty()) throw ParseError(dir.string() + ": no sequences");
  data.splits = synth::read_splits(dir / "splits.txt");
  for (const auto* clips : {&data.splits.train, &data.splits.val, &data.splits.occlusion}) {
    for (const auto& c : *clips) {
      if (c.sequence >= data.sequences.size() ||
          c.start + c.length > data.sequences[c.sequence].frame_count()) {
        throw ParseError(dir.string() + "/splits.txt: clip outside the dataset (sequence " +
                         std::to_string(c.sequence) + ")");
      }
    }
  }
  return data;
}

std::vector<Trajectory> ground_truth_trajectories(const synth::RenderedSequence& seq,
                                                  std::size_t start, std::size_t slots) {
  std::vector<Trajectory> out;
  if (seq.frame_count() == 0) return out;
  for (const auto* a : seq.at_frame(0)) {
    Trajectory t;
    t.identity = a->person;
    t.poses.resize(slots);
    out.push_back(std::move(t));
  }
  for (std::size_t s = 0; s < slots && start + s < seq.frame_count(); ++s) {
    const auto annots = seq.at_frame(start + s);
    for (std::size_t p = 0; p < annots.size() && p < out.size(); ++p) {
      if (annots[p]->present) out[p].poses[s] = synth::annotation_pose(*annots[p]);
    }
  }
  return out;
}

Sample make_sample(const synth::RenderedSequence& seq, std::size_t start,
                   const model::ModelConfig& config, double heatmap_sigma) {
  const std::size_t T = config.frames, S = config.slots();
  if (start + T > seq.frame_count()) throw ContractError("sample window runs past the sequence");
  Sample sample;
  sample.images = synth::frames_tensor(seq, start, T);
  for (const auto& t : ground_truth_trajectories(seq, start, S)) {
    const bool any = std::any_of(t.poses.begin(), t.poses.end(), [](const auto& p) { return p.has_value(); });
    if (!any) continue;
    sample.targets.push_back(matching::to_loss_space(t, static_cast<double>(seq.width),
                                                     static_cast<double>(seq.height), seq.camera));
  }
  std::vector<std::vector<Pose>> observed;
  for (std::size_t f = 0; f < T; ++f) observed.push_back(present_poses(seq, start + f));
  sample.heatmaps = matching::target_heatmaps(observed, config.joints, config.image_height / 4,
                                              config.image_width / 4,
                                              static_cast<double>(seq.width),
                                              static_cast<double>(seq.height), heatmap_sigma);
  return sample;
}

void write_loss_header(std::ostream& out) { out << "step,total,occ,traj,vis,offset,smooth,heatmap\n"; }

void write_loss_row(std::ostream& out, const StepLog& row) {
  char buf[512];
  const auto& l = row.loss;
  std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<unsigned long long>(row.step), l.total, l.occ, l.traj, l.vis, l.offset,
                l.smooth, l.heatmap);
  out << buf;
}

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  const auto& mc = config.model;
  TrainResult r;
  if (!config.train.resume.empty()) {
    auto loaded = load_checkpoint(config.train.resume, &mc);
    r.params = std::move(loaded.params);
    r.optimizer = std::move(loaded.optimizer);
    r.step = loaded.info.step;
    r.rng.set_state(loaded.info.rng);
  } else {
    r.params = model::ModelParams::init(mc, config.seed);
    r.rng = Rng(config.seed ^ kOrderStream);
  }

  std::vector<Window> windows;
  for (std::size_t q : data.train_sequences()) {
    const std::size_t n = data.sequences[q].frame_count();
    for (std::size_t s = 0; s + mc.slots() <= n; ++s) windows.push_back({q, s});
  }
  if (windows.empty()) throw ConfigError("no training window fits T + T_f frames");

  std::ofstream log;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    const fs::path path = *options.out_dir / "loss.csv";
    const bool append = !config.train.resume.empty() && fs::exists(path);
    log.open(path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw ConfigError("cannot write " + path.string());
    if (!append) write_loss_header(log);
  }

  auto named = r.params.named();
  std::vector<Tensor> tensors;
  for (auto& [name, t] : named) tensors.push_back(t);

  auto save = [&](const fs::path& path) {
    Checkpoint info;
    info.config = mc;
    info.step = r.step;
    info.rng = r.rng.state();
    info.metadata = echo_map(config);
    save_checkpoint(path, r.params, r.optimizer, info);
  };

  std::map<Window, Sample> cache;
  const double inv_batch = 1.0 / static_cast<double>(config.train.batch);
  while (r.step < config.train.steps) {
    std::vector<Window> picked;
    for (std::size_t b = 0; b < config.train.batch; ++b) picked.push_back(windows[r.rng.below(windows.size())]);
    StepLog row;
    row.step = r.step;
    try {
      for (auto& t : tensors) t.zero_grad();
      Tensor total;
      for (const auto& w : picked) {
        auto it = cache.find(w);
        if (it == cache.end()) {
          it = cache.emplace(w, make_sample(data.sequences[w.sequence], w.start, mc,
                                            config.train.heatmap_sigma)).first;
        }
        const Sample& sample = it->second;
        const auto out = model::forward(sample.images, r.params, mc);
        const auto loss = matching::training_loss(out.layers, sample.targets, out.encoded.heatmaps,
                                                  sample.heatmaps, mc.max_people, mc.slots(),
                                                  mc.joints, config.train.loss);
        accumulate(row.loss, loss.summed, inv_batch);
        total = total.defined() ? ops::add(total, loss.total) : loss.total;
      }
      if (config.train.batch > 1) total = ops::scale(total, inv_batch);
      if (!std::isfinite(total.item())) throw NumericError("loss is not finite");
      if (log) {
        write_loss_row(log, row);
        log.flush();
      }
      if (!options.quiet) {
        std::fprintf(stderr, "step %llu loss %.6g\n", static_cast<unsigned long long>(r.step),
                     row.loss.total);
      }
      r.log.push_back(row);
      backward(total);
    } catch (const NumericError& e) {
      if (options.out_dir) {
        std::ofstream dump(*options.out_dir / "nan_dump.txt");
        dump << "step=" << r.step << "\nerror=" << e.what() << "\n";
        for (const auto& w : picked) dump << "window=" << w.sequence << ":" << w.start << "\n";
        if (!r.log.empty()) write_loss_row(dump, r.log.back());
      }
      throw;
    }
    // A zero learning rate leaves the parameters untouched.
    if (config.train.optimizer.lr > 0.0) {
      optimizer_step(tensors, r.optimizer, config.train.optimizer);
      for (auto& t : tensors) round_to_float(t.mutable_values());
      for (auto& slot : r.optimizer.slots) {
        round_to_float(std::span<double>(slot.first));
        round_to_float(std::span<double>(slot.second));
      }
    }
    ++r.step;
    if (options.out_dir && config.train.checkpoint_every > 0 &&
        r.step % config.train.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06llu.bin", static_cast<unsigned long long>(r.step));
      save(*options.out_dir / name);
    }
  }
  if (options.out_dir) save(*options.out_dir / "checkpoint.bin");
  return r;
}

Predictor model_predictor(const model::ModelParams& params, const model::ModelConfig& config) {
  return [params, config](const synth::RenderedSequence& seq, std::size_t start) {
    const Tensor images = synth::frames_tensor(seq, start, config.frames);
    return model::run_snippet(images, seq.camera, params, config).trajectories;
  };
}

Predictor ground_truth_predictor(std::size_t frames, std::size_t future) {
  return [frames, future](const synth::RenderedSequence& seq, std::size_t start) {
    return ground_truth_trajectories(seq, start, frames + future);
  };
}

Predictor empty_predictor() {
  return [](const synth::RenderedSequence&, std::size_t) { return std::vector<Trajectory>{}; };
}

namespace {

struct ClipRun {
  std::vector<tracking::SnippetResult> snippets;
  std::vector<tracking::Track> tracks;
};

ClipRun run_clip(const synth::RenderedSequence& seq, const synth::Clip& clip,
                 const Predictor& predict, const EvalSetup& setup) {
  ClipRun run;
  for (std::size_t s : snippet_starts(clip, setup.frames)) {
    tracking::SnippetResult r;
    r.start = s;
    r.frames = setup.frames;
    r.future = setup.future;
    r.trajectories = predict(seq, s);
    for (auto& t : r.trajectories) t.poses.resize(setup.frames + setup.future);
    run.snippets.push_back(std::move(r));
  }
  if (run.snippets.empty()) return run;
  if (setup.frames >= 2) {
    run.tracks = tracking::track_video(run.snippets, seq.camera, setup.eval.tracking);
    return run;
  }
  std::vector<std::vector<Pose>> per_frame;
  for (const auto& s : run.snippets) {
    std::vector<Pose> poses;
    for (const auto& t : s.trajectories)
      if (const Pose* p = slot_pose(t, 0, setup.eval.tracking.presence)) poses.push_back(*p);
    per_frame.push_back(std::move(poses));
  }
  run.tracks = tracking::track_single_frame(per_frame, seq.camera, setup.eval.tracking);
  for (auto& track : run.tracks)
    for (auto& e : track.entries) e.frame += clip.start;
  return run;
}

}  // namespace

std::vector<tracking::Track> track_clip(const synth::RenderedSequence& seq, const synth::Clip& clip,
                                        const Predictor& predict, const EvalSetup& setup) {
  return run_clip(seq, clip, predict, setup).tracks;
}

std::vector<metrics::MetricRow> evaluate_split(const Dataset& data, const std::string& split,
                                               const Predictor& predict, const EvalSetup& setup) {
  const auto& clips = data.split(split);
  const auto& ev = setup.eval;
  const double tau = ev.tracking.presence;
  // Ids are offset per clip so identities never carry across clip borders.
  constexpr int kIdStride = 100000;

  std::vector<metrics::EvalFrame> observed;
  std::vector<std::vector<metrics::EvalFrame>> forecast(setup.future + 1);
  std::vector<std::vector<std::vector<Vec3>>> fc(setup.future + 1), base(setup.future + 1),
      truth(setup.future + 1);
  geometry::CameraIntrinsics cam;

  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& clip = clips[c];
    const auto& seq = data.sequences[clip.sequence];
    cam = seq.camera;
    const int offset = static_cast<int>(c) * kIdStride;
    const auto run = run_clip(seq, clip, predict, setup);
    if (run.snippets.empty()) continue;
    const std::size_t last = run.snippets.back().last_observed();
    for (std::size_t f = clip.start; f <= last; ++f) {
      metrics::EvalFrame frame;
      for (const auto& track : run.tracks)
        if (const Pose* p = tracking::pose_at(track, f)) frame.preds.push_back({track.id + offset, *p});
      frame.targets = present_targets(seq, f, offset);
      observed.push_back(std::move(frame));
    }

    for (const auto& snip : run.snippets) {
      const std::size_t L = snip.last_observed();
      const std::size_t T = setup.frames;
      std::vector<metrics::EvalPerson> at_last;
      std::vector<const Trajectory*> owners;
      for (const auto& t : snip.trajectories) {
        if (const Pose* p = slot_pose(t, T - 1, tau)) {
          at_last.push_back({static_cast<int>(owners.size()), *p});
          owners.push_back(&t);
        }
      }
      const auto targets_last = present_targets(seq, L, 0);
      const auto pairs = metrics::match_people(at_last, targets_last, seq.camera, ev.metric_gate);
      for (std::size_t h = 1; h <= setup.future; ++h) {
        if (L + h >= seq.frame_count()) break;
        metrics::EvalFrame frame;
        for (const auto& t : snip.trajectories)
          if (const Pose* p = slot_pose(t, T - 1 + h, tau)) frame.preds.push_back({-1, *p});
        frame.targets = present_targets(seq, L + h, offset);
        forecast[h].push_back(std::move(frame));

        const auto annots = seq.at_frame(L + h);
        for (const auto& pr : pairs) {
          const int person = targets_last[pr.target].id;
          const synth::Annotation* later = nullptr;
          for (const auto* a : annots)
            if (a->person == person && a->present) later = a;
          const Trajectory& owner = *owners[pr.pred];
          if (!later || !owner.poses[T - 1 + h]) continue;
          fc[h].push_back({geometry::lift_to_3d(owner.poses[T - 1 + h]->root, seq.camera)});
          base[h].push_back({geometry::lift_to_3d(owner.poses[T - 1]->root, seq.camera)});
          truth[h].push_back({geometry::lift_to_3d(later->joints[0], seq.camera)});
        }
      }
    }
  }

  std::vector<metrics::MetricRow> rows;
  std::size_t targets = 0;
  for (const auto& f : observed) targets += f.targets.size();
  if (targets > 0) {
    const auto m = metrics::mota(observed, cam, ev.metric_gate);
    rows.push_back({key("mota", split, 0), m.mota, m.targets});
    rows.push_back({key("misses", split, 0), static_cast<double>(m.misses), m.targets});
    rows.push_back({key("false_positives", split, 0), static_cast<double>(m.false_positives), m.targets});
    rows.push_back({key("id_switches", split, 0), static_cast<double>(m.id_switches), m.targets});
  }
  auto pose_rows = [&](const std::vector<metrics::EvalFrame>& frames, std::size_t h) {
    if (frames.empty()) return;
    const auto s = metrics::pose_scores(frames, cam, ev.metric_gate, ev.pck_threshold_mm);
    if (s.target_joints > 0) rows.push_back({key("pck", split, h), s.pck, s.target_joints});
    if (s.matched_joints > 0) {
      rows.push_back({key("mpjpe", split, h), s.mpjpe, s.matched_joints});
      rows.push_back({key("mpjpe_rel", split, h), s.mpjpe_rel, s.matched_joints});
    }
  };
  pose_rows(observed, 0);
  if (!observed.empty()) {
    for (double thr : ev.f1_thresholds) {
      const auto c = metrics::f1_at(observed, cam, thr, ev.metric_gate);
      rows.push_back({key("f1@" + metrics::format_real(thr), split, 0), c.f1, c.tp + c.fn});
    }
  }
  for (std::size_t h = 1; h <= setup.future; ++h) {
    pose_rows(forecast[h], h);
    if (fc[h].empty()) continue;
    rows.push_back({key("path_error", split, h), metrics::path_error(fc[h], truth[h])[0], fc[h].size()});
    rows.push_back({key("path_error_baseline", split, h), metrics::path_error(base[h], truth[h])[0],
                    base[h].size()});
  }
  return rows;
}

std::optional<double> find_metric(const std::vector<metrics::MetricRow>& rows,
                                  const std::string& metric) {
  for (const auto& r : rows)
    if (r.metric == metric) return r.value;
  return std::nullopt;
}

}  // namespace snipper::cli
