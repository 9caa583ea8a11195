// Acceptance runner: one PASS/FAIL line per criterion. Exit status is
// non-zero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "snipper/attention.hpp"
#include "snipper/checkpoint.hpp"
#include "snipper/commands.hpp"
#include "snipper/error.hpp"
#include "snipper/matching.hpp"
#include "snipper/model.hpp"
#include "snipper/ops.hpp"
#include "snipper/pipeline.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"
#include "support/tempdir.hpp"

using namespace snipper;
namespace fs = std::filesystem;
using attention::Variant;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Training logs a warning per dropped target; keep the report readable.
class QuietStderr {
 public:
  QuietStderr() : old_(std::cerr.rdbuf(sink_.rdbuf())) {}
  ~QuietStderr() { std::cerr.rdbuf(old_); }

 private:
  std::ostringstream sink_;
  std::streambuf* old_;
};

Tensor project(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

// ---------------------------------------------------------------------------
// 1. gradient suite

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  std::vector<std::pair<std::string, double>> errs;
  auto run = [&](const std::string& name, std::vector<Tensor> leaves, const std::function<Tensor()>& f) {
    errs.emplace_back(name, oracle::grad_check(std::move(leaves), f, rng).rel_error);
  };

  {
    Tensor x = oracle::random_leaf({5, 6}, rng), w = oracle::random_leaf({4, 6}, rng), b = oracle::random_leaf({4}, rng);
    const Tensor p = oracle::random_weights_like(Tensor({5, 4}), rng);
    run("linear", {x, w, b}, [&] { return project(ops::linear(x, w, b), p); });
  }
  {
    Tensor x = oracle::random_leaf({4, 7}, rng, -2.0, 2.0);
    const Tensor p = oracle::random_weights_like(x, rng);
    run("softmax", {x}, [&] { return project(ops::softmax(x), p); });
  }
  {
    Tensor x = oracle::random_leaf({4, 6}, rng), g = oracle::random_leaf({6}, rng), b = oracle::random_leaf({6}, rng);
    const Tensor p = oracle::random_weights_like(x, rng);
    run("layer_norm", {x, g, b}, [&] { return project(ops::layer_norm(x, g, b), p); });
  }
  {
    Tensor vol = oracle::random_leaf({4, 6, 7}, rng);
    Tensor x = Tensor::scalar(0.37, true), y = Tensor::scalar(0.71, true);
    const Tensor p = oracle::random_weights_like(Tensor({4}), rng);
    run("bilinear_sample", {vol, x, y}, [&] { return project(ops::bilinear_sample(vol, x, y), p); });
  }
  {
    Tensor a = oracle::random_leaf({3, 4}, rng), b = oracle::random_leaf({3, 4}, rng), s = oracle::random_leaf({4}, rng);
    const Tensor p = oracle::random_weights_like(a, rng);
    run("elementwise", {a, b, s}, [&] {
      Tensor y = ops::add(ops::mul(a, b), ops::sub(a, s));
      y = ops::add(ops::sigmoid(y), ops::exp(ops::scale(y, 0.3)));
      y = ops::add(y, ops::relu(ops::add_scalar(b, 0.1)));
      y = ops::add(y, ops::log_sigmoid(a, -30.0));
      return project(y, p);
    });
  }
  {
    Tensor a = oracle::random_leaf({4, 3}, rng), b = oracle::random_leaf({2, 3}, rng), t = oracle::random_leaf({6, 3}, rng);
    run("structural+losses", {a, b, t}, [&] {
      const Tensor c = ops::concat({a, b}, 0);
      const Tensor g = ops::gather_rows(c, {5, 0, 0, 3, 2, 1});
      const Tensor r = ops::reshape(ops::slice(g, 1, 0, 2), {3, 4});
      return ops::add(ops::add(ops::l1_loss(g, t), ops::l2_loss(c, t)), ops::mean(ops::mul(r, r)));
    });
  }
  {
    Tensor x = oracle::random_leaf({1, 6, 6, 2}, rng), w = oracle::random_leaf({3, 3, 3, 2}, rng), b = oracle::random_leaf({3}, rng);
    const Tensor p = oracle::random_weights_like(ops::conv2d(x, w, b, 2, 1), rng);
    run("conv2d", {x, w, b}, [&] { return project(ops::conv2d(x, w, b, 2, 1), p); });
  }
  for (Variant v : {Variant::kNeighbor, Variant::kDirect3d, Variant::kFull}) {
    const std::size_t c = 8, frames = 3;
    attention::FeatureVolume vol;
    vol.scales = {oracle::random_leaf({frames, 6, 7, c}, rng), oracle::random_leaf({frames, 3, 4, c}, rng)};
    auto params = attention::AttentionParams::init(attention::AttentionLayout::make(c, 4, 2, 2, frames - 1), rng, true);
    oracle::perturb(params.offset_weight, rng, 0.3);
    oracle::perturb(params.offset_bias, rng, 0.3);
    oracle::perturb(params.logit_weight, rng, 0.5);
    oracle::perturb(params.time_weight, rng, 0.2);
    oracle::perturb(params.time_bias, rng, 0.2);
    attention::QueryPoint q{oracle::random_leaf({c}, rng), 0.41, 0.57, 1};
    const Tensor p = oracle::random_weights_like(Tensor({c}), rng);
    std::vector<Tensor> leaves = vol.scales;
    for (auto& [name, t] : params.named("")) leaves.push_back(t);
    leaves.push_back(q.feature);
    run("deform_attend/" + attention::variant_name(v), leaves, [&] {
      const Tensor out = v == Variant::kNeighbor   ? attention::deform_attend(q, vol, params)
                         : v == Variant::kDirect3d ? attention::deform_attend_direct3d(q, vol, params)
                                                   : attention::deform_attend_full(q, vol, params);
      return project(out, p);
    });
  }
  model::ModelConfig cfg;
  cfg.channels = 24;
  cfg.frames = 2;
  cfg.max_people = 3;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 2;
  cfg.image_height = cfg.image_width = 32;
  cfg.base_heads = 4;
  cfg.points = 2;
  cfg.ffn_hidden = 16;
  {
    auto params = model::ModelParams::init(cfg, 5);
    oracle::generic_point(params, rng);
    Tensor images = oracle::random_leaf({cfg.frames, 32, 32, 3}, rng, 0.0, 1.0);
    const auto probe = model::backbone_stub(images, params.backbone, cfg);
    std::vector<Tensor> proj;
    for (const auto& s : probe.scales) proj.push_back(oracle::random_weights_like(s, rng));
    std::vector<Tensor> leaves{images};
    for (auto& [name, t] : params.named())
      if (name.rfind("backbone.", 0) == 0) leaves.push_back(t);
    run("backbone_stub", leaves, [&] {
      const auto v = model::backbone_stub(images, params.backbone, cfg);
      return ops::add(project(v.scales[0], proj[0]), project(v.scales[1], proj[1]));
    });
  }
  {
    auto params = model::ModelParams::init(cfg, 6);
    oracle::generic_point(params, rng);
    const Tensor images = oracle::random_leaf({cfg.frames, 32, 32, 3}, rng, 0.0, 1.0);
    const std::vector<geometry::Trajectory> targets = {oracle::random_target({true, true, true}, cfg.joints, rng),
                                                       oracle::random_target({false, true, true}, cfg.joints, rng)};
    const Tensor heat = oracle::random_leaf({cfg.frames, 8, 8, cfg.joints}, rng, 0.0, 1.0);
    std::vector<Tensor> leaves;
    for (auto& [name, t] : params.named()) leaves.push_back(t);
    run("full model", leaves, [&] {
      const auto out = model::forward(images, params, cfg);
      return matching::training_loss(out.layers, targets, out.encoded.heatmaps, heat, cfg.max_people,
                                     cfg.slots(), cfg.joints)
          .total;
    });
  }
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : errs)
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  return {worst < 1e-4 && secs < 300.0,
          std::to_string(errs.size()) + " checks x 50 points, worst rel err " + fmt("%.2e", worst) + " (" +
              worst_name + ") < 1e-4, " + fmt("%.1f", secs) + " s < 300 s"};
}

// ---------------------------------------------------------------------------
// 2. Hungarian vs brute force

Outcome hungarian_oracle() {
  Rng rng(202);
  std::size_t exact = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t targets = 1 + rng.below(6);
    const std::size_t preds = targets + rng.below(7 - targets);
    matching::CostMatrix cost(preds, std::vector<double>(targets));
    for (auto& row : cost)
      for (auto& x : row) x = rng.uniform() < 0.25 ? std::floor(rng.uniform(0, 3)) : rng.uniform(-2, 6);
    exact += matching::hungarian(cost).total_cost == oracle::brute_force_assignment(cost);
  }
  return {exact == 200, std::to_string(exact) + "/200 matrices (up to 6x6) equal the brute-force minimum exactly"};
}

// ---------------------------------------------------------------------------
// 3. attention normalization and constant-volume identity

Outcome attention_identity() {
  Rng rng(303);
  const std::size_t c = 48, frames = 4;
  const auto layout = attention::AttentionLayout::make(c, 8, 4, 2, frames - 1);
  auto params = attention::AttentionParams::init(layout, rng, true);
  oracle::perturb(params.offset_weight, rng, 0.3);
  oracle::perturb(params.logit_weight, rng, 0.5);
  oracle::perturb(params.logit_bias, rng, 0.5);
  oracle::perturb(params.time_weight, rng, 0.2);
  oracle::perturb(params.output_bias, rng, 0.5);
  attention::QueryBatch q;
  const std::size_t n = 12;
  q.features = oracle::random_leaf({n, c}, rng);
  std::vector<double> pos(2 * n);
  for (auto& x : pos) x = rng.uniform(0.05, 0.95);
  q.positions = Tensor({n, 2}, pos);
  for (std::size_t i = 0; i < n; ++i) q.frames.push_back(i % frames);

  attention::FeatureVolume random_vol, flat_vol;
  std::vector<double> f(c);
  for (auto& x : f) x = rng.uniform(-1, 1);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{16, 16}, {8, 8}}) {
    random_vol.scales.push_back(oracle::random_leaf({frames, h, w, c}, rng));
    std::vector<double> v;
    for (std::size_t i = 0; i < frames * h * w; ++i) v.insert(v.end(), f.begin(), f.end());
    flat_vol.scales.push_back(Tensor({frames, h, w, c}, v));
  }
  const Tensor expect = ops::linear(ops::linear(Tensor({1, c}, f), params.value_weight, {}),
                                    params.output_weight, params.output_bias);
  double alpha_err = 0.0, const_err = 0.0;
  for (Variant v : {Variant::kNeighbor, Variant::kDirect3d, Variant::kFull}) {
    attention::AttentionTrace trace;
    attention::attend(q, random_vol, params, v, &trace);
    for (const auto& query : trace.weights)
      for (const auto& head : query) {
        double s = 0.0;
        for (double a : head) s += a;
        alpha_err = std::max(alpha_err, std::abs(s - 1.0));
      }
    const Tensor out = attention::attend(q, flat_vol, params, v);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) const_err = std::max(const_err, std::abs(out[i * c + k] - expect[k]));
  }
  return {alpha_err < 1e-9 && const_err < 1e-9,
          "3 variants: max |sum alpha - 1| " + fmt("%.1e", alpha_err) + ", constant-volume deviation " +
              fmt("%.1e", const_err) + " (both < 1e-9)"};
}

// ---------------------------------------------------------------------------
// 4. loss components vs scalar-loop oracle

Outcome loss_oracles() {
  Rng rng(404);
  const std::size_t people = 4, T = 4, Tf = 2, slots = T + Tf, nj = 15;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<model::LayerPrediction> layers = {oracle::random_layer(people, slots, nj, rng),
                                                  oracle::random_layer(people, slots, nj, rng)};
    std::vector<bool> partial(slots, true);
    partial[rng.below(slots)] = false;
    const std::vector<geometry::Trajectory> targets = {oracle::random_target(std::vector<bool>(slots, true), nj, rng),
                                                       oracle::random_target(partial, nj, rng)};
    const Tensor heat = oracle::random_leaf({T, 4, 4, nj}, rng);
    const Tensor heat_t = oracle::random_leaf({T, 4, 4, nj}, rng, 0.0, 1.0);
    for (bool absent : {false, true}) {
      matching::LossConfig cfg;
      cfg.supervise_absent = absent;
      const auto got = matching::training_loss(layers, targets, heat, heat_t, people, slots, nj, cfg);
      const auto want = oracle::loss_oracle(layers, targets, heat, heat_t, people, slots, nj, absent);
      for (double d : {got.summed.occ - want.occ, got.summed.traj - want.traj, got.summed.vis - want.vis,
                       got.summed.offset - want.offset, got.summed.smooth - want.smooth,
                       got.summed.heatmap - want.heatmap, got.total.item() - want.total})
        worst = std::max(worst, std::abs(d));
    }
  }
  return {worst < 1e-10, "7 components x 20 random 2-person T=4 T_f=2 cases, max abs err " + fmt("%.1e", worst) +
                             " < 1e-10"};
}

// ---------------------------------------------------------------------------
// 5. smoke training

Outcome smoke_training(std::size_t long_steps) {
  cli::RunConfig rc;  // defaults are the tiny config
  rc.seed = 1;
  rc.train.steps = long_steps;
  const auto data = cli::generate_dataset(rc.data, rc.model.slots(), 11);
  const auto t0 = std::chrono::steady_clock::now();
  double secs_50 = 0.0;
  cli::TrainResult r;
  {
    QuietStderr quiet;
    TempDir dir("accept_smoke");
    auto short_rc = rc;
    short_rc.train.steps = 50;
    r = cli::train(short_rc, data, {dir.path(), true});
    secs_50 = seconds_since(t0);
    // continue the same run from its checkpoint
    auto long_rc = rc;
    long_rc.train.resume = (dir / "checkpoint.bin").string();
    auto rest = cli::train(long_rc, data, {});
    r.log.insert(r.log.end(), rest.log.begin(), rest.log.end());
  }
  const double secs = seconds_since(t0);
  const double l0 = r.log.front().loss.total;
  // first step whose trailing 10-step mean is under the bound
  auto reach = [&](double fraction) -> long {
    double window = 0.0;
    for (std::size_t i = 0; i < r.log.size(); ++i) {
      window += r.log[i].loss.total;
      if (i >= 10) window -= r.log[i - 10].loss.total;
      const double n = static_cast<double>(std::min<std::size_t>(i + 1, 10));
      if (i > 0 && window / n < fraction * l0) return static_cast<long>(r.log[i].step);
    }
    return -1;
  };
  const long half = reach(0.5), tenth = reach(0.1);
  const bool pass = half >= 0 && half < 50 && tenth >= 0 && tenth < 2000 && secs_50 < 600 && secs < 3600;
  return {pass, "step-0 loss " + fmt("%.1f", l0) + "; 10-step mean < 0.5x at step " + std::to_string(half) +
                    " (< 50, " + fmt("%.0f", secs_50) + " s), < 0.1x at step " + std::to_string(tenth) +
                    " (< 2000, " + fmt("%.0f", secs) + " s total); final " +
                    fmt("%.2f", r.log.back().loss.total)};
}

// ---------------------------------------------------------------------------
// 6-8. directional claims

struct Scores {
  double mota = 0.0, pck = 0.0, path = 0.0, path_baseline = 0.0;
};

struct Directional {
  std::vector<std::uint64_t> seeds;
  std::vector<Scores> snippet, single, direct;  // per seed
  double seconds = 0.0;
};

cli::Dataset directional_dataset() {
  cli::DataConfig d;
  d.scenes = 100;
  d.scene_frames = 20;
  d.held_out_fraction = 0.5;
  d.occlusion_rate = 0.8;
  return cli::generate_dataset(d, 5, 2024);
}

Scores train_and_score(const cli::Dataset& data, Variant v, std::size_t frames, std::uint64_t seed,
                       std::size_t steps) {
  cli::RunConfig rc;
  rc.model.variant = v;
  rc.model.frames = frames;
  rc.seed = seed;
  rc.train.steps = steps;
  cli::TrainResult r;
  {
    QuietStderr quiet;
    r = cli::train(rc, data, {});
  }
  cli::EvalSetup setup;
  setup.frames = frames;
  setup.future = rc.model.future_frames;
  const auto predict = cli::model_predictor(r.params, rc.model);
  Scores s;
  const auto occ = cli::evaluate_split(data, "occlusion", predict, setup);
  s.mota = cli::find_metric(occ, "mota:occlusion:0").value_or(-1e9);
  s.pck = cli::find_metric(occ, "pck:occlusion:0").value_or(-1e9);
  // forecast over every held-out clip, weighted by sample count
  double num = 0.0, base = 0.0, n = 0.0;
  for (const std::string split : {"val", "occlusion"}) {
    const auto rows = split == "occlusion" ? occ : cli::evaluate_split(data, split, predict, setup);
    for (const auto& row : rows) {
      const auto w = static_cast<double>(row.count);
      if (row.metric == "path_error:" + split + ":1") {
        num += row.value * w;
        n += w;
      } else if (row.metric == "path_error_baseline:" + split + ":1") {
        base += row.value * w;
      }
    }
  }
  s.path = n > 0 ? num / n : 1e9;
  s.path_baseline = n > 0 ? base / n : 0.0;
  return s;
}

Directional run_directional(std::size_t steps) {
  Directional d;
  d.seeds = {1, 2, 3};
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = directional_dataset();
  for (auto seed : d.seeds) {
    d.snippet.push_back(train_and_score(data, Variant::kNeighbor, 4, seed, steps));
    d.single.push_back(train_and_score(data, Variant::kNeighbor, 1, seed, steps));
    d.direct.push_back(train_and_score(data, Variant::kDirect3d, 4, seed, steps));
    std::cerr << "  seed " << seed << " done, " << fmt("%.0f", seconds_since(t0)) << " s\n";
  }
  d.seconds = seconds_since(t0);
  return d;
}

std::string per_seed(const std::vector<Scores>& a, const std::vector<Scores>& b, double Scores::*field) {
  std::string out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) out += " ";
    out += fmt("%.1f", a[i].*field) + "/" + fmt("%.1f", b[i].*field);
  }
  return out;
}

Outcome occlusion_claim(const Directional& d) {
  int wins = 0;
  for (std::size_t i = 0; i < d.seeds.size(); ++i)
    wins += d.snippet[i].mota > d.single[i].mota && d.snippet[i].pck > d.single[i].pck;
  return {wins >= 2, "T=4 beats T=1 on MOTA and PCK in " + std::to_string(wins) + "/3 seeds (need 2); MOTA " +
                         per_seed(d.snippet, d.single, &Scores::mota) + ", PCK " +
                         per_seed(d.snippet, d.single, &Scores::pck)};
}

Outcome forecast_claim(const Directional& d) {
  int wins = 0;
  for (const auto& s : d.snippet) wins += s.path < s.path_baseline;
  std::vector<Scores> base = d.snippet;
  for (auto& s : base) s.path = s.path_baseline;
  return {wins >= 2, "step-1 forecast below last-pose baseline in " + std::to_string(wins) +
                         "/3 seeds (need 2); path error mm forecast/baseline " +
                         per_seed(d.snippet, base, &Scores::path)};
}

Outcome variant_claim(const Directional& d) {
  int wins = 0;
  for (std::size_t i = 0; i < d.seeds.size(); ++i) wins += d.snippet[i].mota >= d.direct[i].mota;
  const std::size_t T = 4, K = 4, L = 2;
  bool ratio = true;
  for (std::size_t tq = 0; tq < T; ++tq) {
    const auto full = attention::samples_per_head(Variant::kFull, tq, T, K, L);
    const auto nb = attention::samples_per_head(Variant::kNeighbor, tq, T, K, L);
    ratio = ratio && full * attention::neighbor_frames(tq, T).size() == nb * T;
  }
  const auto full1 = attention::samples_per_head(Variant::kFull, 1, T, K, L);
  const auto nb1 = attention::samples_per_head(Variant::kNeighbor, 1, T, K, L);
  return {wins >= 2 && ratio && full1 > nb1,
          "neighbor MOTA >= direct-3D in " + std::to_string(wins) + "/3 seeds (need 2), MOTA " +
              per_seed(d.snippet, d.direct, &Scores::mota) + "; samples per head full " + std::to_string(full1) +
              " vs neighbor " + std::to_string(nb1) + " at t_q=1, ratio T/|S| exact for every t_q: " +
              (ratio ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 9. tracking oracle

Outcome tracking_oracle() {
  using synth::Script;
  cli::EvalSetup snippet_setup, single_setup;
  snippet_setup.frames = 4;
  snippet_setup.future = 1;
  single_setup.frames = 1;
  single_setup.future = 0;
  int ok = 0, total = 0;
  std::string notes;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (auto [script, people, name] : {std::tuple{Script::kStatic, 3, "static"},
                                        std::tuple{Script::kCrossing, 2, "crossing"},
                                        std::tuple{Script::kExitEnter, 2, "exit/enter"}}) {
      const auto seq = scenes::scripted(script, static_cast<std::size_t>(people), 16, 40 + seed);
      const auto data = scenes::single_clip(seq);
      const auto gt = cli::ground_truth_predictor(4, 1);
      const auto tracks = cli::track_clip(seq, data.splits.val[0], gt, snippet_setup);
      const auto rows = cli::evaluate_split(data, "val", gt, snippet_setup);
      bool good = scenes::identity_partition_exact(tracks, seq) &&
                  cli::find_metric(rows, "id_switches:val:0") == 0.0;
      if (script == Script::kCrossing) {
        // the single-frame baseline loses the hidden person and re-acquires it under a new id
        const auto single = cli::evaluate_split(data, "val", scenes::visible_detector(1, 0), single_setup);
        good = good && cli::find_metric(single, "id_switches:val:0") == 1.0 &&
               scenes::fully_occluded_frames(seq, 1) > 0;
      }
      ++total;
      ok += good;
      if (!good) notes += std::string(" ") + name + "(seed " + std::to_string(seed) + ")";
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) +
                           " scripted scenes: exact identity partition, 0 switches for snippets, the designed "
                           "single switch for T=1 on crossings" +
                           (notes.empty() ? "" : "; failed:" + notes)};
}

// ---------------------------------------------------------------------------
// 10. persistence

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.lexically_relative(dir).string() + "\n" + slurp(f);
  return all;
}

Outcome persistence() {
  TempDir dir("accept_persist");
  cli::RunConfig rc;
  rc.seed = 3;
  rc.data.scenes = 8;
  const auto data = cli::generate_dataset(rc.data, rc.model.slots(), 5);
  cli::write_dataset(data, dir / "data");
  const auto reloaded = cli::load_dataset(dir / "data");
  cli::write_dataset(reloaded, dir / "data2");
  bool dataset_ok = tree_bytes(dir / "data") == tree_bytes(dir / "data2");
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    dataset_ok = dataset_ok && data.sequences[i].frames == reloaded.sequences[i].frames &&
                 data.sequences[i].annotations == reloaded.sequences[i].annotations;

  std::ostringstream log;
  rc.data.dataset = (dir / "data").string();
  rc.train.steps = 6;
  rc.out = (dir / "full").string();
  {
    QuietStderr quiet;
    cli::cmd_train(rc, log);
    rc.train.steps = 3;
    rc.out = (dir / "resumed").string();
    cli::cmd_train(rc, log);
    rc.train.steps = 6;
    rc.train.resume = (dir / "resumed" / "checkpoint.bin").string();
    cli::cmd_train(rc, log);
  }
  const bool resume_ok = slurp(dir / "full" / "loss.csv") == slurp(dir / "resumed" / "loss.csv");

  const auto ck = cli::load_checkpoint(dir / "full" / "checkpoint.bin");
  cli::save_checkpoint(dir / "again.bin", ck.params, ck.optimizer, ck.info);
  bool ckpt_ok = slurp(dir / "full" / "checkpoint.bin") == slurp(dir / "again.bin");
  const auto back = cli::load_checkpoint(dir / "again.bin");
  const auto na = ck.params.named(), nb = back.params.named();
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto va = na[i].second.values(), vb = nb[i].second.values();
    ckpt_ok = ckpt_ok && std::equal(va.begin(), va.end(), vb.begin(), vb.end());
  }
  return {dataset_ok && resume_ok && ckpt_ok,
          std::string("dataset round trip ") + (dataset_ok ? "bit-exact" : "DIFFERS") + ", checkpoint round trip " +
              (ckpt_ok ? "bit-exact" : "DIFFERS") + ", 3+3 resumed loss log " +
              (resume_ok ? "identical to 6 uninterrupted steps" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::size_t directional_steps = 1500, smoke_steps = 2000;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--directional-steps", directional_steps, "training steps per model for criteria 6-8");
  app.add_option("--smoke-steps", smoke_steps, "long smoke-training budget for criterion 5");
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  int failed = 0, ran = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    if (!selected.count(id)) return;
    ++ran;
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << (id < 10 ? " " : "") << id << (o.pass ? " PASS " : " FAIL ") << name << ": "
              << o.detail << std::endl;
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "hungarian oracle", hungarian_oracle);
  report(3, "attention normalization/identity", attention_identity);
  report(4, "loss oracles", loss_oracles);
  report(5, "smoke training", [&] { return smoke_training(smoke_steps); });
  std::optional<Directional> dir;
  auto directional = [&]() -> const Directional& {
    if (!dir) dir = run_directional(directional_steps);
    return *dir;
  };
  report(6, "occlusion directional", [&] { return occlusion_claim(directional()); });
  report(7, "forecast directional", [&] { return forecast_claim(directional()); });
  report(8, "variant directional", [&] { return variant_claim(directional()); });
  report(9, "tracking oracle", tracking_oracle);
  report(10, "persistence", persistence);
  std::cout << "acceptance: " << (ran - failed) << "/" << ran << " PASS" << std::endl;
  return failed ? 1 : 0;
}
