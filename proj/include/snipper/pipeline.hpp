#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snipper/config.hpp"
#include "snipper/matching.hpp"
#include "snipper/metrics.hpp"
#include "snipper/model.hpp"
#include "snipper/optim.hpp"
#include "snipper/synth.hpp"
#include "snipper/tracking.hpp"

namespace snipper::cli {

struct Dataset {
  std::vector<synth::RenderedSequence> sequences;
  synth::Splits splits;

  const std::vector<synth::Clip>& split(const std::string& name) const;
  // Sequences referenced by the train split.
  std::vector<std::size_t> train_sequences() const;
};

/// Generates `config.scenes` scenes deterministically from `seed`.
Dataset generate_dataset(const DataConfig& config, std::size_t train_window, std::uint64_t seed);
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// One training window: T observed frames plus T_f forecast slots.
struct Sample {
  Tensor images;                                  // [T, H, W, 3]
  std::vector<geometry::Trajectory> targets;      // loss space
  Tensor heatmaps;                                // [T, H/4, W/4, N_J]
};

Sample make_sample(const synth::RenderedSequence& seq, std::size_t start,
                   const model::ModelConfig& config, double heatmap_sigma);

/// People of `seq` over slots [start, start + slots) in pixel units; a slot is
/// empty when the person is absent or the frame lies past the sequence end.
std::vector<geometry::Trajectory> ground_truth_trajectories(const synth::RenderedSequence& seq,
                                                            std::size_t start, std::size_t slots);

struct StepLog {
  std::uint64_t step = 0;
  matching::LossBreakdown loss;
};

void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, const StepLog& row);

struct TrainResult {
  model::ModelParams params;
  OptimizerState optimizer;
  std::vector<StepLog> log;
  std::uint64_t step = 0;
  Rng rng;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // loss log + checkpoints
  bool quiet = true;
};

/// Trains from scratch (seeded by config.seed) or from config.train.resume
/// until config.train.steps optimizer steps have been taken.
TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options);

/// N trajectories of T + T_f slots in pixel units for the snippet starting at
/// `start`.
using Predictor =
    std::function<std::vector<geometry::Trajectory>(const synth::RenderedSequence&, std::size_t)>;

Predictor model_predictor(const model::ModelParams& params, const model::ModelConfig& config);
Predictor ground_truth_predictor(std::size_t frames, std::size_t future);
Predictor empty_predictor();

struct EvalSetup {
  std::size_t frames = 4;  // T
  std::size_t future = 1;  // T_f
  EvalConfig eval;
};

/// Whole-clip tracking and every metric for one split, rows keyed
/// "name:split:horizon" (horizon 0 = observed frames, h = forecast step h).
std::vector<metrics::MetricRow> evaluate_split(const Dataset& data, const std::string& split,
                                               const Predictor& predict, const EvalSetup& setup);

/// Tracks for one clip (track_video, or frame-to-frame for T = 1); frames are
/// absolute sequence indices.
std::vector<tracking::Track> track_clip(const synth::RenderedSequence& seq, const synth::Clip& clip,
                                        const Predictor& predict, const EvalSetup& setup);

std::optional<double> find_metric(const std::vector<metrics::MetricRow>& rows,
                                  const std::string& metric);

}  // namespace snipper::cli
