#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "snipper/matching.hpp"
#include "snipper/model.hpp"
#include "snipper/optim.hpp"
#include "snipper/tracking.hpp"

namespace snipper::cli {

/// Flat `key = value` text with `[section]` headers; keys are stored as
/// "section.key". '#' starts a comment.
struct ConfigFile {
  std::map<std::string, std::string> values;
  std::map<std::string, std::size_t> lines;

  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigFile load(const std::filesystem::path& path);
};

struct DataConfig {
  std::string dataset = "data";
  std::size_t scenes = 20;
  std::size_t scene_frames = 16;
  std::size_t people_min = 1;
  std::size_t people_max = 3;
  double linear_speed = 0.15;
  double angular_speed = 0.12;
  double occlusion_rate = 0.5;
  double held_out_fraction = 0.3;
  std::size_t eval_window = 10;
};

struct TrainConfig {
  std::size_t steps = 50;
  std::size_t batch = 1;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  OptimizerConfig optimizer;
  matching::LossConfig loss;
  double heatmap_sigma = 2.0;
  std::string resume;  // checkpoint to continue from
};

struct EvalConfig {
  std::string checkpoint;
  std::vector<std::string> splits = {"val", "occlusion"};
  tracking::TrackingConfig tracking;
  double metric_gate = 1.0;
  double pck_threshold_mm = 150.0;
  std::vector<double> f1_thresholds = {0.1, 0.25, 0.5};
};

struct AblateConfig {
  std::vector<std::string> variants = {"neighbor", "direct3d", "full"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string split = "occlusion";
};

struct RunConfig {
  model::ModelConfig model;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  AblateConfig ablate;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool force = false;

  /// Applies every entry; unknown keys or malformed values throw
  /// ConfigError naming the origin line.
  void apply(const ConfigFile& file);
  void validate() const;
  // Flat key=value echo of every setting, sorted by key.
  std::string echo() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

std::vector<std::string> split_list(const std::string& text);

}  // namespace snipper::cli
