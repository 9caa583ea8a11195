// Command-line entry point: synth, train, eval, track, ablate.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "snipper/commands.hpp"

namespace {

using snipper::cli::RunConfig;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool force = false;
  std::optional<std::string> variant;
  std::optional<std::size_t> snippet_frames;
  std::optional<std::size_t> forecast_frames;
  std::optional<std::size_t> scenes;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> steps;
};

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = snipper::cli::load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  c.force = f.force;
  if (f.variant) c.model.variant = snipper::attention::parse_variant(*f.variant);
  if (f.snippet_frames) c.model.frames = *f.snippet_frames;
  if (f.forecast_frames) c.model.future_frames = *f.forecast_frames;
  if (f.scenes) c.data.scenes = *f.scenes;
  if (f.dataset) c.data.dataset = *f.dataset;
  if (f.checkpoint) c.eval.checkpoint = *f.checkpoint;
  if (f.steps) c.train.steps = *f.steps;
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "config file (key = value, [sections])");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--force", f.force, "overwrite a non-empty output directory");
  cmd->add_option("--variant", f.variant, "attention variant")
      ->check(CLI::IsMember({"neighbor", "direct3d", "full"}));
  cmd->add_option("--snippet-frames", f.snippet_frames, "observed frames T");
  cmd->add_option("--forecast-frames", f.forecast_frames, "forecast frames T_f");
  cmd->add_option("--dataset", f.dataset, "dataset directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"snipper: multi-person 3D pose estimation, tracking and forecasting from snippets"};
  app.require_subcommand(1);
  Flags flags;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "train a model");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* track = app.add_subcommand("track", "export tracks of a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate attention variants");
  for (auto* cmd : {synth, train, eval, track, ablate}) add_common(cmd, flags);
  synth->add_option("--scenes", flags.scenes, "number of scenes");
  train->add_option("--steps", flags.steps, "optimizer steps");
  ablate->add_option("--steps", flags.steps, "optimizer steps per run");
  for (auto* cmd : {eval, track}) cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig config = resolve(flags);
    if (synth->parsed()) snipper::cli::cmd_synth(config, std::cout);
    if (train->parsed()) snipper::cli::cmd_train(config, std::cout);
    if (eval->parsed()) snipper::cli::cmd_eval(config, std::cout);
    if (track->parsed()) snipper::cli::cmd_track(config, std::cout);
    if (ablate->parsed()) snipper::cli::cmd_ablate(config, std::cout);
  } catch (const snipper::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return snipper::cli::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
