#include "snipper/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "snipper/checkpoint.hpp"
#include "snipper/pipeline.hpp"

namespace snipper::cli {

namespace fs = std::filesystem;

namespace {

bool non_empty_dir(const fs::path& dir) {
  return fs::exists(dir) && (!fs::is_directory(dir) || !fs::is_empty(dir));
}

// Refuses to write into a populated directory unless forced.
void prepare_out(const fs::path& dir, bool force, bool wipe) {
  if (non_empty_dir(dir)) {
    if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
    if (wipe) fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

EvalSetup eval_setup(const RunConfig& config) {
  EvalSetup setup;
  setup.frames = config.model.frames;
  setup.future = config.model.future_frames;
  setup.eval = config.eval;
  return setup;
}

LoadedCheckpoint load_for_eval(const RunConfig& config) {
  if (config.eval.checkpoint.empty()) throw ConfigError("eval.checkpoint is not set");
  auto loaded = load_checkpoint(config.eval.checkpoint);
  const auto& c = loaded.info.config;
  if (c.frames != config.model.frames || c.future_frames != config.model.future_frames) {
    throw ContractError("checkpoint was trained with T=" + std::to_string(c.frames) + ", T_f=" +
                        std::to_string(c.future_frames) + " but the config asks for T=" +
                        std::to_string(config.model.frames) + ", T_f=" +
                        std::to_string(config.model.future_frames));
  }
  return loaded;
}

std::string real_or_nan(double v) { return std::isfinite(v) ? metrics::format_real(v) : "nan"; }

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kVersion:
    case ErrorKind::kProtocol:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
    default:
      return 2;
  }
}

void cmd_synth(const RunConfig& config, std::ostream& log) {
  config.validate();
  const fs::path out = config.out;
  const Dataset data = generate_dataset(config.data, config.model.slots(), config.seed);
  prepare_out(out, config.force, true);
  write_dataset(data, out);
  log << "sequences=" << data.sequences.size() << " train=" << data.splits.train.size()
      << " val=" << data.splits.val.size() << " occlusion=" << data.splits.occlusion.size() << "\n";
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const Dataset data = load_dataset(config.data.dataset);
  const fs::path out = config.out;
  prepare_out(out, config.force || !config.train.resume.empty(), false);
  write_text(out / "config.txt", config.echo());
  TrainOptions options;
  options.out_dir = out;
  const auto result = train(config, data, options);
  if (!result.log.empty()) {
    log << "steps=" << result.step << " first_loss=" << metrics::format_real(result.log.front().loss.total)
        << " last_loss=" << metrics::format_real(result.log.back().loss.total) << "\n";
  }
}

std::vector<metrics::MetricRow> cmd_eval(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto loaded = load_for_eval(config);
  const Dataset data = load_dataset(config.data.dataset);
  const Predictor predict = model_predictor(loaded.params, loaded.info.config);
  std::vector<metrics::MetricRow> rows;
  for (const auto& split : config.eval.splits) {
    auto part = evaluate_split(data, split, predict, eval_setup(config));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const fs::path out = config.out;
  fs::create_directories(out);
  std::ofstream csv(out / "metrics.csv", std::ios::binary);
  metrics::write_csv(csv, rows);
  if (!csv) throw ConfigError("cannot write metrics.csv");
  for (const auto& r : rows) log << r.metric << "=" << metrics::format_real(r.value) << "\n";
  return rows;
}

void cmd_track(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto loaded = load_for_eval(config);
  const Dataset data = load_dataset(config.data.dataset);
  const Predictor predict = model_predictor(loaded.params, loaded.info.config);
  const fs::path out = config.out;
  fs::create_directories(out);
  std::ofstream jsonl(out / "tracks.jsonl", std::ios::binary);
  std::size_t lines = 0;
  for (const auto& split : config.eval.splits) {
    const auto& clips = data.split(split);
    for (std::size_t c = 0; c < clips.size(); ++c) {
      const auto& seq = data.sequences[clips[c].sequence];
      for (const auto& track : track_clip(seq, clips[c], predict, eval_setup(config))) {
        for (const auto& e : track.entries) {
          nlohmann::json rec;
          rec["split"] = split;
          rec["clip"] = c;
          rec["sequence"] = clips[c].sequence;
          rec["track"] = track.id;
          rec["frame"] = e.frame;
          rec["provisional"] = e.provisional;
          rec["occurrence"] = e.pose.occurrence;
          nlohmann::json joints = nlohmann::json::array();
          for (const auto& j : geometry::compose_joints(e.pose)) joints.push_back({j[0], j[1], j[2]});
          rec["joints"] = joints;
          rec["visibility"] = e.pose.visibility;
          jsonl << rec.dump() << "\n";
          ++lines;
        }
      }
    }
  }
  if (!jsonl) throw ConfigError("cannot write tracks.jsonl");
  log << "track_entries=" << lines << "\n";
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,seed,frames,samples_per_head,mota,pck3d,mpjpe,path_error_1,path_baseline_1,final_loss\n";
  for (const auto& r : rows) {
    out << r.variant << "," << r.seed << "," << r.frames << "," << r.samples_per_head << ","
        << real_or_nan(r.mota) << "," << real_or_nan(r.pck3d) << "," << real_or_nan(r.mpjpe) << ","
        << real_or_nan(r.path_error_1) << "," << real_or_nan(r.path_baseline_1) << ","
        << real_or_nan(r.final_loss) << "\n";
  }
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const Dataset data = load_dataset(config.data.dataset);
  const std::string& split = config.ablate.split;
  std::vector<AblationRow> rows;
  for (const auto seed : config.ablate.seeds) {
    for (const auto& name : config.ablate.variants) {
      RunConfig run = config;
      run.seed = seed;
      run.train.resume.clear();
      if (name == "single") {
        run.model.frames = 1;
        run.model.variant = attention::Variant::kNeighbor;
      } else {
        run.model.variant = attention::parse_variant(name);
      }
      const auto trained = train(run, data, TrainOptions{});
      const auto metrics = evaluate_split(data, split, model_predictor(trained.params, run.model),
                                          eval_setup(run));
      const auto get = [&](const std::string& m) {
        return find_metric(metrics, m).value_or(std::nan(""));
      };
      AblationRow row;
      row.variant = name;
      row.seed = seed;
      row.frames = run.model.frames;
      // Interior query frame: the only place the variants' frame sets differ.
      row.samples_per_head = attention::samples_per_head(
          run.model.variant, run.model.frames / 2, run.model.frames, run.model.points, run.model.scales);
      row.mota = get("mota:" + split + ":0");
      row.pck3d = get("pck:" + split + ":0");
      row.mpjpe = get("mpjpe:" + split + ":0");
      row.path_error_1 = get("path_error:" + split + ":1");
      row.path_baseline_1 = get("path_error_baseline:" + split + ":1");
      row.final_loss = trained.log.empty() ? std::nan("") : trained.log.back().loss.total;
      log << name << " seed=" << seed << " mota=" << real_or_nan(row.mota)
          << " pck=" << real_or_nan(row.pck3d) << "\n";
      rows.push_back(row);
    }
  }
  const fs::path out = config.out;
  fs::create_directories(out);
  std::ofstream csv(out / "ablation.csv", std::ios::binary);
  write_ablation_csv(csv, rows);
  if (!csv) throw ConfigError("cannot write ablation.csv");
  return rows;
}

}  // namespace snipper::cli
