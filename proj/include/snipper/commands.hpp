#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "snipper/config.hpp"
#include "snipper/error.hpp"
#include "snipper/metrics.hpp"

namespace snipper::cli {

// 2 config, 3 data, 4 numeric.
int exit_code(ErrorKind kind);

/// Writes the dataset to `config.out` and prints split sizes.
void cmd_synth(const RunConfig& config, std::ostream& log);
/// Trains on `config.data.dataset`; loss.csv and checkpoints go to `config.out`.
void cmd_train(const RunConfig& config, std::ostream& log);
/// Scores `config.eval.checkpoint` on every configured split into
/// `config.out/metrics.csv`. A T or T_f mismatch between checkpoint and
/// config is a ContractError.
std::vector<metrics::MetricRow> cmd_eval(const RunConfig& config, std::ostream& log);
/// Writes `config.out/tracks.jsonl`, one line per track entry.
void cmd_track(const RunConfig& config, std::ostream& log);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::size_t samples_per_head = 0;
  double mota = 0.0, pck3d = 0.0, mpjpe = 0.0, path_error_1 = 0.0, path_baseline_1 = 0.0;
  double final_loss = 0.0;
};

/// Trains and evaluates every (variant, seed) pair; "single" is the neighbor
/// variant with T = 1. Rows are written to `config.out/ablation.csv`.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log);

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace snipper::cli
