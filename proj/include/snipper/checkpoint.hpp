#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "snipper/model.hpp"
#include "snipper/optim.hpp"
#include "snipper/rng.hpp"

namespace snipper::cli {

inline constexpr char kCheckpointMagic[8] = {'S', 'N', 'I', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue a run. The binary layout is
///   magic, u32 version, u32 count, tensors
///   u32 count, optimizer tensors (same layout)
///   u32 length, metadata text (key=value lines)
/// where a tensor is u16 name length, name, u8 rank, u64 extents, f32 LE data.
struct Checkpoint {
  model::ModelConfig config;
  std::uint64_t step = 0;  // optimizer steps taken so far
  Rng::State rng{};
  std::map<std::string, std::string> metadata;  // free-form extras (config echo)
};

void save_checkpoint(const std::filesystem::path& path, const model::ModelParams& params,
                     const OptimizerState& optimizer, const Checkpoint& info);

/// Reads a checkpoint into freshly built parameters for its stored config.
/// Throws ParseError on a malformed file, VersionError on a version mismatch
/// and DimensionError naming the tensor when shapes disagree with `expected`
/// (if given).
struct LoadedCheckpoint {
  Checkpoint info;
  model::ModelParams params;
  OptimizerState optimizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const model::ModelConfig* expected = nullptr);

// model::ModelConfig <-> key=value lines.
std::map<std::string, std::string> config_to_map(const model::ModelConfig& config);
model::ModelConfig config_from_map(const std::map<std::string, std::string>& values);

}  // namespace snipper::cli
