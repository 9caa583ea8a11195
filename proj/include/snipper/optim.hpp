#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snipper/tensor.hpp"

namespace snipper {

enum class OptimizerKind { kMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global gradient-norm clip; <= 0 disables.
  double clip_norm = 0.0;
};

/// Per-parameter moment buffers. `first` doubles as the momentum velocity.
struct OptimizerSlot {
  std::vector<double> first;
  std::vector<double> second;
};

struct OptimizerState {
  std::vector<OptimizerSlot> slots;
  std::uint64_t steps = 0;
};

OptimizerKind parse_optimizer_kind(const std::string& name);

/// Applies one update to every parameter from its accumulated gradient
/// (parameters without a gradient are treated as having zero gradient).
/// Throws ConfigError on lr <= 0; `state` is sized on first use.
void optimizer_step(std::vector<Tensor>& params, OptimizerState& state,
                    const OptimizerConfig& config);

}  // namespace snipper
