#include "snipper/optim.hpp"

#include <cmath>

#include "snipper/error.hpp"

namespace snipper {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "momentum" || name == "sgd") return OptimizerKind::kMomentum;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void optimizer_step(std::vector<Tensor>& params, OptimizerState& state,
                    const OptimizerConfig& config) {
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.slots[i].first.assign(params[i].numel(), 0.0);
      if (config.kind == OptimizerKind::kAdam) state.slots[i].second.assign(params[i].numel(), 0.0);
    }
  }
  if (state.slots.size() != params.size()) {
    throw ContractError("optimizer state has " + std::to_string(state.slots.size()) +
                        " slots for " + std::to_string(params.size()) + " parameters");
  }
  double clip = 1.0;
  if (config.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params)
      for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > config.clip_norm) clip = config.clip_norm / norm;
  }
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    const auto grad = params[i].grad();
    auto& slot = state.slots[i];
    if (slot.first.size() != values.size()) {
      throw ContractError("optimizer slot size mismatch for parameter " + std::to_string(i));
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k] * clip;
      if (config.kind == OptimizerKind::kMomentum) {
        slot.first[k] = config.momentum * slot.first[k] + g;
        values[k] -= config.lr * slot.first[k];
      } else {
        slot.first[k] = config.beta1 * slot.first[k] + (1.0 - config.beta1) * g;
        slot.second[k] = config.beta2 * slot.second[k] + (1.0 - config.beta2) * g * g;
        const double mhat = slot.first[k] / bc1;
        const double vhat = slot.second[k] / bc2;
        values[k] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
      }
    }
  }
}

}  // namespace snipper
