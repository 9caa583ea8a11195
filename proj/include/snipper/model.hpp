#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "snipper/attention.hpp"
#include "snipper/geometry.hpp"
#include "snipper/rng.hpp"
#include "snipper/tensor.hpp"

namespace snipper::model {

struct ModelConfig {
  std::size_t channels = 48;
  std::size_t frames = 4;          // T, observed frames
  std::size_t future_frames = 1;   // T_f, forecast frames
  std::size_t max_people = 6;      // N
  std::size_t joints = geometry::kDefaultJoints;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t scales = 2;
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::size_t base_heads = 8;
  std::size_t points = 4;
  std::size_t ffn_hidden = 96;
  attention::Variant variant = attention::Variant::kNeighbor;
  bool temporal_encoding = true;
  double initial_depth = 5.0;

  std::size_t slots() const { return frames + future_frames; }
  std::size_t queries() const { return max_people * slots(); }
  // Frame distance the attention parameters must cover.
  std::size_t attention_reach() const;
  // Throws ConfigError on an unusable configuration.
  void validate() const;
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);
  Tensor operator()(const Tensor& x) const;
};

// Two hidden layers with ReLU, then a linear readout.
struct Mlp {
  Linear hidden1, hidden2, out;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
                  bool zero_readout);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gamma, beta;
  static LayerNormParams init(std::size_t c);
  Tensor operator()(const Tensor& x) const;
};

struct BackboneParams {
  Tensor conv1_w, conv1_b;  // 3 -> 16, stride 2
  Tensor conv2_w, conv2_b;  // 16 -> 32, stride 2   (stride 4 total)
  Tensor conv3_w, conv3_b;  // 32 -> 32, stride 2   (stride 8)
  Tensor conv4_w, conv4_b;  // 32 -> 32, stride 2   (stride 16; three scales only)
  std::vector<Tensor> proj_w, proj_b;  // 1x1 maps to C per scale

  static BackboneParams init(const ModelConfig& config, Rng& rng);
};

struct EncoderLayerParams {
  attention::AttentionParams attn;
  LayerNormParams norm1, norm2;
  Linear ffn1, ffn2;
};

struct DecoderLayerParams {
  attention::AttentionParams attn;
  LayerNormParams norm1, norm2;
  Linear ffn1, ffn2;
  Mlp refine;  // (dx, dy, dd) in pre-activation space
  Mlp pose;    // N_J * 3 normalized offsets + N_J visibility logits
  Mlp occ;     // occurrence logit
};

struct DecoderParams {
  Tensor query_embed;     // [N * (T + T_f), C]
  Tensor temporal_embed;  // [T + T_f, C]
  Linear reference;       // C -> 3
  std::vector<DecoderLayerParams> layers;
};

struct ModelParams {
  BackboneParams backbone;
  std::vector<EncoderLayerParams> encoder;
  DecoderParams decoder;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// One decoder layer's predictions for all N * (T + T_f) queries; row
/// q = person * (T + T_f) + slot.
struct LayerPrediction {
  Tensor root_xy;      // [Q, 2] normalized image coordinates
  Tensor root_depth;   // [Q, 1] meters
  Tensor offsets;      // [Q, N_J * 3] offsets normalized to meters
  Tensor vis_logits;   // [Q, N_J]
  Tensor occ_logits;   // [Q, 1]
  Tensor reference;    // [Q, 3] pre-activation reference used by this layer
};

struct EncoderOutput {
  attention::FeatureVolume memory;
  Tensor heatmaps;  // [T, H_0, W_0, N_J], first N_J channels of scale 0
};

struct ForwardOutput {
  EncoderOutput encoded;
  std::vector<LayerPrediction> layers;
};

/// Sinusoidal encoding of (x, y, t): C/3 interleaved sin/cos values per
/// coordinate at geometric frequencies, concatenated as [x | y | t].
std::vector<double> positional_encoding(double x, double y, std::size_t t, std::size_t channels);

// Constant encoding for every voxel of a [T, H, W, C] grid.
Tensor positional_grid(std::size_t frames, std::size_t height, std::size_t width,
                       std::size_t channels);

/// images: [T, H_in, W_in, 3] -> volume with scales at strides 4, 8 (, 16).
attention::FeatureVolume backbone_stub(const Tensor& images, const BackboneParams& params,
                                       const ModelConfig& config);

EncoderOutput encode(const attention::FeatureVolume& volume,
                     const std::vector<EncoderLayerParams>& layers, const ModelConfig& config);

std::vector<LayerPrediction> decode(const DecoderParams& params,
                                    const attention::FeatureVolume& memory,
                                    const ModelConfig& config);

ForwardOutput forward(const Tensor& images, const ModelParams& params, const ModelConfig& config);

struct SnippetPrediction {
  std::vector<geometry::Trajectory> trajectories;  // N, each T + T_f poses (pixels / meters)
  Tensor heatmaps;
};

// Final-layer predictions as Poses; every slot is filled and carries its
// occurrence probability (thresholding is the consumer's choice).
std::vector<geometry::Trajectory> to_trajectories(const LayerPrediction& layer,
                                                  const ModelConfig& config,
                                                  const geometry::CameraIntrinsics& cam);

SnippetPrediction run_snippet(const Tensor& images, const geometry::CameraIntrinsics& cam,
                              const ModelParams& params, const ModelConfig& config);

}  // namespace snipper::model
