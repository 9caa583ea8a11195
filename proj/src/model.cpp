#include "snipper/model.hpp"

#include <algorithm>
#include <cmath>

#include "snipper/error.hpp"
#include "snipper/ops.hpp"

namespace snipper::model {

namespace {

// Spatial coordinates in [0, 1] are stretched before encoding so that the
// fastest frequency varies across a feature grid.
constexpr double kSpatialScale = 100.0;
constexpr double kTemperature = 10000.0;
constexpr std::size_t kConv1Width = 16;
constexpr std::size_t kConvWidth = 32;

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor conv_weight(std::size_t cout, std::size_t k, std::size_t cin, Rng& rng) {
  return uniform_tensor({cout, k, k, cin}, std::sqrt(6.0 / static_cast<double>(k * k * cin)), rng);
}

void append(std::vector<std::pair<std::string, Tensor>>& out,
            std::vector<std::pair<std::string, Tensor>> more) {
  for (auto& m : more) out.push_back(std::move(m));
}

std::vector<std::pair<std::string, Tensor>> named_linear(const std::string& p, const Linear& l) {
  return {{p + ".weight", l.weight}, {p + ".bias", l.bias}};
}

std::vector<std::pair<std::string, Tensor>> named_mlp(const std::string& p, const Mlp& m) {
  auto out = named_linear(p + ".hidden1", m.hidden1);
  append(out, named_linear(p + ".hidden2", m.hidden2));
  append(out, named_linear(p + ".out", m.out));
  return out;
}

std::vector<std::pair<std::string, Tensor>> named_norm(const std::string& p,
                                                       const LayerNormParams& n) {
  return {{p + ".gamma", n.gamma}, {p + ".beta", n.beta}};
}

}  // namespace

std::size_t ModelConfig::attention_reach() const {
  if (variant == attention::Variant::kFull) return frames - 1;
  return std::min<std::size_t>(1, frames - 1);
}

void ModelConfig::validate() const {
  if (channels == 0 || channels % 3 != 0 || (channels / 3) % 2 != 0) {
    throw ConfigError("channels must be divisible by 3 with an even third, got " +
                      std::to_string(channels));
  }
  if (base_heads == 0 || channels % base_heads != 0) {
    throw ConfigError("channels must be divisible by the head count");
  }
  if (frames == 0) throw ConfigError("snippet needs at least one frame");
  if (max_people == 0) throw ConfigError("max_people must be positive");
  if (joints == 0 || joints > channels) {
    throw ConfigError("joint count must be in [1, channels] for the heatmap readout");
  }
  if (decoder_layers == 0) throw ConfigError("decoder needs at least one layer");
  if (scales == 0 || scales > 3) throw ConfigError("scales must be 1, 2 or 3");
  const std::size_t stride = std::size_t{4} << (scales - 1);
  if (image_height % stride != 0 || image_width % stride != 0 || image_height < stride ||
      image_width < stride) {
    throw ConfigError("image size must be a positive multiple of " + std::to_string(stride));
  }
  if (points == 0) throw ConfigError("points per frame must be positive");
  if (ffn_hidden == 0) throw ConfigError("ffn_hidden must be positive");
  if (!(initial_depth > 0.0)) throw ConfigError("initial_depth must be positive");
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = uniform_tensor({out, in}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  l.bias = Tensor({out}, 0.0, true);
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return Linear{Tensor({out, in}, 0.0, true), Tensor({out}, 0.0, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, bool zero_readout) {
  Mlp m;
  m.hidden1 = Linear::init(in, hidden, rng);
  m.hidden2 = Linear::init(hidden, hidden, rng);
  m.out = zero_readout ? Linear::zeros(hidden, out) : Linear::init(hidden, out, rng);
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const {
  return out(ops::relu(hidden2(ops::relu(hidden1(x)))));
}

LayerNormParams LayerNormParams::init(std::size_t c) {
  return {Tensor({c}, 1.0, true), Tensor({c}, 0.0, true)};
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
  return ops::layer_norm(x, gamma, beta);
}

BackboneParams BackboneParams::init(const ModelConfig& config, Rng& rng) {
  BackboneParams p;
  p.conv1_w = conv_weight(kConv1Width, 3, 3, rng);
  p.conv1_b = Tensor({kConv1Width}, 0.0, true);
  p.conv2_w = conv_weight(kConvWidth, 3, kConv1Width, rng);
  p.conv2_b = Tensor({kConvWidth}, 0.0, true);
  if (config.scales >= 2) {
    p.conv3_w = conv_weight(kConvWidth, 3, kConvWidth, rng);
    p.conv3_b = Tensor({kConvWidth}, 0.0, true);
  }
  if (config.scales >= 3) {
    p.conv4_w = conv_weight(kConvWidth, 3, kConvWidth, rng);
    p.conv4_b = Tensor({kConvWidth}, 0.0, true);
  }
  for (std::size_t l = 0; l < config.scales; ++l) {
    p.proj_w.push_back(conv_weight(config.channels, 1, kConvWidth, rng));
    p.proj_b.push_back(Tensor({config.channels}, 0.0, true));
  }
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams m;
  m.backbone = BackboneParams::init(config, rng);
  const std::size_t c = config.channels;
  const bool with_time = config.variant == attention::Variant::kDirect3d;
  const auto layout = attention::AttentionLayout::make(c, config.base_heads, config.points,
                                                       config.scales, config.attention_reach());
  for (std::size_t i = 0; i < config.encoder_layers; ++i) {
    EncoderLayerParams layer;
    layer.attn = attention::AttentionParams::init(layout, rng, with_time);
    layer.norm1 = LayerNormParams::init(c);
    layer.norm2 = LayerNormParams::init(c);
    layer.ffn1 = Linear::init(c, config.ffn_hidden, rng);
    layer.ffn2 = Linear::init(config.ffn_hidden, c, rng);
    m.encoder.push_back(std::move(layer));
  }
  auto& dec = m.decoder;
  dec.query_embed = normal_tensor({config.queries(), c}, 1.0, rng);
  dec.temporal_embed = normal_tensor({config.slots(), c}, 1.0, rng);
  dec.reference = Linear::init(c, 3, rng);
  // Queries start spread over the image but all at the prior depth.
  auto ref_weight = dec.reference.weight.mutable_values();
  std::fill(ref_weight.begin() + 2 * static_cast<std::ptrdiff_t>(c), ref_weight.end(), 0.0);
  dec.reference.bias.mutable_values()[2] = std::log(config.initial_depth);
  for (std::size_t i = 0; i < config.decoder_layers; ++i) {
    DecoderLayerParams layer;
    layer.attn = attention::AttentionParams::init(layout, rng, with_time);
    layer.norm1 = LayerNormParams::init(c);
    layer.norm2 = LayerNormParams::init(c);
    layer.ffn1 = Linear::init(c, config.ffn_hidden, rng);
    layer.ffn2 = Linear::init(config.ffn_hidden, c, rng);
    layer.refine = Mlp::init(c, c, 3, rng, true);
    layer.pose = Mlp::init(c, c, 4 * config.joints, rng, false);
    layer.occ = Mlp::init(c, c, 1, rng, true);
    dec.layers.push_back(std::move(layer));
  }
  // Parameters live on the float32 grid so checkpoints reproduce them exactly.
  for (auto& [name, t] : m.named())
    for (double& v : t.mutable_values()) v = static_cast<float>(v);
  return m;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto& b = backbone;
  for (auto [name, t] : std::vector<std::pair<std::string, Tensor>>{
           {"backbone.conv1_w", b.conv1_w}, {"backbone.conv1_b", b.conv1_b},
           {"backbone.conv2_w", b.conv2_w}, {"backbone.conv2_b", b.conv2_b},
           {"backbone.conv3_w", b.conv3_w}, {"backbone.conv3_b", b.conv3_b},
           {"backbone.conv4_w", b.conv4_w}, {"backbone.conv4_b", b.conv4_b}}) {
    if (t.defined()) out.emplace_back(name, t);
  }
  for (std::size_t l = 0; l < b.proj_w.size(); ++l) {
    out.emplace_back("backbone.proj" + std::to_string(l) + "_w", b.proj_w[l]);
    out.emplace_back("backbone.proj" + std::to_string(l) + "_b", b.proj_b[l]);
  }
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i) + ".";
    append(out, encoder[i].attn.named(p + "attn."));
    append(out, named_norm(p + "norm1", encoder[i].norm1));
    append(out, named_norm(p + "norm2", encoder[i].norm2));
    append(out, named_linear(p + "ffn1", encoder[i].ffn1));
    append(out, named_linear(p + "ffn2", encoder[i].ffn2));
  }
  out.emplace_back("decoder.query_embed", decoder.query_embed);
  out.emplace_back("decoder.temporal_embed", decoder.temporal_embed);
  append(out, named_linear("decoder.reference", decoder.reference));
  for (std::size_t i = 0; i < decoder.layers.size(); ++i) {
    const auto& d = decoder.layers[i];
    const std::string p = "decoder." + std::to_string(i) + ".";
    append(out, d.attn.named(p + "attn."));
    append(out, named_norm(p + "norm1", d.norm1));
    append(out, named_norm(p + "norm2", d.norm2));
    append(out, named_linear(p + "ffn1", d.ffn1));
    append(out, named_linear(p + "ffn2", d.ffn2));
    append(out, named_mlp(p + "refine", d.refine));
    append(out, named_mlp(p + "pose", d.pose));
    append(out, named_mlp(p + "occ", d.occ));
  }
  return out;
}

std::vector<double> positional_encoding(double x, double y, std::size_t t, std::size_t channels) {
  if (channels == 0 || channels % 3 != 0 || (channels / 3) % 2 != 0) {
    throw ConfigError("positional encoding needs C divisible by 3 with an even third, got " +
                      std::to_string(channels));
  }
  const std::size_t third = channels / 3;
  std::vector<double> out(channels);
  const double args[3] = {x * kSpatialScale, y * kSpatialScale, static_cast<double>(t)};
  for (std::size_t axis = 0; axis < 3; ++axis) {
    for (std::size_t i = 0; i < third / 2; ++i) {
      const double freq = std::pow(kTemperature, -2.0 * static_cast<double>(i) /
                                                     static_cast<double>(third));
      out[axis * third + 2 * i] = std::sin(args[axis] * freq);
      out[axis * third + 2 * i + 1] = std::cos(args[axis] * freq);
    }
  }
  return out;
}

namespace {

double grid_coordinate(std::size_t index, std::size_t extent) {
  return extent > 1 ? static_cast<double>(index) / static_cast<double>(extent - 1) : 0.0;
}

}  // namespace

Tensor positional_grid(std::size_t frames, std::size_t height, std::size_t width,
                       std::size_t channels) {
  std::vector<double> v;
  v.reserve(frames * height * width * channels);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        auto pe = positional_encoding(grid_coordinate(j, width), grid_coordinate(i, height), t,
                                      channels);
        v.insert(v.end(), pe.begin(), pe.end());
      }
  return Tensor({frames, height, width, channels}, std::move(v));
}

attention::FeatureVolume backbone_stub(const Tensor& images, const BackboneParams& params,
                                       const ModelConfig& config) {
  if (images.shape() != Shape{config.frames, config.image_height, config.image_width, 3}) {
    throw DimensionError("backbone expects images " +
                         shape_string({config.frames, config.image_height, config.image_width, 3}) +
                         ", got " + shape_string(images.shape()));
  }
  attention::FeatureVolume volume;
  Tensor x = ops::relu(ops::conv2d(images, params.conv1_w, params.conv1_b, 2, 1));
  x = ops::relu(ops::conv2d(x, params.conv2_w, params.conv2_b, 2, 1));
  volume.scales.push_back(ops::conv2d(x, params.proj_w[0], params.proj_b[0], 1, 0));
  if (config.scales >= 2) {
    x = ops::relu(ops::conv2d(x, params.conv3_w, params.conv3_b, 2, 1));
    volume.scales.push_back(ops::conv2d(x, params.proj_w[1], params.proj_b[1], 1, 0));
  }
  if (config.scales >= 3) {
    x = ops::relu(ops::conv2d(x, params.conv4_w, params.conv4_b, 2, 1));
    volume.scales.push_back(ops::conv2d(x, params.proj_w[2], params.proj_b[2], 1, 0));
  }
  return volume;
}

EncoderOutput encode(const attention::FeatureVolume& volume,
                     const std::vector<EncoderLayerParams>& layers, const ModelConfig& config) {
  volume.validate();
  const std::size_t c = volume.channels();
  const std::size_t frames = volume.frames();
  if (c != config.channels) throw DimensionError("encoder channel mismatch");
  std::vector<Tensor> rows;
  std::vector<std::size_t> counts, query_frames;
  std::vector<double> pos;
  for (std::size_t l = 0; l < volume.scale_count(); ++l) {
    const std::size_t h = volume.height(l), w = volume.width(l);
    Tensor encoded = ops::add(volume.scales[l], positional_grid(frames, h, w, c));
    rows.push_back(ops::reshape(encoded, {frames * h * w, c}));
    counts.push_back(frames * h * w);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          pos.push_back(grid_coordinate(j, w));
          pos.push_back(grid_coordinate(i, h));
          query_frames.push_back(t);
        }
  }
  Tensor x = rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
  const Tensor positions({query_frames.size(), 2}, std::move(pos));

  auto split = [&](const Tensor& all) {
    attention::FeatureVolume out;
    std::size_t start = 0;
    for (std::size_t l = 0; l < counts.size(); ++l) {
      Tensor part = counts.size() == 1 ? all : ops::slice(all, 0, start, start + counts[l]);
      out.scales.push_back(
          ops::reshape(part, {frames, volume.height(l), volume.width(l), c}));
      start += counts[l];
    }
    return out;
  };

  for (const auto& layer : layers) {
    const auto values = attention::project_values(split(x), layer.attn);
    const Tensor attended = attention::attend_projected({x, positions, query_frames}, values,
                                                        layer.attn, config.variant);
    x = layer.norm1(ops::add(x, attended));
    x = layer.norm2(ops::add(x, layer.ffn2(ops::relu(layer.ffn1(x)))));
  }
  EncoderOutput out;
  out.memory = split(x);
  out.heatmaps = ops::slice(out.memory.scales[0], 3, 0, config.joints);
  return out;
}

std::vector<LayerPrediction> decode(const DecoderParams& params,
                                    const attention::FeatureVolume& memory,
                                    const ModelConfig& config) {
  const std::size_t s = config.slots();
  const std::size_t nq = config.queries();
  const std::size_t nj = config.joints;
  if (params.query_embed.shape() != Shape{nq, config.channels}) {
    throw DimensionError("query embedding shape " + shape_string(params.query_embed.shape()));
  }
  Tensor q = params.query_embed;
  std::vector<std::size_t> slot_of(nq), frames(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    slot_of[i] = i % s;
    // Forecast queries look at the last observed frame.
    frames[i] = std::min(slot_of[i], config.frames - 1);
  }
  if (config.temporal_encoding) q = ops::add(q, ops::gather_rows(params.temporal_embed, slot_of));
  Tensor reference = params.reference(q);
  std::vector<LayerPrediction> out;
  for (const auto& layer : params.layers) {
    const Tensor xy = ops::sigmoid(ops::slice(reference, 1, 0, 2));
    const auto values = attention::project_values(memory, layer.attn);
    const Tensor attended =
        attention::attend_projected({q, xy, frames}, values, layer.attn, config.variant);
    q = layer.norm1(ops::add(q, attended));
    q = layer.norm2(ops::add(q, layer.ffn2(ops::relu(layer.ffn1(q)))));
    const Tensor refined = ops::add(reference, layer.refine(q));
    const Tensor pose = layer.pose(q);
    LayerPrediction pred;
    pred.reference = reference;
    pred.root_xy = ops::sigmoid(ops::slice(refined, 1, 0, 2));
    pred.root_depth = ops::exp(ops::slice(refined, 1, 2, 3));
    pred.offsets = ops::slice(pose, 1, 0, 3 * nj);
    pred.vis_logits = ops::slice(pose, 1, 3 * nj, 4 * nj);
    pred.occ_logits = layer.occ(q);
    out.push_back(std::move(pred));
    reference = refined;
  }
  return out;
}

ForwardOutput forward(const Tensor& images, const ModelParams& params, const ModelConfig& config) {
  ForwardOutput out;
  out.encoded = encode(backbone_stub(images, params.backbone, config), params.encoder, config);
  out.layers = decode(params.decoder, out.encoded.memory, config);
  return out;
}

namespace {

double logistic(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

}  // namespace

std::vector<geometry::Trajectory> to_trajectories(const LayerPrediction& layer,
                                                  const ModelConfig& config,
                                                  const geometry::CameraIntrinsics& cam) {
  const std::size_t s = config.slots();
  const std::size_t nj = config.joints;
  const auto xy = layer.root_xy.values();
  const auto d = layer.root_depth.values();
  const auto off = layer.offsets.values();
  const auto vis = layer.vis_logits.values();
  const auto occ = layer.occ_logits.values();
  std::vector<geometry::Trajectory> out(config.max_people);
  for (std::size_t i = 0; i < config.max_people; ++i) {
    out[i].identity = static_cast<int>(i);
    out[i].poses.resize(s);
    for (std::size_t t = 0; t < s; ++t) {
      const std::size_t q = i * s + t;
      geometry::Pose pose = geometry::Pose::zeros(nj);
      pose.root = {xy[2 * q] * static_cast<double>(config.image_width),
                   xy[2 * q + 1] * static_cast<double>(config.image_height), d[q]};
      for (std::size_t k = 0; k < nj; ++k) {
        const geometry::Vec3 normalized{off[q * 3 * nj + 3 * k], off[q * 3 * nj + 3 * k + 1],
                                        off[q * 3 * nj + 3 * k + 2]};
        pose.offsets[k] = geometry::denormalize_offset(normalized, d[q], cam);
        pose.visibility[k] = logistic(vis[q * nj + k]);
      }
      pose.occurrence = logistic(occ[q]);
      out[i].poses[t] = std::move(pose);
    }
  }
  return out;
}

SnippetPrediction run_snippet(const Tensor& images, const geometry::CameraIntrinsics& cam,
                              const ModelParams& params, const ModelConfig& config) {
  ForwardOutput fwd = forward(images, params, config);
  SnippetPrediction out;
  out.trajectories = to_trajectories(fwd.layers.back(), config, cam);
  out.heatmaps = fwd.encoded.heatmaps;
  return out;
}

}  // namespace snipper::model
