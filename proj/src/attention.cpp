#include "snipper/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "snipper/error.hpp"
#include "snipper/interp.hpp"
#include "snipper/ops.hpp"

namespace snipper::attention {

Variant parse_variant(const std::string& name) {
  if (name == "neighbor") return Variant::kNeighbor;
  if (name == "direct3d") return Variant::kDirect3d;
  if (name == "full") return Variant::kFull;
  throw ConfigError("unknown attention variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kNeighbor: return "neighbor";
    case Variant::kDirect3d: return "direct3d";
    case Variant::kFull: return "full";
  }
  return "?";
}

std::size_t FeatureVolume::channels() const {
  if (scales.empty()) throw DimensionError("empty feature volume");
  return scales[0].dim(3);
}

std::size_t FeatureVolume::frames() const {
  if (scales.empty()) throw DimensionError("empty feature volume");
  return scales[0].dim(0);
}

std::array<std::size_t, 4> FeatureVolume::extents(std::size_t l) const {
  const auto& s = scales.at(l);
  return {s.dim(3), s.dim(0), s.dim(1), s.dim(2)};
}

std::size_t FeatureVolume::voxel_count() const {
  std::size_t n = 0;
  for (const auto& s : scales) n += s.dim(0) * s.dim(1) * s.dim(2);
  return n;
}

void FeatureVolume::validate() const {
  if (scales.empty()) throw DimensionError("feature volume has no scales");
  for (const auto& s : scales) {
    if (s.rank() != 4) {
      throw DimensionError("feature volume scale must be [T, H, W, C], got " +
                           shape_string(s.shape()));
    }
    if (s.dim(0) != scales[0].dim(0) || s.dim(3) != scales[0].dim(3)) {
      throw DimensionError("feature volume scales disagree on T or C");
    }
    if (s.dim(0) == 0 || s.dim(1) == 0 || s.dim(2) == 0 || s.dim(3) == 0) {
      throw DimensionError("feature volume scale has a zero extent");
    }
  }
}

std::size_t heads_at_distance(std::size_t base_heads, std::size_t distance) {
  if (distance >= 63) return 1;
  return std::max<std::size_t>(1, base_heads >> distance);
}

AttentionLayout AttentionLayout::make(std::size_t channels, std::size_t base_heads,
                                      std::size_t points, std::size_t scales,
                                      std::size_t max_distance) {
  if (base_heads == 0 || points == 0 || scales == 0) {
    throw ConfigError("attention needs at least one head, point and scale");
  }
  if (channels == 0 || channels % base_heads != 0) {
    throw ConfigError("channels (" + std::to_string(channels) +
                      ") must be divisible by the head count (" +
                      std::to_string(base_heads) + ")");
  }
  AttentionLayout layout;
  layout.channels = channels;
  layout.base_heads = base_heads;
  layout.points = points;
  layout.scales = scales;
  layout.max_distance = max_distance;
  const int r = static_cast<int>(max_distance);
  for (int delta = -r; delta <= r; ++delta) {
    const std::size_t count = heads_at_distance(base_heads, static_cast<std::size_t>(std::abs(delta)));
    for (std::size_t h = 0; h < count; ++h) layout.slots.push_back({delta, h});
  }
  return layout;
}

AttentionParams AttentionParams::init(const AttentionLayout& layout, Rng& rng, bool with_time) {
  const std::size_t c = layout.channels;
  const std::size_t p = layout.samples();
  auto xavier = [&](std::size_t rows, std::size_t cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-a, a);
    return Tensor({rows, cols}, std::move(v), true);
  };
  AttentionParams params;
  params.layout = layout;
  params.value_weight = xavier(c, c);
  params.offset_weight = Tensor({2 * p, c}, 0.0, true);
  std::vector<double> ob(2 * p);
  for (std::size_t s = 0; s < p; ++s) {
    const std::size_t k = s % layout.points;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(layout.points);
    ob[2 * s] = std::cos(angle);
    ob[2 * s + 1] = std::sin(angle);
  }
  params.offset_bias = Tensor({2 * p}, std::move(ob), true);
  params.logit_weight = Tensor({p, c}, 0.0, true);
  params.logit_bias = Tensor({p}, 0.0, true);
  if (with_time) {
    params.time_weight = Tensor({p, c}, 0.0, true);
    params.time_bias = Tensor({p}, 0.0, true);
  }
  params.output_weight = xavier(c, c);
  params.output_bias = Tensor({c}, 0.0, true);
  return params;
}

std::vector<std::pair<std::string, Tensor>> AttentionParams::named(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out = {
      {prefix + "value_weight", value_weight},   {prefix + "offset_weight", offset_weight},
      {prefix + "offset_bias", offset_bias},     {prefix + "logit_weight", logit_weight},
      {prefix + "logit_bias", logit_bias},
  };
  if (time_weight.defined()) {
    out.emplace_back(prefix + "time_weight", time_weight);
    out.emplace_back(prefix + "time_bias", time_bias);
  }
  out.emplace_back(prefix + "output_weight", output_weight);
  out.emplace_back(prefix + "output_bias", output_bias);
  return out;
}

std::vector<std::size_t> neighbor_frames(std::size_t t_q, std::size_t frames) {
  if (t_q >= frames) {
    throw ContractError("query frame " + std::to_string(t_q) + " outside snippet of " +
                        std::to_string(frames) + " frames");
  }
  std::vector<std::size_t> out;
  if (t_q > 0) out.push_back(t_q - 1);
  out.push_back(t_q);
  if (t_q + 1 < frames) out.push_back(t_q + 1);
  return out;
}

namespace {

// Largest |delta| a variant may use for a snippet of `frames` frames.
std::size_t reach(Variant variant, std::size_t frames) {
  return variant == Variant::kFull ? (frames == 0 ? 0 : frames - 1) : 1;
}

bool slot_valid(const HeadSlot& slot, Variant variant, std::size_t t_q, std::size_t frames) {
  const long t = static_cast<long>(t_q) + slot.delta;
  if (t < 0 || t >= static_cast<long>(frames)) return false;
  return static_cast<std::size_t>(std::abs(slot.delta)) <= reach(variant, frames);
}

}  // namespace

std::size_t samples_per_head(Variant variant, std::size_t t_q, std::size_t frames,
                             std::size_t points, std::size_t scales) {
  std::size_t n_frames =
      variant == Variant::kFull ? frames : neighbor_frames(t_q, frames).size();
  if (t_q >= frames) throw ContractError("query frame outside snippet");
  return n_frames * points * scales;
}

std::size_t samples_per_query(Variant variant, const AttentionLayout& layout,
                              std::size_t t_q, std::size_t frames) {
  if (t_q >= frames) throw ContractError("query frame outside snippet");
  std::size_t n = 0;
  for (const auto& slot : layout.slots) {
    if (slot_valid(slot, variant, t_q, frames)) n += layout.points * layout.scales;
  }
  return n;
}

std::vector<Tensor> project_values(const FeatureVolume& volume, const AttentionParams& params) {
  volume.validate();
  if (volume.channels() != params.layout.channels) {
    throw DimensionError("feature volume has " + std::to_string(volume.channels()) +
                         " channels, attention expects " + std::to_string(params.layout.channels));
  }
  std::vector<Tensor> values;
  values.reserve(volume.scales.size());
  for (const auto& s : volume.scales) values.push_back(ops::linear(s, params.value_weight, {}));
  return values;
}

namespace {

using detail::Node;

struct KernelSpec {
  AttentionLayout layout;
  Variant variant;
  std::size_t frames;
  std::size_t queries;
  bool has_time;
  std::vector<std::size_t> query_frames;
  std::vector<std::array<std::size_t, 2>> extents;  // (H, W) per scale
  // valid sample indices per query, grouped per head
  std::vector<std::vector<std::vector<std::size_t>>> head_samples;
};

// Spatial and temporal stencils of one sample.
struct SampleStencil {
  AxisStencil sx, sy, st;
  std::size_t scale = 0;
  std::size_t head = 0;
};

SampleStencil make_stencil(const KernelSpec& spec, std::size_t q, std::size_t s,
                           const double* pos, const double* off, const double* dt) {
  const std::size_t per_slot = spec.layout.scales * spec.layout.points;
  const HeadSlot& slot = spec.layout.slots[s / per_slot];
  SampleStencil st;
  st.scale = (s % per_slot) / spec.layout.points;
  st.head = slot.head;
  const auto [h, w] = spec.extents[st.scale];
  const double gx = pos[2 * q] * static_cast<double>(w > 0 ? w - 1 : 0) + off[2 * s];
  const double gy = pos[2 * q + 1] * static_cast<double>(h > 0 ? h - 1 : 0) + off[2 * s + 1];
  st.sx = grid_stencil(gx, w);
  st.sy = grid_stencil(gy, h);
  const double anchor = static_cast<double>(static_cast<long>(spec.query_frames[q]) + slot.delta);
  if (spec.has_time) {
    st.st = grid_stencil(anchor + dt[s], spec.frames);
  } else {
    st.st = AxisStencil{};
    st.st.lo = st.st.hi = static_cast<std::size_t>(anchor);
    st.st.w_lo = 1.0;
    st.st.w_hi = 0.0;
    st.st.slope = 0.0;
  }
  return st;
}

// Bilinear sample of one frame of a [T, H, W, C] value tensor at channels
// [c0, c0 + dh), accumulated into out with factor `scale`.
inline void accumulate_frame(const double* vol, std::size_t h, std::size_t w, std::size_t c,
                             std::size_t t, const AxisStencil& sx, const AxisStencil& sy,
                             std::size_t c0, std::size_t dh, double scale, double* out) {
  (void)h;
  const double* base = vol + t * h * w * c;
  const double* p00 = base + (sy.lo * w + sx.lo) * c + c0;
  const double* p01 = base + (sy.lo * w + sx.hi) * c + c0;
  const double* p10 = base + (sy.hi * w + sx.lo) * c + c0;
  const double* p11 = base + (sy.hi * w + sx.hi) * c + c0;
  const double w00 = scale * sy.w_lo * sx.w_lo, w01 = scale * sy.w_lo * sx.w_hi;
  const double w10 = scale * sy.w_hi * sx.w_lo, w11 = scale * sy.w_hi * sx.w_hi;
  for (std::size_t i = 0; i < dh; ++i) {
    out[i] += w00 * p00[i] + w01 * p01[i] + w10 * p10[i] + w11 * p11[i];
  }
}

}  // namespace

Tensor attend_projected(const QueryBatch& queries, const std::vector<Tensor>& values,
                        const AttentionParams& params, Variant variant, AttentionTrace* trace) {
  const AttentionLayout& layout = params.layout;
  const std::size_t c = layout.channels;
  if (values.size() != layout.scales) {
    throw DimensionError("attention expects " + std::to_string(layout.scales) +
                         " scales, volume has " + std::to_string(values.size()));
  }
  const std::size_t frames = values.at(0).dim(0);
  for (const auto& v : values) {
    if (v.rank() != 4 || v.dim(3) != c || v.dim(0) != frames) {
      throw DimensionError("value volume " + shape_string(v.shape()) + " does not match C=" +
                           std::to_string(c));
    }
  }
  if (queries.features.rank() != 2 || queries.features.dim(1) != c) {
    throw DimensionError("query features must be [Q, " + std::to_string(c) + "], got " +
                         shape_string(queries.features.shape()));
  }
  const std::size_t nq = queries.features.dim(0);
  if (queries.positions.shape() != Shape{nq, 2} || queries.frames.size() != nq) {
    throw DimensionError("query positions/frames do not match query count");
  }
  if (variant == Variant::kFull && layout.max_distance + 1 < frames) {
    throw DimensionError("full-snippet sampling over " + std::to_string(frames) +
                         " frames needs parameters covering frame distance " +
                         std::to_string(frames - 1));
  }
  const bool has_time = variant == Variant::kDirect3d;
  if (has_time && !params.time_weight.defined()) {
    throw DimensionError("direct-3D sampling needs a temporal offset regressor");
  }
  for (auto t : queries.frames) {
    if (t >= frames) throw ContractError("query frame outside snippet");
  }

  const Tensor offsets = ops::linear(queries.features, params.offset_weight, params.offset_bias);
  const Tensor logits = ops::linear(queries.features, params.logit_weight, params.logit_bias);
  Tensor dt;
  if (has_time) dt = ops::linear(queries.features, params.time_weight, params.time_bias);

  auto spec = std::make_shared<KernelSpec>();
  spec->layout = layout;
  spec->variant = variant;
  spec->frames = frames;
  spec->queries = nq;
  spec->has_time = has_time;
  spec->query_frames = queries.frames;
  for (const auto& v : values) spec->extents.push_back({v.dim(1), v.dim(2)});
  const std::size_t per_slot = layout.scales * layout.points;
  const std::size_t p = layout.samples();
  spec->head_samples.resize(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    auto& hs = spec->head_samples[q];
    hs.resize(layout.base_heads);
    for (std::size_t si = 0; si < layout.slots.size(); ++si) {
      if (!slot_valid(layout.slots[si], variant, queries.frames[q], frames)) continue;
      auto& list = hs[layout.slots[si].head];
      for (std::size_t j = 0; j < per_slot; ++j) list.push_back(si * per_slot + j);
    }
  }

  const std::size_t dh = layout.head_dim();
  const double* pos = queries.positions.values().data();
  const double* off = offsets.values().data();
  const double* lg = logits.values().data();
  const double* dtv = has_time ? dt.values().data() : nullptr;
  std::vector<double> alpha(nq * p, 0.0);
  std::vector<double> out(nq * c, 0.0);
  if (trace) trace->weights.assign(nq, {});
  for (std::size_t q = 0; q < nq; ++q) {
    if (trace) trace->weights[q].resize(layout.base_heads);
    for (std::size_t h = 0; h < layout.base_heads; ++h) {
      const auto& list = spec->head_samples[q][h];
      if (list.empty()) continue;
      double m = -std::numeric_limits<double>::infinity();
      for (auto s : list) m = std::max(m, lg[q * p + s]);
      double z = 0.0;
      for (auto s : list) z += (alpha[q * p + s] = std::exp(lg[q * p + s] - m));
      for (auto s : list) alpha[q * p + s] /= z;
      for (auto s : list) {
        const SampleStencil st = make_stencil(*spec, q, s, pos, off + q * 2 * p, dtv ? dtv + q * p : nullptr);
        const auto [hh, ww] = spec->extents[st.scale];
        const double* vol = values[st.scale].values().data();
        const double a = alpha[q * p + s];
        double* o = out.data() + q * c + h * dh;
        accumulate_frame(vol, hh, ww, c, st.st.lo, st.sx, st.sy, h * dh, dh, a * st.st.w_lo, o);
        if (st.st.w_hi != 0.0) {
          accumulate_frame(vol, hh, ww, c, st.st.hi, st.sx, st.sy, h * dh, dh, a * st.st.w_hi, o);
        }
      }
      if (trace) {
        for (auto s : list) trace->weights[q][h].push_back(alpha[q * p + s]);
      }
    }
  }

  std::vector<Tensor> parents(values.begin(), values.end());
  parents.push_back(queries.positions);
  parents.push_back(offsets);
  parents.push_back(logits);
  parents.push_back(dt);
  const std::size_t n_scales = values.size();
  Tensor aggregated = Tensor::make_result(
      Shape{nq, c}, std::move(out), parents,
      [spec, alpha = std::move(alpha), n_scales, dh, c, p](Node& self) {
        const auto& layout = spec->layout;
        auto wants = [&](std::size_t i) {
          return self.parents[i] && self.parents[i]->requires_grad;
        };
        const std::size_t i_pos = n_scales, i_off = n_scales + 1, i_log = n_scales + 2,
                          i_dt = n_scales + 3;
        const double* pos = self.parent(i_pos).value.data();
        const double* off = self.parent(i_off).value.data();
        const double* dtv = spec->has_time ? self.parent(i_dt).value.data() : nullptr;
        std::vector<std::vector<double>*> gvals(n_scales, nullptr);
        for (std::size_t l = 0; l < n_scales; ++l) {
          if (wants(l)) gvals[l] = &self.parent(l).ensure_grad();
        }
        std::vector<double>* gpos = wants(i_pos) ? &self.parent(i_pos).ensure_grad() : nullptr;
        std::vector<double>* goff = wants(i_off) ? &self.parent(i_off).ensure_grad() : nullptr;
        std::vector<double>* glog = wants(i_log) ? &self.parent(i_log).ensure_grad() : nullptr;
        std::vector<double>* gdt =
            spec->has_time && wants(i_dt) ? &self.parent(i_dt).ensure_grad() : nullptr;
        std::vector<double> sample_lo(dh), sample_hi(dh), dalpha;
        for (std::size_t q = 0; q < spec->queries; ++q) {
          for (std::size_t h = 0; h < layout.base_heads; ++h) {
            const auto& list = spec->head_samples[q][h];
            if (list.empty()) continue;
            const double* gout = self.grad.data() + q * c + h * dh;
            dalpha.assign(list.size(), 0.0);
            double weighted = 0.0;
            for (std::size_t j = 0; j < list.size(); ++j) {
              const std::size_t s = list[j];
              const SampleStencil st =
                  make_stencil(*spec, q, s, pos, off + q * 2 * p, dtv ? dtv + q * p : nullptr);
              const auto [hh, ww] = spec->extents[st.scale];
              const double* vol = self.parent(st.scale).value.data();
              std::fill(sample_lo.begin(), sample_lo.end(), 0.0);
              std::fill(sample_hi.begin(), sample_hi.end(), 0.0);
              accumulate_frame(vol, hh, ww, c, st.st.lo, st.sx, st.sy, h * dh, dh, 1.0,
                               sample_lo.data());
              accumulate_frame(vol, hh, ww, c, st.st.hi, st.sx, st.sy, h * dh, dh, 1.0,
                               sample_hi.data());
              const double a = alpha[q * p + s];
              double da = 0.0, dtime = 0.0;
              for (std::size_t i = 0; i < dh; ++i) {
                const double sample = st.st.w_lo * sample_lo[i] + st.st.w_hi * sample_hi[i];
                da += gout[i] * sample;
                dtime += gout[i] * (sample_hi[i] - sample_lo[i]);
              }
              dalpha[j] = da;
              weighted += a * da;
              if (gdt) (*gdt)[q * p + s] += a * dtime * st.st.slope;
              // Spatial derivative and value scatter, frame by frame.
              double dgx = 0.0, dgy = 0.0;
              for (int side = 0; side < 2; ++side) {
                const double wt = side == 0 ? st.st.w_lo : st.st.w_hi;
                if (wt == 0.0) continue;
                const std::size_t t = side == 0 ? st.st.lo : st.st.hi;
                const std::size_t base = t * hh * ww * c;
                const std::size_t o00 = base + (st.sy.lo * ww + st.sx.lo) * c + h * dh;
                const std::size_t o01 = base + (st.sy.lo * ww + st.sx.hi) * c + h * dh;
                const std::size_t o10 = base + (st.sy.hi * ww + st.sx.lo) * c + h * dh;
                const std::size_t o11 = base + (st.sy.hi * ww + st.sx.hi) * c + h * dh;
                const double f = a * wt;
                for (std::size_t i = 0; i < dh; ++i) {
                  const double g = gout[i] * f;
                  dgx += g * (st.sy.w_lo * (vol[o01 + i] - vol[o00 + i]) +
                              st.sy.w_hi * (vol[o11 + i] - vol[o10 + i]));
                  dgy += g * (st.sx.w_lo * (vol[o10 + i] - vol[o00 + i]) +
                              st.sx.w_hi * (vol[o11 + i] - vol[o01 + i]));
                }
                if (auto* gv = gvals[st.scale]) {
                  const double w00 = f * st.sy.w_lo * st.sx.w_lo, w01 = f * st.sy.w_lo * st.sx.w_hi;
                  const double w10 = f * st.sy.w_hi * st.sx.w_lo, w11 = f * st.sy.w_hi * st.sx.w_hi;
                  for (std::size_t i = 0; i < dh; ++i) {
                    (*gv)[o00 + i] += w00 * gout[i];
                    (*gv)[o01 + i] += w01 * gout[i];
                    (*gv)[o10 + i] += w10 * gout[i];
                    (*gv)[o11 + i] += w11 * gout[i];
                  }
                }
              }
              dgx *= st.sx.slope;
              dgy *= st.sy.slope;
              if (goff) {
                (*goff)[q * 2 * p + 2 * s] += dgx;
                (*goff)[q * 2 * p + 2 * s + 1] += dgy;
              }
              if (gpos) {
                (*gpos)[2 * q] += dgx * static_cast<double>(ww > 0 ? ww - 1 : 0);
                (*gpos)[2 * q + 1] += dgy * static_cast<double>(hh > 0 ? hh - 1 : 0);
              }
            }
            if (glog) {
              for (std::size_t j = 0; j < list.size(); ++j) {
                const std::size_t s = list[j];
                (*glog)[q * p + s] += alpha[q * p + s] * (dalpha[j] - weighted);
              }
            }
          }
        }
      },
      "deform_sample");
  return ops::linear(aggregated, params.output_weight, params.output_bias);
}

Tensor attend(const QueryBatch& queries, const FeatureVolume& volume,
              const AttentionParams& params, Variant variant, AttentionTrace* trace) {
  return attend_projected(queries, project_values(volume, params), params, variant, trace);
}

namespace {

Tensor attend_single(const QueryPoint& query, const FeatureVolume& volume,
                     const AttentionParams& params, Variant variant) {
  if (query.feature.numel() != params.layout.channels) {
    throw DimensionError("query feature has " + std::to_string(query.feature.numel()) +
                         " values, expected " + std::to_string(params.layout.channels));
  }
  QueryBatch batch;
  batch.features = ops::reshape(query.feature, {1, params.layout.channels});
  batch.positions = Tensor({1, 2}, {query.x, query.y});
  batch.frames = {query.t};
  return ops::reshape(attend(batch, volume, params, variant), {params.layout.channels});
}

}  // namespace

Tensor deform_attend(const QueryPoint& query, const FeatureVolume& volume,
                     const AttentionParams& params) {
  return attend_single(query, volume, params, Variant::kNeighbor);
}

Tensor deform_attend_direct3d(const QueryPoint& query, const FeatureVolume& volume,
                              const AttentionParams& params) {
  return attend_single(query, volume, params, Variant::kDirect3d);
}

Tensor deform_attend_full(const QueryPoint& query, const FeatureVolume& volume,
                          const AttentionParams& params) {
  return attend_single(query, volume, params, Variant::kFull);
}

}  // namespace snipper::attention
