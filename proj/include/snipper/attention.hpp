#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "snipper/rng.hpp"
#include "snipper/tensor.hpp"

namespace snipper::attention {

/// Which frames a query may sample from.
///  - kNeighbor: integer frames {t-1, t, t+1} clipped to the snippet.
///  - kDirect3d: same anchors plus a regressed fractional time offset,
///    interpolated trilinearly across frames (ablation).
///  - kFull:     every frame of the snippet (ablation).
enum class Variant { kNeighbor, kDirect3d, kFull };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

/// Multi-scale multi-frame features. Scale l is stored channel-last as a
/// tensor of shape [T, H_l, W_l, C]; `extents(l)` reports the logical
/// C x T x H x W view.
struct FeatureVolume {
  std::vector<Tensor> scales;

  std::size_t scale_count() const { return scales.size(); }
  std::size_t channels() const;
  std::size_t frames() const;
  std::size_t height(std::size_t l) const { return scales.at(l).dim(1); }
  std::size_t width(std::size_t l) const { return scales.at(l).dim(2); }
  std::array<std::size_t, 4> extents(std::size_t l) const;
  std::size_t voxel_count() const;

  // Throws DimensionError if scales disagree on C or T or are empty.
  void validate() const;
};

/// Head count for frames `distance` away from the query frame:
/// base_heads / 2^distance, never below 1.
std::size_t heads_at_distance(std::size_t base_heads, std::size_t distance);

struct HeadSlot {
  int delta = 0;          // frame offset from the query frame
  std::size_t head = 0;   // head index; heads share channel groups
};

/// Static description of the sampling pattern a parameter set regresses.
struct AttentionLayout {
  std::size_t channels = 0;
  std::size_t base_heads = 8;
  std::size_t points = 4;        // K, samples per frame per scale
  std::size_t scales = 1;        // L
  std::size_t max_distance = 1;  // frame offsets covered: [-R, R]
  std::vector<HeadSlot> slots;   // ordered by delta, then head

  static AttentionLayout make(std::size_t channels, std::size_t base_heads,
                              std::size_t points, std::size_t scales,
                              std::size_t max_distance);

  std::size_t head_dim() const { return channels / base_heads; }
  std::size_t samples() const { return slots.size() * scales * points; }
};

/// Linear maps of the attention block. The per-head value maps W_h are
/// stacked into `value_weight` (head h owns output rows [h*dh, (h+1)*dh));
/// the per-head output maps W'_h are the matching column blocks of
/// `output_weight`, so sum_h W'_h [.] equals one linear over the concat.
struct AttentionParams {
  AttentionLayout layout;
  Tensor value_weight;   // [C, C]
  Tensor offset_weight;  // [2P, C]
  Tensor offset_bias;    // [2P]
  Tensor logit_weight;   // [P, C]
  Tensor logit_bias;     // [P]
  Tensor time_weight;    // [P, C], direct-3D sampling only (may be undefined)
  Tensor time_bias;      // [P]
  Tensor output_weight;  // [C, C]
  Tensor output_bias;    // [C]

  // Offsets start on a unit-cell circle at angles 2*pi*k/K from 0 rad and
  // logits start at zero, so every head initially weighs its samples equally.
  static AttentionParams init(const AttentionLayout& layout, Rng& rng, bool with_time);

  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

struct QueryPoint {
  Tensor feature;  // [C]
  double x = 0.0;  // normalized [0, 1]
  double y = 0.0;
  std::size_t t = 0;
};

/// Batch of queries for the fused kernel.
struct QueryBatch {
  Tensor features;                 // [Q, C]
  Tensor positions;                // [Q, 2] normalized (x, y); may require grad
  std::vector<std::size_t> frames; // query frame per row
};

/// Normalized attention weights of one query, grouped by head.
struct AttentionTrace {
  std::vector<std::vector<std::vector<double>>> weights;  // [query][head][sample]
};

std::vector<std::size_t> neighbor_frames(std::size_t t_q, std::size_t frames);

// Samples one head draws per query when it covers every allowed frame
// (|frames| * K * L).
std::size_t samples_per_head(Variant variant, std::size_t t_q, std::size_t frames,
                             std::size_t points, std::size_t scales);
// Samples summed over all heads under the head schedule.
std::size_t samples_per_query(Variant variant, const AttentionLayout& layout,
                              std::size_t t_q, std::size_t frames);

/// Projects `volume` through the value maps once; reuse across query batches.
std::vector<Tensor> project_values(const FeatureVolume& volume, const AttentionParams& params);

/// Deformable aggregation for a batch of queries: returns [Q, C].
Tensor attend(const QueryBatch& queries, const FeatureVolume& volume,
              const AttentionParams& params, Variant variant,
              AttentionTrace* trace = nullptr);

Tensor attend_projected(const QueryBatch& queries, const std::vector<Tensor>& values,
                        const AttentionParams& params, Variant variant,
                        AttentionTrace* trace = nullptr);

// Single-query entry points returning a [C] tensor.
Tensor deform_attend(const QueryPoint& query, const FeatureVolume& volume,
                     const AttentionParams& params);
Tensor deform_attend_direct3d(const QueryPoint& query, const FeatureVolume& volume,
                              const AttentionParams& params);
Tensor deform_attend_full(const QueryPoint& query, const FeatureVolume& volume,
                          const AttentionParams& params);

}  // namespace snipper::attention
