#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace snipper {

/// Linear interpolation stencil along one axis of `extent` grid nodes.
/// Normalized coordinate 0 maps to node 0 and 1 maps to node extent-1;
/// coordinates outside [0, 1] clamp to the border with zero derivative.
struct AxisStencil {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double w_lo = 1.0;
  double w_hi = 0.0;
  // d(grid coordinate)/d(normalized coordinate); 0 when clamped.
  double slope = 0.0;
};

inline AxisStencil grid_stencil(double grid_coord, std::size_t extent) {
  AxisStencil s;
  if (extent <= 1) return s;
  const double max_coord = static_cast<double>(extent - 1);
  double g = grid_coord;
  s.slope = 1.0;
  if (g <= 0.0) {
    g = 0.0;
    if (grid_coord < 0.0) s.slope = 0.0;
  } else if (g >= max_coord) {
    g = max_coord;
    if (grid_coord > max_coord) s.slope = 0.0;
  }
  std::size_t lo = static_cast<std::size_t>(std::floor(g));
  if (lo > extent - 2) lo = extent - 2;
  s.lo = lo;
  s.hi = lo + 1;
  s.w_hi = g - static_cast<double>(lo);
  s.w_lo = 1.0 - s.w_hi;
  return s;
}

// Stencil for a normalized coordinate; slope is d(grid)/d(normalized).
inline AxisStencil normalized_stencil(double u, std::size_t extent) {
  if (extent <= 1) return AxisStencil{};
  const double scale = static_cast<double>(extent - 1);
  AxisStencil s = grid_stencil(u * scale, extent);
  s.slope *= scale;
  return s;
}

}  // namespace snipper
