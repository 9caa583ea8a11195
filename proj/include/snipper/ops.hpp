#pragma once

#include <cstddef>
#include <vector>

#include "snipper/tensor.hpp"

// Differentiable operations over Tensor. Shapes follow row-major layout; the
// "last axis" is the feature axis for linear, softmax and layer_norm.
namespace snipper::ops {

// Elementwise. `b` may equal a's shape, be a suffix of it (broadcast over the
// leading axes), or hold a single value.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);

// max(log sigmoid(x), floor). Entries at the floor get zero gradient and are
// counted into *clamped when provided.
Tensor log_sigmoid(const Tensor& x, double floor, std::size_t* clamped = nullptr);

// x[..., C_in] * weight[C_out, C_in]^T + bias[C_out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x);

// Normalizes the last axis; gamma/beta (shape [C]) may be undefined.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
// Selects entries along axis 0; indices may repeat.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// sum(w * |a - b|) and sum(w * (a - b)^2). `weights` may be undefined (all 1)
// and is never differentiated. The L1 subgradient at 0 is 0.
Tensor l1_loss(const Tensor& a, const Tensor& b, const Tensor& weights = {});
Tensor l2_loss(const Tensor& a, const Tensor& b, const Tensor& weights = {});

// Bilinear lookup of volume[C, H, W] at normalized (x, y) given as scalar
// tensors. Out-of-range coordinates clamp to the border.
Tensor bilinear_sample(const Tensor& volume, const Tensor& x, const Tensor& y);

// Channel-last 2D convolution: x[B, H, W, C_in], weight[C_out, KH, KW, C_in],
// bias[C_out] (may be undefined) -> [B, H_out, W_out, C_out].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad);

}  // namespace snipper::ops
