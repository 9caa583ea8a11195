#include "snipper/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "snipper/error.hpp"
#include "snipper/interp.hpp"

namespace snipper::ops {

namespace {

using detail::Node;

bool wants_grad(Node& self, std::size_t i) {
  return i < self.parents.size() && self.parents[i] && self.parents[i]->requires_grad;
}

// Number of times b repeats inside a for broadcasting, or throws.
std::size_t broadcast_repeats(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (b.numel() == 1) return a.numel();
  if (sb.size() > sa.size() ||
      !std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sb) +
                         " onto " + shape_string(sa));
  }
  return a.numel() / std::max<std::size_t>(b.numel(), 1);
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": scalar input");
  return x.shape().back();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return Tensor::make_result(
      x.shape(), std::move(out), {x},
      [deriv](Node& self) {
        Node& p = self.parent(0);
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
        }
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t nb = b.numel();
  broadcast_repeats(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i % nb];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [nb](Node& self) {
        if (wants_grad(self, 0)) {
          auto& g = self.parent(0).ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
          auto& g = self.parent(1).ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % nb] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t nb = b.numel();
  broadcast_repeats(a, b, "sub");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i % nb];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [nb](Node& self) {
        if (wants_grad(self, 0)) {
          auto& g = self.parent(0).ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
          auto& g = self.parent(1).ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % nb] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t nb = b.numel();
  broadcast_repeats(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % nb];
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [nb](Node& self) {
        Node& pa = self.parent(0);
        Node& pb = self.parent(1);
        if (wants_grad(self, 0)) {
          auto& g = pa.ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i % nb];
        }
        if (wants_grad(self, 1)) {
          auto& g = pb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) {
            g[i % nb] += self.grad[i] * pa.value[i];
          }
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double out) { return out; });
}

Tensor log_sigmoid(const Tensor& x, double floor, std::size_t* clamped) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<char> at_floor(xv.size(), 0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    // log(sigmoid(v)) = -softplus(-v), evaluated without overflow.
    const double ls = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
    if (ls < floor) {
      out[i] = floor;
      at_floor[i] = 1;
      if (clamped) ++*clamped;
    } else {
      out[i] = ls;
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x},
      [at_floor = std::move(at_floor)](Node& self) {
        Node& p = self.parent(0);
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (at_floor[i]) continue;
          const double v = p.value[i];
          // d/dv log sigmoid(v) = 1 - sigmoid(v) = sigmoid(-v)
          const double s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
          g[i] += self.grad[i] * s;
        }
      },
      "log_sigmoid");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t cin = last_dim(x, "linear");
  if (weight.rank() != 2 || weight.dim(1) != cin) {
    throw DimensionError("linear: weight " + shape_string(weight.shape()) +
                         " does not accept input " + shape_string(x.shape()));
  }
  const std::size_t cout = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) +
                         " does not match " + std::to_string(cout) + " outputs");
  }
  const std::size_t rows = x.numel() / std::max<std::size_t>(cin, 1);
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  std::vector<double> out(rows * cout);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * cin;
    double* orow = out.data() + r * cout;
    for (std::size_t o = 0; o < cout; ++o) {
      const double* wr = wv + o * cin;
      double acc = 0.0;
      for (std::size_t i = 0; i < cin; ++i) acc += xr[i] * wr[i];
      orow[o] = acc;
    }
    if (bias.defined()) {
      const auto bv = bias.values();
      for (std::size_t o = 0; o < cout; ++o) orow[o] += bv[o];
    }
  }
  Shape shape = x.shape();
  shape.back() = cout;
  return Tensor::make_result(
      std::move(shape), std::move(out), {x, weight, bias},
      [rows, cin, cout](Node& self) {
        const double* g = self.grad.data();
        Node& px = self.parent(0);
        Node& pw = self.parent(1);
        if (wants_grad(self, 0)) {
          auto& gx = px.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            double* gxr = gx.data() + r * cin;
            for (std::size_t o = 0; o < cout; ++o) {
              const double go = g[r * cout + o];
              if (go == 0.0) continue;
              const double* wr = pw.value.data() + o * cin;
              for (std::size_t i = 0; i < cin; ++i) gxr[i] += go * wr[i];
            }
          }
        }
        if (wants_grad(self, 1)) {
          auto& gw = pw.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = px.value.data() + r * cin;
            for (std::size_t o = 0; o < cout; ++o) {
              const double go = g[r * cout + o];
              if (go == 0.0) continue;
              double* gwr = gw.data() + o * cin;
              for (std::size_t i = 0; i < cin; ++i) gwr[i] += go * xr[i];
            }
          }
        }
        if (wants_grad(self, 2)) {
          auto& gb = self.parent(2).ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < cout; ++o) gb[o] += g[r * cout + o];
          }
        }
      },
      "linear");
}

Tensor softmax(const Tensor& x) {
  const std::size_t k = last_dim(x, "softmax");
  if (k == 0) throw DimensionError("softmax: empty axis");
  const std::size_t rows = x.numel() / k;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * k;
    double* o = out.data() + r * k;
    const double m = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += (o[i] = std::exp(in[i] - m));
    for (std::size_t i = 0; i < k; ++i) o[i] /= z;
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x},
      [rows, k](Node& self) {
        auto& g = self.parent(0).ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.value.data() + r * k;
          const double* gy = self.grad.data() + r * k;
          double dot = 0.0;
          for (std::size_t i = 0; i < k; ++i) dot += y[i] * gy[i];
          for (std::size_t i = 0; i < k; ++i) g[r * k + i] += y[i] * (gy[i] - dot);
        }
      },
      "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = last_dim(x, "layer_norm");
  for (const Tensor* t : {&gamma, &beta}) {
    if (t->defined() && (t->rank() != 1 || t->dim(0) != c)) {
      throw DimensionError("layer_norm: affine parameter " + shape_string(t->shape()) +
                           " does not match width " + std::to_string(c));
    }
  }
  const std::size_t rows = x.numel() / c;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += in[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < c; ++i) {
      const double h = (in[i] - mu) * is;
      xhat[r * c + i] = h;
      double v = h;
      if (gamma.defined()) v *= gamma.values()[i];
      if (beta.defined()) v += beta.values()[i];
      out[r * c + i] = v;
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const bool has_gamma = self.parents[1] != nullptr;
        const double* gv = has_gamma ? self.parent(1).value.data() : nullptr;
        const double* gy = self.grad.data();
        if (wants_grad(self, 1)) {
          auto& gg = self.parent(1).ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < c; ++i) gg[i] += gy[r * c + i] * xhat[r * c + i];
        }
        if (wants_grad(self, 2)) {
          auto& gb = self.parent(2).ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < c; ++i) gb[i] += gy[r * c + i];
        }
        if (wants_grad(self, 0)) {
          auto& gx = self.parent(0).ensure_grad();
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t i = 0; i < c; ++i) {
              const double dh = gy[r * c + i] * (gv ? gv[i] : 1.0);
              s1 += dh;
              s2 += dh * xhat[r * c + i];
            }
            for (std::size_t i = 0; i < c; ++i) {
              const double dh = gy[r * c + i] * (gv ? gv[i] : 1.0);
              gx[r * c + i] += inv_std[r] * (dh - inv_c * s1 - xhat[r * c + i] * inv_c * s2);
            }
          }
        }
      },
      "layer_norm");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) {
        throw DimensionError("concat: extent mismatch " + shape_string(s) + " vs " +
                             shape_string(s0));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  const std::size_t out_axis = out_shape[axis];
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t a = p.shape()[axis];
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * a * inner, a * inner,
                  out.data() + (o * out_axis + off) * inner);
    }
    offsets.push_back(off);
    off += a;
  }
  std::vector<std::size_t> extents;
  for (const auto& p : parts) extents.push_back(p.shape()[axis]);
  return Tensor::make_result(
      std::move(out_shape), std::move(out), parts,
      [outer, inner, out_axis, offsets = std::move(offsets),
       extents = std::move(extents)](Node& self) {
        for (std::size_t k = 0; k < extents.size(); ++k) {
          if (!wants_grad(self, k)) continue;
          auto& g = self.parent(k).ensure_grad();
          const std::size_t a = extents[k];
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + (o * out_axis + offsets[k]) * inner;
            double* dst = g.data() + o * a * inner;
            for (std::size_t i = 0; i < a * inner; ++i) dst[i] += src[i];
          }
        }
      },
      "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t a = s[axis];
  const std::size_t w = end - begin;
  Shape out_shape = s;
  out_shape[axis] = w;
  std::vector<double> out(outer * w * inner);
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data() + (o * a + begin) * inner, w * inner, out.data() + o * w * inner);
  }
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {x},
      [outer, inner, a, w, begin](Node& self) {
        auto& g = self.parent(0).ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * w * inner;
          double* dst = g.data() + (o * a + begin) * inner;
          for (std::size_t i = 0; i < w * inner; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  const auto xv = x.values();
  return Tensor::make_result(
      std::move(shape), std::vector<double>(xv.begin(), xv.end()), {x},
      [](Node& self) {
        auto& g = self.parent(0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.rank() == 0) throw DimensionError("gather_rows: scalar input");
  const std::size_t n = x.dim(0);
  const std::size_t inner = x.numel() / std::max<std::size_t>(n, 1);
  for (auto r : rows) {
    if (r >= n) throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range");
  }
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * inner);
  const auto xv = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(xv.data() + rows[i] * inner, inner, out.data() + i * inner);
  }
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {x},
      [rows, inner](Node& self) {
        auto& g = self.parent(0).ensure_grad();
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double* src = self.grad.data() + i * inner;
          double* dst = g.data() + rows[i] * inner;
          for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
        }
      },
      "gather_rows");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return Tensor::make_result(
      Shape{}, {acc}, {x},
      [](Node& self) {
        auto& g = self.parent(0).ensure_grad();
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

namespace {

enum class Norm { kL1, kL2 };

Tensor distance_loss(const Tensor& a, const Tensor& b, const Tensor& weights, Norm norm) {
  const char* op = norm == Norm::kL1 ? "l1_loss" : "l2_loss";
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  if (weights.defined() && weights.numel() != a.numel()) {
    throw DimensionError(std::string(op) + ": weights " + shape_string(weights.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> w(av.size(), 1.0);
  if (weights.defined()) {
    const auto wv = weights.values();
    w.assign(wv.begin(), wv.end());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += w[i] * (norm == Norm::kL1 ? std::abs(d) : d * d);
  }
  return Tensor::make_result(
      Shape{}, {acc}, {a, b},
      [w = std::move(w), norm](Node& self) {
        const double g0 = self.grad[0];
        Node& pa = self.parent(0);
        Node& pb = self.parent(1);
        const bool ga = wants_grad(self, 0);
        const bool gb = wants_grad(self, 1);
        std::vector<double>* da = ga ? &pa.ensure_grad() : nullptr;
        std::vector<double>* db = gb ? &pb.ensure_grad() : nullptr;
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double d = pa.value[i] - pb.value[i];
          double dd;
          if (norm == Norm::kL1) {
            dd = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          } else {
            dd = 2.0 * d;
          }
          dd *= w[i] * g0;
          if (da) (*da)[i] += dd;
          if (db) (*db)[i] -= dd;
        }
      },
      op);
}

}  // namespace

Tensor l1_loss(const Tensor& a, const Tensor& b, const Tensor& weights) {
  return distance_loss(a, b, weights, Norm::kL1);
}

Tensor l2_loss(const Tensor& a, const Tensor& b, const Tensor& weights) {
  return distance_loss(a, b, weights, Norm::kL2);
}

Tensor bilinear_sample(const Tensor& volume, const Tensor& x, const Tensor& y) {
  if (volume.rank() != 3) {
    throw DimensionError("bilinear_sample: volume must be [C, H, W], got " +
                         shape_string(volume.shape()));
  }
  const std::size_t c = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
  if (h == 0 || w == 0) throw DimensionError("bilinear_sample: empty spatial extent");
  if (x.numel() != 1 || y.numel() != 1) {
    throw DimensionError("bilinear_sample: coordinates must be scalars");
  }
  const AxisStencil sx = normalized_stencil(x.item(), w);
  const AxisStencil sy = normalized_stencil(y.item(), h);
  const auto v = volume.values();
  std::vector<double> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = v.data() + ch * h * w;
    out[ch] = sy.w_lo * (sx.w_lo * plane[sy.lo * w + sx.lo] + sx.w_hi * plane[sy.lo * w + sx.hi]) +
              sy.w_hi * (sx.w_lo * plane[sy.hi * w + sx.lo] + sx.w_hi * plane[sy.hi * w + sx.hi]);
  }
  return Tensor::make_result(
      Shape{c}, std::move(out), {volume, x, y},
      [c, h, w, sx, sy](Node& self) {
        Node& pv = self.parent(0);
        double gx = 0.0, gy = 0.0;
        std::vector<double>* gvol = wants_grad(self, 0) ? &pv.ensure_grad() : nullptr;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double g = self.grad[ch];
          const double* plane = pv.value.data() + ch * h * w;
          const double v00 = plane[sy.lo * w + sx.lo], v01 = plane[sy.lo * w + sx.hi];
          const double v10 = plane[sy.hi * w + sx.lo], v11 = plane[sy.hi * w + sx.hi];
          gx += g * (sy.w_lo * (v01 - v00) + sy.w_hi * (v11 - v10)) * sx.slope;
          gy += g * (sx.w_lo * (v10 - v00) + sx.w_hi * (v11 - v01)) * sy.slope;
          if (gvol) {
            double* gp = gvol->data() + ch * h * w;
            gp[sy.lo * w + sx.lo] += g * sy.w_lo * sx.w_lo;
            gp[sy.lo * w + sx.hi] += g * sy.w_lo * sx.w_hi;
            gp[sy.hi * w + sx.lo] += g * sy.w_hi * sx.w_lo;
            gp[sy.hi * w + sx.hi] += g * sy.w_hi * sx.w_hi;
          }
        }
        if (wants_grad(self, 1)) self.parent(1).ensure_grad()[0] += gx;
        if (wants_grad(self, 2)) self.parent(2).ensure_grad()[0] += gy;
      },
      "bilinear_sample");
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(3) != x.dim(3)) {
    throw DimensionError("conv2d: input " + shape_string(x.shape()) + " weight " +
                         shape_string(weight.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: zero stride");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(1), kw = weight.dim(2);
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv2d: bias size");
  if (h + 2 * pad < kh || w + 2 * pad < kw) throw DimensionError("conv2d: kernel larger than input");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  std::vector<double> out(b * ho * wo * cout, 0.0);
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* o = out.data() + ((n * ho + oy) * wo + ox) * cout;
        if (bias.defined()) {
          for (std::size_t co = 0; co < cout; ++co) o[co] = bias.values()[co];
        }
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* in = xv + ((n * h + iy) * w + ix) * cin;
            for (std::size_t co = 0; co < cout; ++co) {
              const double* wk = wv + ((co * kh + ky) * kw + kx) * cin;
              double acc = 0.0;
              for (std::size_t ci = 0; ci < cin; ++ci) acc += in[ci] * wk[ci];
              o[co] += acc;
            }
          }
        }
      }
    }
  }
  return Tensor::make_result(
      Shape{b, ho, wo, cout}, std::move(out), {x, weight, bias},
      [=](Node& self) {
        Node& px = self.parent(0);
        Node& pw = self.parent(1);
        std::vector<double>* gx = wants_grad(self, 0) ? &px.ensure_grad() : nullptr;
        std::vector<double>* gw = wants_grad(self, 1) ? &pw.ensure_grad() : nullptr;
        std::vector<double>* gb = wants_grad(self, 2) ? &self.parent(2).ensure_grad() : nullptr;
        for (std::size_t n = 0; n < b; ++n) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const double* g = self.grad.data() + ((n * ho + oy) * wo + ox) * cout;
              if (gb) {
                for (std::size_t co = 0; co < cout; ++co) (*gb)[co] += g[co];
              }
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t in_off = ((n * h + iy) * w + ix) * cin;
                  for (std::size_t co = 0; co < cout; ++co) {
                    const double go = g[co];
                    if (go == 0.0) continue;
                    const std::size_t w_off = ((co * kh + ky) * kw + kx) * cin;
                    if (gx) {
                      for (std::size_t ci = 0; ci < cin; ++ci)
                        (*gx)[in_off + ci] += go * pw.value[w_off + ci];
                    }
                    if (gw) {
                      for (std::size_t ci = 0; ci < cin; ++ci)
                        (*gw)[w_off + ci] += go * px.value[in_off + ci];
                    }
                  }
                }
              }
            }
          }
        }
      },
      "conv2d");
}

}  // namespace snipper::ops
