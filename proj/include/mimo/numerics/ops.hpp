#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mimo/numerics/tensor.hpp"

namespace mimo {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

namespace detail {

inline Tensor make_output(Shape shape) { return Tensor(std::move(shape), std::vector<double>(shape_numel(shape))); }

inline Tensor make_output(Shape shape, std::vector<double> data) { return Tensor(std::move(shape), std::move(data)); }

// b broadcasts against a when b's shape equals a trailing suffix of a's shape.
inline std::size_t suffix_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin()))
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
  return shape_numel(b);
}

template <class Fwd, class Bwd>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Bwd dfdx) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  Tensor y = make_output(x.shape(), std::move(out));
  record(name, {&x}, y, [xi = x.impl(), yi = y.impl(), dfdx]() {
    if (!xi->requires_grad) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * dfdx(xi->data[i], yi->data[i]);
  });
  return y;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t period = detail::suffix_broadcast(a.shape(), b.shape(), "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % period];
  Tensor y = detail::make_output(a.shape(), std::move(out));
  detail::record("add", {&a, &b}, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), period]() {
    const auto& gy = yi->grad;
    if (ai->requires_grad) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i % period] += gy[i];
    }
  });
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t period = detail::suffix_broadcast(a.shape(), b.shape(), "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i % period];
  Tensor y = detail::make_output(a.shape(), std::move(out));
  detail::record("sub", {&a, &b}, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), period]() {
    const auto& gy = yi->grad;
    if (ai->requires_grad) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i % period] -= gy[i];
    }
  });
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t period = detail::suffix_broadcast(a.shape(), b.shape(), "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i % period];
  Tensor y = detail::make_output(a.shape(), std::move(out));
  detail::record("mul", {&a, &b}, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), period]() {
    const auto& gy = yi->grad;
    if (ai->requires_grad) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bi->data[i % period];
    }
    if (bi->requires_grad) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i % period] += gy[i] * ai->data[i];
    }
  });
  return y;
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline double sigmoid_value(double v) {
  // Split on sign so exp never overflows.
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x, [](double v) { return sigmoid_value(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary(
      "silu", x, [](double v) { return v * sigmoid_value(v); },
      [](double v, double) {
        const double s = sigmoid_value(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

// ------------------------------------------------------------------- layout

inline Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape, "reshape");
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor y = detail::make_output(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  detail::record("reshape", {&x}, y, [xi = x.impl(), yi = y.impl()]() {
    if (!xi->requires_grad) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
  });
  return y;
}

// out[i] = x[index[i]]; the backward rule scatter-adds.
inline Tensor gather(const Tensor& x, Shape shape, std::vector<std::size_t> index) {
  if (shape_numel(shape) != index.size()) throw ShapeError("gather: index/shape size mismatch");
  auto xd = x.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[index[i]];
  Tensor y = detail::make_output(std::move(shape), std::move(out));
  detail::record("gather", {&x}, y, [xi = x.impl(), yi = y.impl(), idx = std::move(index)]() {
    if (!xi->requires_grad) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += yi->grad[i];
  });
  return y;
}

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Output axis i is input axis perm[i].
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(in.size(), false);
  Shape out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= in.size() || seen[perm[i]]) throw ShapeError("permute: invalid axis order");
    seen[perm[i]] = true;
    out[i] = in[perm[i]];
  }
  const auto in_strides = row_major_strides(in);
  std::vector<std::size_t> src_stride(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) src_stride[i] = in_strides[perm[i]];
  std::vector<std::size_t> index(x.numel());
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    index[i] = src;
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++counter[d] < out[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * (out[d] - 1);
      counter[d] = 0;
    }
  }
  return gather(x, std::move(out), std::move(index));
}

// Swaps the last two axes.
inline Tensor transpose_last(const Tensor& x) {
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (perm.size() < 2) throw ShapeError("transpose_last: rank < 2");
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in = x.shape();
  if (axis >= in.size() || begin >= end || end > in[axis])
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_str(in));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= in[d];
  for (std::size_t d = axis + 1; d < in.size(); ++d) inner *= in[d];
  Shape out = in;
  out[axis] = end - begin;
  std::vector<std::size_t> index;
  index.reserve(shape_numel(out));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = begin; a < end; ++a)
      for (std::size_t i = 0; i < inner; ++i) index.push_back((o * in[axis] + a) * inner + i);
  return gather(x, std::move(out), std::move(index));
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out = parts[0].shape();
  if (axis >= out.size()) throw ShapeError("concat: axis out of range");
  out[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out.size()) throw ShapeError("concat: rank mismatch");
    out[axis] += s[axis];
    s[axis] = 0;
    Shape ref = out;
    ref[axis] = 0;
    if (s != ref) throw ShapeError("concat: extents differ off the concat axis");
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out[d];
  for (std::size_t d = axis + 1; d < out.size(); ++d) inner *= out[d];
  std::vector<double> data;
  data.reserve(shape_numel(out));
  for (std::size_t o = 0; o < outer; ++o)
    for (const auto& p : parts) {
      const std::size_t chunk = p.dim(axis) * inner;
      auto pd = p.data();
      data.insert(data.end(), pd.begin() + o * chunk, pd.begin() + (o + 1) * chunk);
    }
  Tensor y = detail::make_output(out, std::move(data));
  std::vector<std::shared_ptr<TensorImpl>> impls;
  bool any = false;
  for (const auto& p : parts) {
    impls.push_back(p.impl());
    any = any || p.requires_grad();
  }
  if (any && Tape::current().recording()) {
    TapeNode node{"concat", impls, y.impl(), [impls, yi = y.impl(), outer, inner, axis]() {
                    std::size_t off = 0;
                    for (std::size_t o = 0; o < outer; ++o)
                      for (const auto& pi : impls) {
                        const std::size_t chunk = pi->shape[axis] * inner;
                        if (pi->requires_grad) {
                          auto& g = pi->grad_buffer();
                          for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += yi->grad[off + i];
                        }
                        off += chunk;
                      }
                  }};
    Tape::current().push(std::move(node));
  }
  return y;
}

// [.., C] -> [.., C, extra...]: each value repeated over the new trailing axes.
inline Tensor expand_trailing(const Tensor& x, const Shape& extra) {
  const std::size_t rep = shape_numel(extra);
  Shape out = x.shape();
  out.insert(out.end(), extra.begin(), extra.end());
  std::vector<std::size_t> index(x.numel() * rep);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i / rep;
  return gather(x, std::move(out), std::move(index));
}

// [N, C, H, W] -> [N, C*p*p, H/p, W/p]; output channel c*p*p + dy*p + dx.
inline Tensor space_to_depth(const Tensor& x, std::size_t p) {
  if (x.rank() != 4) throw ShapeError("space_to_depth: expects [N,C,H,W]");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (p == 0 || H % p || W % p)
    throw ShapeError("space_to_depth: extents " + shape_str(x.shape()) + " not divisible by patch " +
                     std::to_string(p));
  const std::size_t h = H / p, w = W / p;
  std::vector<std::size_t> index;
  index.reserve(x.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx)
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
              index.push_back(((n * C + c) * H + i * p + dy) * W + j * p + dx);
  return gather(x, {N, C * p * p, h, w}, std::move(index));
}

// Inverse of space_to_depth.
inline Tensor depth_to_space(const Tensor& x, std::size_t p) {
  if (x.rank() != 4) throw ShapeError("depth_to_space: expects [N,C,H,W]");
  const std::size_t N = x.dim(0), Cp = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (p == 0 || Cp % (p * p)) throw ShapeError("depth_to_space: channels not divisible by p*p");
  const std::size_t C = Cp / (p * p), H = h * p, W = w * p;
  std::vector<std::size_t> index;
  index.reserve(x.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          const std::size_t ch = c * p * p + (y % p) * p + (xx % p);
          index.push_back(((n * Cp + ch) * h + y / p) * w + xx / p);
        }
  return gather(x, {N, C, H, W}, std::move(index));
}

// ------------------------------------------------------------------- matmul

// [.., p, q] x [.., q, r] -> [.., p, r]; leading axes match or broadcast from 1.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
    throw ShapeError("matmul: operands must share rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t r = a.rank();
  const std::size_t P = a.dim(r - 2), Q = a.dim(r - 1), R = b.dim(r - 1);
  if (b.dim(r - 2) != Q)
    throw ShapeError("matmul: inner extents differ in " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape lead(r - 2);
  for (std::size_t d = 0; d + 2 < r; ++d) {
    const std::size_t ea = a.dim(d), eb = b.dim(d);
    if (ea != eb && ea != 1 && eb != 1) throw ShapeError("matmul: leading extents do not broadcast");
    lead[d] = std::max(ea, eb);
  }
  const std::size_t batch = shape_numel(lead);
  // Flat operand offsets for each output batch index.
  std::vector<std::size_t> a_off(batch), b_off(batch);
  {
    std::vector<std::size_t> ctr(lead.size(), 0);
    for (std::size_t i = 0; i < batch; ++i) {
      std::size_t ia = 0, ib = 0;
      for (std::size_t d = 0; d < lead.size(); ++d) {
        ia = ia * a.dim(d) + (a.dim(d) == 1 ? 0 : ctr[d]);
        ib = ib * b.dim(d) + (b.dim(d) == 1 ? 0 : ctr[d]);
      }
      a_off[i] = ia * P * Q;
      b_off[i] = ib * Q * R;
      for (std::size_t d = lead.size(); d-- > 0;) {
        if (++ctr[d] < lead[d]) break;
        ctr[d] = 0;
      }
    }
  }
  Shape out = lead;
  out.push_back(P);
  out.push_back(R);
  std::vector<double> data(batch * P * R);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < batch; ++i) {
    MatrixMap(data.data() + i * P * R, P, R).noalias() =
        ConstMatrixMap(ad.data() + a_off[i], P, Q) * ConstMatrixMap(bd.data() + b_off[i], Q, R);
  }
  Tensor y = detail::make_output(std::move(out), std::move(data));
  detail::record("matmul", {&a, &b}, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), a_off, b_off, P, Q, R]() {
    for (std::size_t i = 0; i < a_off.size(); ++i) {
      ConstMatrixMap gy(yi->grad.data() + i * P * R, P, R);
      if (ai->requires_grad)
        MatrixMap(ai->grad_buffer().data() + a_off[i], P, Q).noalias() +=
            gy * ConstMatrixMap(bi->data.data() + b_off[i], Q, R).transpose();
      if (bi->requires_grad)
        MatrixMap(bi->grad_buffer().data() + b_off[i], Q, R).noalias() +=
            ConstMatrixMap(ai->data.data() + a_off[i], P, Q).transpose() * gy;
    }
  });
  return y;
}

// ------------------------------------------------------------------ softmax

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = xd[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xd[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(xd[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= total;
    }
  Tensor y = detail::make_output(s, std::move(out));
  detail::record("softmax", {&x}, y, [xi = x.impl(), yi = y.impl(), outer, inner, n]() {
    if (!xi->requires_grad) return;
    auto& g = xi->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += yi->grad[base + k * inner] * yi->data[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t j = base + k * inner;
          g[j] += yi->data[j] * (yi->grad[j] - dot);
        }
      }
  });
  return y;
}

// --------------------------------------------------------------- layer norm

/// Normalizes over the trailing `normalized_rank` axes, then applies the
/// elementwise affine map. gain/offset have exactly those trailing extents.
inline Tensor layer_norm(const Tensor& x, std::size_t normalized_rank, const Tensor& gain, const Tensor& offset,
                         double eps = 1e-5) {
  const Shape& s = x.shape();
  if (normalized_rank == 0 || normalized_rank > s.size()) throw ShapeError("layer_norm: bad normalized rank");
  const Shape tail(s.end() - static_cast<std::ptrdiff_t>(normalized_rank), s.end());
  if (gain.shape() != tail || offset.shape() != tail)
    throw ShapeError("layer_norm: gain/offset must have shape " + shape_str(tail));
  const std::size_t D = shape_numel(tail);
  const std::size_t outer = x.numel() / D;
  auto xd = x.data();
  auto gd = gain.data();
  auto od = offset.data();
  std::vector<double> out(xd.size()), xhat(xd.size()), rstd(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* row = xd.data() + o * D;
    double mean = 0.0;
    for (std::size_t i = 0; i < D; ++i) mean += row[i];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t i = 0; i < D; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(D);
    // Zero variance with eps = 0 maps the row to the offset.
    const double r = (var + eps) > 0.0 ? 1.0 / std::sqrt(var + eps) : 0.0;
    rstd[o] = r;
    for (std::size_t i = 0; i < D; ++i) {
      const double h = (row[i] - mean) * r;
      xhat[o * D + i] = h;
      out[o * D + i] = h * gd[i] + od[i];
    }
  }
  Tensor y = detail::make_output(s, std::move(out));
  detail::record("layer_norm", {&x, &gain, &offset}, y,
                 [xi = x.impl(), gi = gain.impl(), oi = offset.impl(), yi = y.impl(), xhat = std::move(xhat),
                  rstd = std::move(rstd), D, outer]() {
                   const auto& gy = yi->grad;
                   if (gi->requires_grad) {
                     auto& gg = gi->grad_buffer();
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t i = 0; i < D; ++i) gg[i] += gy[o * D + i] * xhat[o * D + i];
                   }
                   if (oi->requires_grad) {
                     auto& go = oi->grad_buffer();
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t i = 0; i < D; ++i) go[i] += gy[o * D + i];
                   }
                   if (!xi->requires_grad) return;
                   auto& gx = xi->grad_buffer();
                   const double inv_d = 1.0 / static_cast<double>(D);
                   for (std::size_t o = 0; o < outer; ++o) {
                     double mean_g = 0.0, mean_gx = 0.0;
                     for (std::size_t i = 0; i < D; ++i) {
                       const double gh = gy[o * D + i] * gi->data[i];
                       mean_g += gh;
                       mean_gx += gh * xhat[o * D + i];
                     }
                     mean_g *= inv_d;
                     mean_gx *= inv_d;
                     for (std::size_t i = 0; i < D; ++i) {
                       const double gh = gy[o * D + i] * gi->data[i];
                       gx[o * D + i] += rstd[o] * (gh - mean_g - xhat[o * D + i] * mean_gx);
                     }
                   }
                 });
  return y;
}

// --------------------------------------------------------------- reductions

enum class Reduction { sum, mean, sum_of_squares, sum_of_abs };

/// Reduces over `axes` (all axes when empty). Reduced axes are removed; a
/// full reduction yields shape [1]. Accumulation is sequential in index order.
inline Tensor reduce(const Tensor& x, Reduction kind, std::vector<std::size_t> axes = {}) {
  const Shape& s = x.shape();
  std::vector<bool> reduced(s.size(), axes.empty());
  for (auto a : axes) {
    if (a >= s.size()) throw ShapeError("reduce: axis out of range");
    reduced[a] = true;
  }
  Shape out;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (!reduced[d]) out.push_back(s[d]);
  if (out.empty()) out = {1};
  // Map each input element to its output slot.
  std::vector<std::size_t> slot(x.numel());
  {
    std::vector<std::size_t> ctr(s.size(), 0);
    for (std::size_t i = 0; i < slot.size(); ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < s.size(); ++d)
        if (!reduced[d]) o = o * s[d] + ctr[d];
      slot[i] = o;
      for (std::size_t d = s.size(); d-- > 0;) {
        if (++ctr[d] < s[d]) break;
        ctr[d] = 0;
      }
    }
  }
  const double count = static_cast<double>(x.numel() / shape_numel(out));
  auto xd = x.data();
  std::vector<double> data(shape_numel(out), 0.0);
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double v = xd[i];
    switch (kind) {
      case Reduction::sum:
      case Reduction::mean: data[slot[i]] += v; break;
      case Reduction::sum_of_squares: data[slot[i]] += v * v; break;
      case Reduction::sum_of_abs: data[slot[i]] += std::abs(v); break;
    }
  }
  if (kind == Reduction::mean)
    for (auto& v : data) v /= count;
  Tensor y = detail::make_output(std::move(out), std::move(data));
  detail::record("reduce", {&x}, y, [xi = x.impl(), yi = y.impl(), slot = std::move(slot), kind, count]() {
    if (!xi->requires_grad) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gy = yi->grad[slot[i]];
      const double v = xi->data[i];
      switch (kind) {
        case Reduction::sum: g[i] += gy; break;
        case Reduction::mean: g[i] += gy / count; break;
        case Reduction::sum_of_squares: g[i] += 2.0 * v * gy; break;
        case Reduction::sum_of_abs: g[i] += (v > 0 ? gy : (v < 0 ? -gy : 0.0)); break;
      }
    }
  });
  return y;
}

inline Tensor sum(const Tensor& x) { return reduce(x, Reduction::sum); }
inline Tensor mean(const Tensor& x) { return reduce(x, Reduction::mean); }

}  // namespace mimo
