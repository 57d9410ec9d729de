#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mimo/numerics/ops.hpp"

namespace mimo {

namespace detail {

// Geometry of a stride/padding convolution over up to three spatial axes.
// 2D convolutions use depth 1 with a depth-1 kernel.
struct ConvGeometry {
  std::size_t batch, cin, cout;
  std::array<std::size_t, 3> in, kernel, stride, pad, out;

  std::size_t patch() const { return cin * kernel[0] * kernel[1] * kernel[2]; }
  std::size_t out_positions() const { return out[0] * out[1] * out[2]; }
  std::size_t in_positions() const { return in[0] * in[1] * in[2]; }
  std::size_t columns() const { return batch * out_positions(); }
};

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* op) {
  if (s == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (k > in + 2 * p) throw ShapeError(std::string(op) + ": kernel larger than padded input");
  if ((in + 2 * p - k) % s != 0) throw ShapeError(std::string(op) + ": non-integer output extent");
  return (in + 2 * p - k) / s + 1;
}

// col[k][n] with k = (ci, kz, ky, kx) and n = (b, oz, oy, ox).
inline void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t N = g.columns(), op = g.out_positions();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          double* dst = col + row * N;
          for (std::size_t b = 0; b < g.batch; ++b) {
            const double* src = x + (b * g.cin + ci) * g.in_positions();
            double* d = dst + b * op;
            for (std::size_t oz = 0; oz < g.out[0]; ++oz) {
              const long iz = static_cast<long>(oz * g.stride[0] + kz) - static_cast<long>(g.pad[0]);
              for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
                const long iy = static_cast<long>(oy * g.stride[1] + ky) - static_cast<long>(g.pad[1]);
                const bool row_ok = iz >= 0 && iz < static_cast<long>(g.in[0]) && iy >= 0 &&
                                    iy < static_cast<long>(g.in[1]);
                for (std::size_t ox = 0; ox < g.out[2]; ++ox) {
                  const long ix = static_cast<long>(ox * g.stride[2] + kx) - static_cast<long>(g.pad[2]);
                  *d++ = (row_ok && ix >= 0 && ix < static_cast<long>(g.in[2]))
                             ? src[(static_cast<std::size_t>(iz) * g.in[1] + static_cast<std::size_t>(iy)) * g.in[2] +
                                   static_cast<std::size_t>(ix)]
                             : 0.0;
                }
              }
            }
          }
        }
}

// Scatter-add adjoint of im2col.
inline void col2im(const ConvGeometry& g, const double* col, double* dx) {
  const std::size_t N = g.columns(), op = g.out_positions();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          const double* srcrow = col + row * N;
          for (std::size_t b = 0; b < g.batch; ++b) {
            double* dst = dx + (b * g.cin + ci) * g.in_positions();
            const double* s = srcrow + b * op;
            for (std::size_t oz = 0; oz < g.out[0]; ++oz) {
              const long iz = static_cast<long>(oz * g.stride[0] + kz) - static_cast<long>(g.pad[0]);
              for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
                const long iy = static_cast<long>(oy * g.stride[1] + ky) - static_cast<long>(g.pad[1]);
                const bool row_ok = iz >= 0 && iz < static_cast<long>(g.in[0]) && iy >= 0 &&
                                    iy < static_cast<long>(g.in[1]);
                for (std::size_t ox = 0; ox < g.out[2]; ++ox, ++s) {
                  const long ix = static_cast<long>(ox * g.stride[2] + kx) - static_cast<long>(g.pad[2]);
                  if (row_ok && ix >= 0 && ix < static_cast<long>(g.in[2]))
                    dst[(static_cast<std::size_t>(iz) * g.in[1] + static_cast<std::size_t>(iy)) * g.in[2] +
                        static_cast<std::size_t>(ix)] += *s;
                }
              }
            }
          }
        }
}

// Cross-correlation via im2col and one GEMM over the whole batch:
// out[Cout, B*P] = W[Cout, K] * col[K, B*P].
inline Tensor conv_forward(const char* name, const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
                           const ConvGeometry& g, Shape out_shape) {
  const std::size_t K = g.patch(), N = g.columns(), P = g.out_positions();
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout))
    throw ShapeError(std::string(name) + ": bias must have shape [" + std::to_string(g.cout) + "]");

  const bool pointwise = K == g.cin && g.stride == std::array<std::size_t, 3>{1, 1, 1} &&
                         g.pad == std::array<std::size_t, 3>{0, 0, 0};
  // Every entry is written below, so skip the zero fill.
  std::shared_ptr<double[]> col(new double[K * N]);
  if (pointwise) {
    // 1x1 kernels: the column matrix is the input with batch moved inward.
    auto xd = x.data();
    for (std::size_t ci = 0; ci < g.cin; ++ci)
      for (std::size_t b = 0; b < g.batch; ++b)
        std::copy_n(xd.data() + (b * g.cin + ci) * P, P, col.get() + ci * N + b * P);
  } else {
    im2col(g, x.data().data(), col.get());
  }
  RowMatrix prod = ConstMatrixMap(w.data().data(), g.cout, K) * ConstMatrixMap(col.get(), K, N);
  std::vector<double> out(g.batch * g.cout * P);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.cout; ++co) {
      const double bv = bias ? (*bias)[co] : 0.0;
      const double* src = prod.data() + co * N + b * P;
      double* dst = out.data() + (b * g.cout + co) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bv;
    }
  Tensor y = make_output(std::move(out_shape), std::move(out));
  const Tensor* bias_ptr = bias ? &*bias : nullptr;
  record(name, {&x, &w, bias_ptr}, y,
         [xi = x.impl(), wi = w.impl(), bi = bias ? bias->impl() : nullptr, yi = y.impl(), col = std::move(col), g,
          pointwise]() {
           const std::size_t K = g.patch(), N = g.columns(), P = g.out_positions();
           // Gather dY into [Cout, B*P] to match the column layout.
           RowMatrix gy(g.cout, N);
           for (std::size_t b = 0; b < g.batch; ++b)
             for (std::size_t co = 0; co < g.cout; ++co)
               std::copy_n(yi->grad.data() + (b * g.cout + co) * P, P, gy.data() + co * N + b * P);
           if (bi && bi->requires_grad) {
             auto& gb = bi->grad_buffer();
             for (std::size_t co = 0; co < g.cout; ++co) {
               double acc = 0.0;
               for (std::size_t n = 0; n < N; ++n) acc += gy(co, n);
               gb[co] += acc;
             }
           }
           if (wi->requires_grad)
             MatrixMap(wi->grad_buffer().data(), g.cout, K).noalias() +=
                 gy * ConstMatrixMap(col.get(), K, N).transpose();
           if (xi->requires_grad) {
             RowMatrix dcol = ConstMatrixMap(wi->data.data(), g.cout, K).transpose() * gy;
             auto& gx = xi->grad_buffer();
             if (pointwise) {
               for (std::size_t ci = 0; ci < g.cin; ++ci)
                 for (std::size_t b = 0; b < g.batch; ++b) {
                   const double* s = dcol.data() + ci * N + b * P;
                   double* d = gx.data() + (b * g.cin + ci) * P;
                   for (std::size_t p = 0; p < P; ++p) d[p] += s[p];
                 }
             } else {
               col2im(g, dcol.data(), gx.data());
             }
           }
         });
  return y;
}

}  // namespace detail

/// 2D cross-correlation. x: [B, Cin, H, W], w: [Cout, Cin, kh, kw].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias = std::nullopt,
                     std::size_t stride = 1, std::size_t padding = 0) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d: expects x [B,Cin,H,W] and w [Cout,Cin,kh,kw]");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " kernel " + shape_str(w.shape()));
  detail::ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.cout = w.dim(0);
  g.in = {1, x.dim(2), x.dim(3)};
  g.kernel = {1, w.dim(2), w.dim(3)};
  g.stride = {1, stride, stride};
  g.pad = {0, padding, padding};
  g.out = {1, detail::conv_extent(g.in[1], g.kernel[1], stride, padding, "conv2d"),
           detail::conv_extent(g.in[2], g.kernel[2], stride, padding, "conv2d")};
  return detail::conv_forward("conv2d", x, w, bias, g, {g.batch, g.cout, g.out[1], g.out[2]});
}

/// 3D cross-correlation, stride 1. x: [B, Cin, D, H, W], w: [Cout, Cin, kd, kh, kw].
inline Tensor conv3d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias = std::nullopt,
                     std::size_t padding = 0) {
  if (x.rank() != 5 || w.rank() != 5) throw ShapeError("conv3d: expects x [B,Cin,D,H,W] and w [Cout,Cin,kd,kh,kw]");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv3d: channel mismatch, input " + shape_str(x.shape()) + " kernel " + shape_str(w.shape()));
  detail::ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.cout = w.dim(0);
  g.in = {x.dim(2), x.dim(3), x.dim(4)};
  g.kernel = {w.dim(2), w.dim(3), w.dim(4)};
  g.stride = {1, 1, 1};
  g.pad = {padding, padding, padding};
  for (std::size_t a = 0; a < 3; ++a) g.out[a] = detail::conv_extent(g.in[a], g.kernel[a], 1, padding, "conv3d");
  return detail::conv_forward("conv3d", x, w, bias, g, {g.batch, g.cout, g.out[0], g.out[1], g.out[2]});
}

}  // namespace mimo
