#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mimo/metrics/metrics.hpp"
#include "mimo/model/model.hpp"

namespace mimo {

/// Repeats the last observed frame n times.
/// frames [m, C, H, W] -> [n, C, H, W], or [B, m, C, H, W] -> [B, n, C, H, W].
inline Tensor copy_last(const Tensor& frames, std::size_t n) {
  if (frames.rank() != 4 && frames.rank() != 5) throw ShapeError("copy_last: expected [m,C,H,W] or [B,m,C,H,W]");
  const std::size_t t_axis = frames.rank() - 4;
  const std::size_t m = frames.dim(t_axis);
  if (m < 1) throw ShapeError("copy_last: no input frames");
  const std::size_t B = t_axis == 0 ? 1 : frames.dim(0);
  const std::size_t fs = frames.numel() / (B * m);
  Shape out_shape = frames.shape();
  out_shape[t_axis] = n;
  std::vector<double> out(B * n * fs);
  auto in = frames.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < n; ++t)
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((b * m + m - 1) * fs), fs,
                  out.begin() + static_cast<std::ptrdiff_t>((b * n + t) * fs));
  return Tensor(out_shape, std::move(out));
}

enum class RolloutMode {
  first_frame,  // keep one predicted frame per pass (single-output recursion)
  block,        // keep every frame of each pass (block recursion)
};

inline const char* to_string(RolloutMode m) { return m == RolloutMode::first_frame ? "first_frame" : "block"; }

/// Recursive rollout: predict, append the kept frames to a sliding
/// conditioning window of at most m frames, repeat until total_n frames
/// exist. frames [B, L, C0, H0, W0] with 1 <= L; only the last m are used.
inline Tensor miso_rollout(const Parameters& p, const ModelConfig& c, const Tensor& frames, std::size_t total_n,
                           RolloutMode mode = RolloutMode::first_frame) {
  if (total_n < 1) throw UsageError("rollout: total_n must be >= 1");
  if (frames.rank() != 5 || frames.dim(1) < 1) throw ShapeError("rollout: frames must be [B,L,C0,H0,W0] with L >= 1");
  NoGradGuard no_grad;
  const std::size_t L = frames.dim(1);
  Tensor window = L > c.m ? slice(frames, 1, L - c.m, L) : frames;
  std::vector<Tensor> kept;
  std::size_t produced = 0;
  while (produced < total_n) {
    Tensor pred = model_forward(window, p, c).prediction;
    const std::size_t per_pass = mode == RolloutMode::first_frame ? 1 : pred.dim(1);
    const std::size_t take = std::min(per_pass, total_n - produced);
    Tensor chunk = slice(pred, 1, 0, take);
    kept.push_back(chunk);
    produced += take;
    if (produced < total_n) {
      Tensor grown = concat({window, chunk}, 1);
      const std::size_t G = grown.dim(1);
      window = G > c.m ? slice(grown, 1, G - c.m, G) : grown;
    }
  }
  return kept.size() == 1 ? kept.front() : concat(kept, 1);
}

// --------------------------------------------------------------- curves ----

enum class CurveMetric { mse_pixel, mse_frame, mae_pixel, mae_frame };

inline const char* to_string(CurveMetric m) {
  switch (m) {
    case CurveMetric::mse_pixel: return "mse_pixel";
    case CurveMetric::mse_frame: return "mse";
    case CurveMetric::mae_pixel: return "mae_pixel";
    case CurveMetric::mae_frame: return "mae";
  }
  return "?";
}

struct RolloutCurve {
  std::string strategy;  // mimo, miso, copy_last, ar1, ...
  std::vector<double> values;  // values[k] belongs to horizon step k+1
};

/// Per-step error averaged over the batch. pred/truth [B, n, C, H, W] or [n, C, H, W].
inline RolloutCurve framewise_error_curve(const Tensor& pred, const Tensor& truth, std::string strategy,
                                          CurveMetric metric = CurveMetric::mse_pixel) {
  if (pred.shape() != truth.shape())
    throw ShapeError("framewise_error_curve: prediction " + shape_str(pred.shape()) + " vs truth " +
                     shape_str(truth.shape()));
  if (pred.rank() != 4 && pred.rank() != 5) throw ShapeError("framewise_error_curve: expected [B,]n,C,H,W");
  const std::size_t t_axis = pred.rank() - 4;
  const std::size_t n = pred.dim(t_axis), B = t_axis == 0 ? 1 : pred.dim(0);
  const std::size_t fs = pred.numel() / (B * n);
  RolloutCurve curve{std::move(strategy), std::vector<double>(n, 0.0)};
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      auto a = pred.data().subspan((b * n + t) * fs, fs), g = truth.data().subspan((b * n + t) * fs, fs);
      const bool squared = metric == CurveMetric::mse_pixel || metric == CurveMetric::mse_frame;
      double v = squared ? frame_sse(a, g) : frame_sae(a, g);
      if (metric == CurveMetric::mse_pixel || metric == CurveMetric::mae_pixel) v /= static_cast<double>(fs);
      acc += v;
    }
    curve.values[t] = acc / static_cast<double>(B);
  }
  return curve;
}

namespace detail {
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace detail

inline void write_curve_csv(std::ostream& os, const RolloutCurve& curve) {
  os << "step,value\n";
  for (std::size_t k = 0; k < curve.values.size(); ++k) os << k + 1 << ',' << detail::fmt_g(curve.values[k]) << '\n';
}

/// Long format: one row per horizon step per strategy.
inline void write_curves_csv(std::ostream& os, const std::vector<RolloutCurve>& curves) {
  os << "strategy,step,value\n";
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.values.size(); ++k)
      os << c.strategy << ',' << k + 1 << ',' << detail::fmt_g(c.values[k]) << '\n';
}

/// Wide, gnuplot-friendly format: a step column plus one column per strategy.
inline void write_curves_wide_csv(std::ostream& os, const std::vector<RolloutCurve>& curves) {
  os << "step";
  for (const auto& c : curves) {
    if (c.values.size() != curves.front().values.size()) throw ShapeError("wide curve CSV: curves differ in length");
    os << ',' << c.strategy;
  }
  os << '\n';
  const std::size_t n = curves.empty() ? 0 : curves.front().values.size();
  for (std::size_t k = 0; k < n; ++k) {
    os << k + 1;
    for (const auto& c : curves) os << ',' << detail::fmt_g(c.values[k]);
    os << '\n';
  }
}

}  // namespace mimo
