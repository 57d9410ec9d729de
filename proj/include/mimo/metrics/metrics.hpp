#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mimo/error.hpp"
#include "mimo/json_util.hpp"
#include "mimo/numerics/tensor.hpp"

namespace mimo {

// A "frame" is the trailing [C, H, W] block of a tensor; all leading axes
// enumerate frames.

namespace detail {

inline std::size_t frame_size(const Tensor& x) {
  if (x.rank() < 3) throw ShapeError("metrics: expected [..., C, H, W], got " + shape_str(x.shape()));
  const Shape& s = x.shape();
  return s[s.size() - 3] * s[s.size() - 2] * s[s.size() - 1];
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
}

}  // namespace detail

inline double frame_sse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double frame_sae(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

/// Mean over frames of the per-frame sum of squared error (frame-sum convention).
inline double mse(const Tensor& pred, const Tensor& truth) {
  detail::require_same_shape(pred, truth, "mse");
  const std::size_t fs = detail::frame_size(pred), frames = pred.numel() / fs;
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f)
    total += frame_sse(pred.data().subspan(f * fs, fs), truth.data().subspan(f * fs, fs));
  return total / static_cast<double>(frames);
}

/// Mean over frames of the per-frame sum of absolute error.
inline double mae(const Tensor& pred, const Tensor& truth) {
  detail::require_same_shape(pred, truth, "mae");
  const std::size_t fs = detail::frame_size(pred), frames = pred.numel() / fs;
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f)
    total += frame_sae(pred.data().subspan(f * fs, fs), truth.data().subspan(f * fs, fs));
  return total / static_cast<double>(frames);
}

inline double mse_per_pixel(const Tensor& pred, const Tensor& truth) {
  return mse(pred, truth) / static_cast<double>(detail::frame_size(pred));
}

inline double mae_per_pixel(const Tensor& pred, const Tensor& truth) {
  return mae(pred, truth) / static_cast<double>(detail::frame_size(pred));
}

// ---------------------------------------------------------------- SSIM ----

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Windowed SSIM of one single-channel H x W image, averaged over every
/// position where the Gaussian window fits entirely inside the image.
inline double ssim_plane(std::span<const double> a, std::span<const double> b, std::size_t H, std::size_t W,
                         const SsimOptions& o = {}) {
  const std::size_t k = o.window;
  if (H < k || W < k)
    throw ShapeError("ssim: " + std::to_string(H) + "x" + std::to_string(W) + " frame is smaller than the " +
                     std::to_string(k) + "x" + std::to_string(k) + " window");
  std::vector<double> g(k);
  double gs = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(k - 1) / 2.0;
    g[i] = std::exp(-d * d / (2.0 * o.sigma * o.sigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;

  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  double total = 0.0;
  for (std::size_t y = 0; y + k <= H; ++y)
    for (std::size_t x = 0; x + k <= W; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t dy = 0; dy < k; ++dy)
        for (std::size_t dx = 0; dx < k; ++dx) {
          const double w = g[dy] * g[dx];
          const double va = a[(y + dy) * W + x + dx], vb = b[(y + dy) * W + x + dx];
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
  return total / static_cast<double>((H - k + 1) * (W - k + 1));
}

/// SSIM of one [C, H, W] frame pair: mean of the per-channel planes.
inline double ssim(const Tensor& pred, const Tensor& truth, const SsimOptions& o = {}) {
  detail::require_same_shape(pred, truth, "ssim");
  if (pred.rank() != 3 && pred.rank() != 2) throw ShapeError("ssim: expected a [C,H,W] or [H,W] frame");
  const std::size_t H = pred.dim(pred.rank() - 2), W = pred.dim(pred.rank() - 1);
  const std::size_t C = pred.numel() / (H * W);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    total += ssim_plane(pred.data().subspan(c * H * W, H * W), truth.data().subspan(c * H * W, H * W), H, W, o);
  return total / static_cast<double>(C);
}

// ---------------------------------------------------------------- PSNR ----

inline constexpr double kPsnrCap = 100.0;

struct Psnr {
  double db = 0.0;
  bool saturated = false;
};

inline Psnr psnr(std::span<const double> pred, std::span<const double> truth, double max_val = 1.0) {
  if (pred.size() != truth.size()) throw ShapeError("psnr: frame sizes differ");
  const double m = frame_sse(pred, truth) / static_cast<double>(pred.size());
  if (m == 0.0) return {kPsnrCap, true};
  return {std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m)), false};
}

inline Psnr psnr(const Tensor& pred, const Tensor& truth, double max_val = 1.0) {
  detail::require_same_shape(pred, truth, "psnr");
  return psnr(pred.data(), truth.data(), max_val);
}

// ----------------------------------------------------------------- CSI ----

struct CsiCounts {
  std::size_t hits = 0;
  std::size_t misses = 0;        // truth positive, prediction negative
  std::size_t false_alarms = 0;  // prediction positive, truth negative

  CsiCounts& operator+=(const CsiCounts& o) {
    hits += o.hits;
    misses += o.misses;
    false_alarms += o.false_alarms;
    return *this;
  }
};

// Nothing to detect and nothing falsely detected scores 1.
inline double csi_score(const CsiCounts& c) {
  const std::size_t denom = c.hits + c.misses + c.false_alarms;
  return denom == 0 ? 1.0 : static_cast<double>(c.hits) / static_cast<double>(denom);
}

inline CsiCounts csi_counts(std::span<const double> pred, std::span<const double> truth, double threshold) {
  if (pred.size() != truth.size()) throw ShapeError("csi: sizes differ");
  CsiCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold, t = truth[i] >= threshold;
    c.hits += p && t;
    c.misses += t && !p;
    c.false_alarms += p && !t;
  }
  return c;
}

inline double csi(const Tensor& pred, const Tensor& truth, double threshold) {
  detail::require_same_shape(pred, truth, "csi");
  return csi_score(csi_counts(pred.data(), truth.data(), threshold));
}

// -------------------------------------------------------------- report ----

struct FrameMetrics {
  std::size_t sequence = 0;
  std::size_t frame = 0;
  double mse = 0;  // frame sum
  double mae = 0;  // frame sum
  double mse_pixel = 0;
  double mae_pixel = 0;
  double ssim = 0;
  double psnr = 0;
  bool psnr_saturated = false;
};

struct MetricsReport {
  std::string config_hash;
  std::size_t sequences = 0;
  std::size_t frames_per_sequence = 0;
  std::vector<FrameMetrics> per_frame;
  FrameMetrics aggregate;  // means of per_frame; sequence/frame unused
  std::vector<std::pair<double, double>> csi;  // threshold -> score, in request order
  std::size_t horizon = 0;
  bool recursive = false;

  std::size_t frames() const { return per_frame.size(); }
};

struct EvalOptions {
  std::vector<double> csi_thresholds{0.3, 0.5};
  double max_val = 1.0;
  SsimOptions ssim{};
};

/// Per-frame metrics for pred/truth of shape [N, L, C, H, W]; aggregates are
/// plain means over all N*L frames, CSI pools its counts over all frames.
inline MetricsReport evaluate(const Tensor& pred, const Tensor& truth, const EvalOptions& opt = {}) {
  detail::require_same_shape(pred, truth, "evaluate");
  if (pred.rank() != 5) throw ShapeError("evaluate: expected [N,L,C,H,W], got " + shape_str(pred.shape()));
  MetricsReport r;
  r.sequences = pred.dim(0);
  r.frames_per_sequence = pred.dim(1);
  r.horizon = pred.dim(1);
  const std::size_t C = pred.dim(2), H = pred.dim(3), W = pred.dim(4), fs = C * H * W;
  std::vector<CsiCounts> counts(opt.csi_thresholds.size());

  for (std::size_t s = 0; s < r.sequences; ++s)
    for (std::size_t f = 0; f < r.frames_per_sequence; ++f) {
      const std::size_t off = (s * r.frames_per_sequence + f) * fs;
      auto a = pred.data().subspan(off, fs), b = truth.data().subspan(off, fs);
      FrameMetrics m;
      m.sequence = s;
      m.frame = f;
      m.mse = frame_sse(a, b);
      m.mae = frame_sae(a, b);
      m.mse_pixel = m.mse / static_cast<double>(fs);
      m.mae_pixel = m.mae / static_cast<double>(fs);
      m.ssim = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        m.ssim += ssim_plane(a.subspan(c * H * W, H * W), b.subspan(c * H * W, H * W), H, W, opt.ssim);
      m.ssim /= static_cast<double>(C);
      const Psnr p = psnr(a, b, opt.max_val);
      m.psnr = p.db;
      m.psnr_saturated = p.saturated;
      for (std::size_t t = 0; t < counts.size(); ++t) counts[t] += csi_counts(a, b, opt.csi_thresholds[t]);
      r.per_frame.push_back(m);
    }

  const double n = static_cast<double>(std::max<std::size_t>(r.per_frame.size(), 1));
  for (const auto& m : r.per_frame) {
    r.aggregate.mse += m.mse;
    r.aggregate.mae += m.mae;
    r.aggregate.mse_pixel += m.mse_pixel;
    r.aggregate.mae_pixel += m.mae_pixel;
    r.aggregate.ssim += m.ssim;
    r.aggregate.psnr += m.psnr;
    r.aggregate.psnr_saturated = r.aggregate.psnr_saturated || m.psnr_saturated;
  }
  r.aggregate.mse /= n;
  r.aggregate.mae /= n;
  r.aggregate.mse_pixel /= n;
  r.aggregate.mae_pixel /= n;
  r.aggregate.ssim /= n;
  r.aggregate.psnr /= n;
  for (std::size_t t = 0; t < counts.size(); ++t) r.csi.emplace_back(opt.csi_thresholds[t], csi_score(counts[t]));
  return r;
}

inline std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

inline Json to_json(const MetricsReport& r) {
  Json j;
  j["config_hash"] = r.config_hash;
  j["frames"] = r.frames();
  j["aggregates"] = {{"mse", r.aggregate.mse},
                     {"mae", r.aggregate.mae},
                     {"ssim", r.aggregate.ssim},
                     {"psnr", r.aggregate.psnr},
                     {"mse_pixel", r.aggregate.mse_pixel},
                     {"mae_pixel", r.aggregate.mae_pixel},
                     {"psnr_saturated", r.aggregate.psnr_saturated}};
  Json frames = Json::array();
  for (const auto& m : r.per_frame)
    frames.push_back({{"sequence", m.sequence},
                      {"frame", m.frame},
                      {"mse", m.mse},
                      {"mae", m.mae},
                      {"mse_pixel", m.mse_pixel},
                      {"mae_pixel", m.mae_pixel},
                      {"ssim", m.ssim},
                      {"psnr", m.psnr},
                      {"psnr_saturated", m.psnr_saturated}});
  j["per_frame"] = std::move(frames);
  Json csi = Json::object();
  for (const auto& [t, v] : r.csi) csi[threshold_key(t)] = v;
  j["csi"] = std::move(csi);
  j["counts"] = {{"sequences", r.sequences}, {"frames_per_sequence", r.frames_per_sequence}};
  j["rollout"] = {{"horizon", r.horizon}, {"recursive", r.recursive}};
  j["conventions"] = {{"mse", "mean over frames of per-frame sum"},
                      {"mae", "mean over frames of per-frame sum"},
                      {"mse_pixel", "mean over pixels"},
                      {"mae_pixel", "mean over pixels"},
                      {"csi", "counts pooled over all frames"}};
  return j;
}

}  // namespace mimo
