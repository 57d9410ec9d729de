#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mimo/model/attention.hpp"
#include "mimo/model/config.hpp"
#include "mimo/model/parameters.hpp"
#include "mimo/numerics/conv.hpp"
#include "mimo/numerics/ops.hpp"

namespace mimo {

// Model features are laid out [B, L, C, H, W] throughout.

namespace detail {

inline Tensor frames_to_images(const Tensor& x) {
  const Shape& s = x.shape();
  return reshape(x, {s[0] * s[1], s[2], s[3], s[4]});
}

inline Tensor images_to_frames(const Tensor& x, std::size_t batch) {
  const Shape& s = x.shape();
  return reshape(x, {batch, s[0] / batch, s[1], s[2], s[3]});
}

inline Tensor conv_layer(const Tensor& x, const Parameters& p, const std::string& prefix, std::size_t padding) {
  return conv2d(x, p.at(prefix + ".weight"), p.at(prefix + ".bias"), 1, padding);
}

inline Tensor frame_norm(const Tensor& x, const Parameters& p, const std::string& prefix, double eps) {
  return layer_norm(x, 3, p.at(prefix + ".gain"), p.at(prefix + ".offset"), eps);
}

}  // namespace detail

/// Space-to-depth by the patch size, then two same-padded 3x3 conv + SiLU
/// layers, applied identically to every frame.
/// frames [B, L, C0, H0, W0] -> [B, L, C, H0/p, W0/p].
inline Tensor patch_stem(const Tensor& frames, const Parameters& p, const ModelConfig& c) {
  if (frames.rank() != 5 || frames.dim(2) != c.channels_in || frames.dim(3) != c.height || frames.dim(4) != c.width)
    throw ShapeError("patch_stem: frames " + shape_str(frames.shape()) + " do not match config [B,L," +
                     std::to_string(c.channels_in) + "," + std::to_string(c.height) + "," + std::to_string(c.width) +
                     "]");
  const std::size_t B = frames.dim(0);
  Tensor x = space_to_depth(detail::frames_to_images(frames), c.patch);
  x = silu(detail::conv_layer(x, p, "stem.conv1", 1));
  x = silu(detail::conv_layer(x, p, "stem.conv2", 1));
  return detail::images_to_frames(x, B);
}

/// Embedding table rows broadcast over the feature grid: [m+n, C, H, W].
/// Rows [0, m) are input positions, rows [m, m+n) the timestep queries.
inline Tensor temporal_encoding(const ModelConfig& c, const Parameters& p) {
  const Tensor& table = p.at("embed.weight");
  if (table.shape() != Shape{c.m + c.n, c.channels})
    throw ShapeError("temporal_encoding: embedding table has shape " + shape_str(table.shape()));
  return expand_trailing(table, {c.grid_h(), c.grid_w()});
}

// Dimension whose square root divides the attention scores.
inline std::size_t attention_dk(const ModelConfig& c, std::size_t H, std::size_t W) {
  return c.dk_mode == DkMode::per_head ? (c.channels / c.heads) * H * W : c.channels * H * W;
}

/// Convolutional multi-head attention over the temporal axis.
///
/// Q, K, V come from 1x1 convolutions; each head owns a contiguous group of
/// C/h channels and attends with the flattened (C/h)*H*W feature of each
/// frame. No mask is applied. Per-head maps (averaged over the batch) are
/// appended to `records` when it is non-null.
inline Tensor mha2d(const Tensor& q_in, const Tensor& kv_in, const Parameters& p, const std::string& prefix,
                    const ModelConfig& c, AttentionKind kind, std::size_t layer,
                    std::vector<AttentionRecord>* records = nullptr) {
  const std::size_t B = q_in.dim(0), Lq = q_in.dim(1), Lk = kv_in.dim(1);
  const std::size_t C = q_in.dim(2), H = q_in.dim(3), W = q_in.dim(4);
  if (kv_in.dim(0) != B || kv_in.dim(2) != C || kv_in.dim(3) != H || kv_in.dim(4) != W)
    throw ShapeError("mha2d: query " + shape_str(q_in.shape()) + " and key/value " + shape_str(kv_in.shape()) +
                     " features differ");
  const std::size_t h = c.heads;
  if (C % h) throw ShapeError("mha2d: channels not divisible by heads");
  const std::size_t d = (C / h) * H * W;

  // [B, L, C, H, W] -> [B, h, L, d]
  auto project = [&](const Tensor& in, const char* which, std::size_t L) {
    Tensor y = detail::conv_layer(detail::frames_to_images(in), p, prefix + "." + which, 0);
    return permute(reshape(y, {B, L, h, d}), {0, 2, 1, 3});
  };
  Tensor Q = project(q_in, "q", Lq);
  Tensor K = project(kv_in, "k", Lk);
  Tensor V = project(kv_in, "v", Lk);

  const double dk = static_cast<double>(attention_dk(c, H, W));
  Tensor scores = scale(matmul(Q, transpose_last(K)), 1.0 / std::sqrt(dk));
  Tensor attn = softmax(scores, 3);  // [B, h, Lq, Lk]

  if (records) {
    auto a = attn.data();
    for (std::size_t head = 0; head < h; ++head) {
      AttentionRecord r{kind, layer, head, Lq, Lk, std::vector<double>(Lq * Lk, 0.0)};
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < Lq * Lk; ++i) r.weights[i] += a[(b * h + head) * Lq * Lk + i];
      for (auto& v : r.weights) v /= static_cast<double>(B);
      records->push_back(std::move(r));
    }
  }

  Tensor out = permute(matmul(attn, V), {0, 2, 1, 3});  // [B, Lq, h, d]
  out = reshape(out, {B * Lq, C, H, W});
  out = detail::conv_layer(out, p, prefix + ".o", 0);
  return detail::images_to_frames(out, B);
}

/// Feed-forward sublayer with residual and post-norm: LN(x + block(x)).
///
/// With use_lsb the block is two (3x3x3 conv over (L, H, W) -> per-frame
/// layer norm -> SiLU) layers; otherwise it is a per-frame 1x1 conv, SiLU,
/// 1x1 conv.
inline Tensor ffn3d(const Tensor& x, const Parameters& p, const std::string& prefix, const std::string& norm_prefix,
                    const ModelConfig& c) {
  const std::size_t B = x.dim(0);
  Tensor y;
  if (c.use_lsb) {
    auto layer = [&](const Tensor& in, const std::string& conv, const std::string& norm) {
      Tensor v = permute(in, {0, 2, 1, 3, 4});  // [B, C, L, H, W]
      v = conv3d(v, p.at(conv + ".weight"), p.at(conv + ".bias"), 1);
      v = permute(v, {0, 2, 1, 3, 4});
      return silu(detail::frame_norm(v, p, norm, c.ln_eps));
    };
    y = layer(x, prefix + ".conv1", prefix + ".norm1");
    y = layer(y, prefix + ".conv2", prefix + ".norm2");
  } else {
    Tensor v = detail::frames_to_images(x);
    v = silu(detail::conv_layer(v, p, prefix + ".fc1", 0));
    v = detail::conv_layer(v, p, prefix + ".fc2", 0);
    y = detail::images_to_frames(v, B);
  }
  return detail::frame_norm(add(x, y), p, norm_prefix, c.ln_eps);
}

/// 3x3 conv to C0*p*p channels, depth-to-space, sigmoid.
/// feat [B, L, C, H, W] -> frames [B, L, C0, H0, W0] in (0, 1).
inline Tensor output_head(const Tensor& feat, const Parameters& p, const ModelConfig& c) {
  const std::size_t B = feat.dim(0);
  Tensor x = detail::conv_layer(detail::frames_to_images(feat), p, "head.conv", 1);
  x = depth_to_space(x, c.patch);
  return detail::images_to_frames(sigmoid(x), B);
}

}  // namespace mimo
