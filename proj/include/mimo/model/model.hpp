#pragma once

#include <string>
#include <vector>

#include "mimo/model/attention.hpp"
#include "mimo/model/config.hpp"
#include "mimo/model/layers.hpp"
#include "mimo/model/parameters.hpp"

namespace mimo {

/// Stacked encoder blocks: x <- LN(x + mha2d(x, x)); x <- ffn3d(x).
/// h0 is the stem output plus input positional encodings.
inline Tensor encoder_forward(const Tensor& h0, const Parameters& p, const ModelConfig& c,
                              std::vector<AttentionRecord>* records = nullptr) {
  Tensor x = h0;
  for (std::size_t i = 0; i < c.enc_blocks; ++i) {
    const std::string pre = "enc." + std::to_string(i);
    if (c.use_2dmha) {
      Tensor a = mha2d(x, x, p, pre + ".attn", c, AttentionKind::encoder_self, i, records);
      x = detail::frame_norm(add(x, a), p, pre + ".attn_norm", c.ln_eps);
    }
    x = ffn3d(x, p, pre + ".ffn", pre + ".ffn_norm", c);
  }
  return x;
}

/// Stacked decoder blocks fed by timestep queries [B, n_out, C, H, W].
///
/// Each block: unmasked self-attention over the queries (unless disabled),
/// cross-attention into the encoder memory, then ffn3d; every sublayer is
/// residual + post-norm. Returns the output of every block.
///
/// Without attention there is no cross path, so the memory and the queries
/// are concatenated along time and the last n_out frames are kept.
inline std::vector<Tensor> decoder_forward(const Tensor& queries, const Tensor& memory, const Parameters& p,
                                           const ModelConfig& c, std::vector<AttentionRecord>* records = nullptr) {
  std::vector<Tensor> layers;
  const std::size_t n_out = queries.dim(1);
  if (!c.use_2dmha) {
    Tensor x = concat({memory, queries}, 1);
    const std::size_t L = x.dim(1);
    for (std::size_t i = 0; i < c.dec_blocks; ++i) {
      const std::string pre = "dec." + std::to_string(i);
      x = ffn3d(x, p, pre + ".ffn", pre + ".ffn_norm", c);
      layers.push_back(slice(x, 1, L - n_out, L));
    }
    if (layers.empty()) layers.push_back(queries);
    return layers;
  }
  Tensor x = queries;
  for (std::size_t i = 0; i < c.dec_blocks; ++i) {
    const std::string pre = "dec." + std::to_string(i);
    if (c.use_decoder_self_attn) {
      Tensor a = mha2d(x, x, p, pre + ".self_attn", c, AttentionKind::decoder_self, i, records);
      x = detail::frame_norm(add(x, a), p, pre + ".self_norm", c.ln_eps);
    }
    Tensor a = mha2d(x, memory, p, pre + ".cross_attn", c, AttentionKind::decoder_cross, i, records);
    x = detail::frame_norm(add(x, a), p, pre + ".cross_norm", c.ln_eps);
    x = ffn3d(x, p, pre + ".ffn", pre + ".ffn_norm", c);
    layers.push_back(x);
  }
  if (layers.empty()) layers.push_back(queries);
  return layers;
}

struct ForwardOptions {
  bool record_attention = false;
};

struct ForwardResult {
  Tensor prediction;                      // [B, n_out, C0, H0, W0]
  std::vector<Tensor> layer_predictions;  // one per supervised decoder layer
  std::vector<AttentionRecord> attention;
};

/// One parallel pass: stem -> + input encodings -> encoder -> decoder over
/// the timestep queries -> shared output head. Nothing is fed back.
///
/// frames may hold any L in [1, m] input frames; they take the last L input
/// positions. The pass emits config.out_frames() frames (n in mimo mode, 1
/// in miso mode).
inline ForwardResult model_forward(const Tensor& frames, const Parameters& p, const ModelConfig& c,
                                   const ForwardOptions& opt = {}) {
  if (frames.rank() != 5) throw ShapeError("model_forward: frames must be [B,L,C0,H0,W0]");
  const std::size_t B = frames.dim(0), L = frames.dim(1);
  if (L < 1 || L > c.m)
    throw ShapeError("model_forward: " + std::to_string(L) + " input frames, config allows 1.." + std::to_string(c.m));

  ForwardResult result;
  std::vector<AttentionRecord>* records = opt.record_attention ? &result.attention : nullptr;

  const Tensor enc = temporal_encoding(c, p);
  Tensor h0 = add(patch_stem(frames, p, c), slice(enc, 0, c.m - L, c.m));
  Tensor memory = encoder_forward(h0, p, c, records);

  const std::size_t n_out = c.out_frames();
  const Shape qshape{B, n_out, c.channels, c.grid_h(), c.grid_w()};
  Tensor queries = add(Tensor::zeros(qshape), slice(enc, 0, c.m, c.m + n_out));
  std::vector<Tensor> layers = decoder_forward(queries, memory, p, c, records);

  if (c.deep_supervision) {
    for (const auto& f : layers) result.layer_predictions.push_back(output_head(f, p, c));
  } else {
    result.layer_predictions.push_back(output_head(layers.back(), p, c));
  }
  result.prediction = result.layer_predictions.back();
  return result;
}

}  // namespace mimo
