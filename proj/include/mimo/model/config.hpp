#pragma once

#include <cstddef>
#include <string>

#include "mimo/error.hpp"
#include "mimo/json_util.hpp"

namespace mimo {

enum class DecodeMode { mimo, miso };

// Attention temperature: per_head scales by sqrt((C/h)*H*W), the length of
// the vectors actually dotted; full_frame scales by sqrt(C*H*W).
enum class DkMode { per_head, full_frame };

/// Architecture hyperparameters. Member defaults are the full-size Moving
/// MNIST setting (C=128, 8 heads, 6 encoder / 10 decoder blocks); toy()
/// returns the desk-scale setting used by the test suites.
struct ModelConfig {
  std::size_t m = 10;  // input frames
  std::size_t n = 10;  // predicted frames
  std::size_t channels_in = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t patch = 4;
  std::size_t channels = 128;
  std::size_t heads = 8;
  std::size_t enc_blocks = 6;
  std::size_t dec_blocks = 10;
  bool use_2dmha = true;
  bool use_lsb = true;
  bool use_decoder_self_attn = true;
  DecodeMode decode_mode = DecodeMode::mimo;
  bool deep_supervision = true;
  DkMode dk_mode = DkMode::per_head;
  double ln_eps = 1e-5;

  static ModelConfig toy() {
    ModelConfig c;
    c.m = 5;
    c.n = 5;
    c.height = 16;
    c.width = 16;
    c.patch = 4;
    c.channels = 32;
    c.heads = 4;
    c.enc_blocks = 2;
    c.dec_blocks = 2;
    return c;
  }

  std::size_t grid_h() const { return height / patch; }
  std::size_t grid_w() const { return width / patch; }
  std::size_t patch_channels() const { return channels_in * patch * patch; }
  // Frames emitted by one forward pass.
  std::size_t out_frames() const { return decode_mode == DecodeMode::miso ? 1 : n; }

  void validate() const {
    if (m < 1 || n < 1) throw UsageError("model: m and n must be >= 1");
    if (channels_in < 1 || height < 1 || width < 1) throw UsageError("model: frame extents must be >= 1");
    if (patch < 1 || height % patch || width % patch)
      throw UsageError("model: frame extents " + std::to_string(height) + "x" + std::to_string(width) +
                       " not divisible by patch " + std::to_string(patch));
    if (channels < 1 || heads < 1 || channels % heads)
      throw UsageError("model: channels " + std::to_string(channels) + " not divisible by heads " +
                       std::to_string(heads));
    if (!(ln_eps >= 0.0)) throw UsageError("model: ln_eps must be >= 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline const char* to_string(DecodeMode d) { return d == DecodeMode::mimo ? "mimo" : "miso"; }
inline const char* to_string(DkMode d) { return d == DkMode::per_head ? "per_head" : "full_frame"; }

inline Json to_json(const ModelConfig& c) {
  Json j;
  j["m"] = c.m;
  j["n"] = c.n;
  j["channels_in"] = c.channels_in;
  j["height"] = c.height;
  j["width"] = c.width;
  j["patch"] = c.patch;
  j["channels"] = c.channels;
  j["heads"] = c.heads;
  j["enc_blocks"] = c.enc_blocks;
  j["dec_blocks"] = c.dec_blocks;
  j["use_2dmha"] = c.use_2dmha;
  j["use_lsb"] = c.use_lsb;
  j["use_decoder_self_attn"] = c.use_decoder_self_attn;
  j["decode_mode"] = to_string(c.decode_mode);
  j["deep_supervision"] = c.deep_supervision;
  j["dk_mode"] = to_string(c.dk_mode);
  j["ln_eps"] = c.ln_eps;
  return j;
}

inline ModelConfig model_config_from_json(const Json& j, ModelConfig c = ModelConfig::toy()) {
  JsonReader r(j, "model");
  std::string decode = to_string(c.decode_mode), dk = to_string(c.dk_mode);
  r.get("m", c.m)
      .get("n", c.n)
      .get("channels_in", c.channels_in)
      .get("height", c.height)
      .get("width", c.width)
      .get("patch", c.patch)
      .get("channels", c.channels)
      .get("heads", c.heads)
      .get("enc_blocks", c.enc_blocks)
      .get("dec_blocks", c.dec_blocks)
      .get("use_2dmha", c.use_2dmha)
      .get("use_lsb", c.use_lsb)
      .get("use_decoder_self_attn", c.use_decoder_self_attn)
      .get("decode_mode", decode)
      .get("deep_supervision", c.deep_supervision)
      .get("dk_mode", dk)
      .get("ln_eps", c.ln_eps);
  r.finish();
  if (decode == "mimo")
    c.decode_mode = DecodeMode::mimo;
  else if (decode == "miso")
    c.decode_mode = DecodeMode::miso;
  else
    throw UsageError("model.decode_mode: expected mimo or miso, got '" + decode + "'");
  if (dk == "per_head")
    c.dk_mode = DkMode::per_head;
  else if (dk == "full_frame")
    c.dk_mode = DkMode::full_frame;
  else
    throw UsageError("model.dk_mode: expected per_head or full_frame, got '" + dk + "'");
  c.validate();
  return c;
}

}  // namespace mimo
