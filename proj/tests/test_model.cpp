#include <gtest/gtest.h>

#include <numeric>

#include "mimo/model.hpp"
#include "mimo/model/probes.hpp"
#include "test_util.hpp"

using namespace mimo;
using namespace mimo::testing;

namespace {

// Reorders axis 1 of a [B, L, ...] tensor: out[:, i] = x[:, perm[i]].
Tensor permute_frames(const Tensor& x, const std::vector<std::size_t>& perm) {
  NoGradGuard g;
  std::vector<Tensor> parts;
  for (auto i : perm) parts.push_back(slice(x, 1, i, i + 1));
  return concat(parts, 1);
}

void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Config, ValidationAndJson) {
  ModelConfig c = ModelConfig::toy();
  EXPECT_NO_THROW(c.validate());
  ModelConfig bad = c;
  bad.height = 18;
  EXPECT_THROW(bad.validate(), UsageError);
  bad = c;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), UsageError);

  c.decode_mode = DecodeMode::miso;
  c.dk_mode = DkMode::full_frame;
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
  EXPECT_THROW(model_config_from_json(Json{{"bogus", 1}}), UsageError);
  EXPECT_THROW(model_config_from_json(Json{{"decode_mode", "sideways"}}), UsageError);

  ModelConfig full;
  EXPECT_EQ(full.channels, 128u);
  EXPECT_EQ(full.heads, 8u);
  EXPECT_EQ(full.enc_blocks, 6u);
  EXPECT_EQ(full.dec_blocks, 10u);
}

TEST(Parameters, GoldenCountForToyConfig) {
  // Hand count for the toy config (C0=1, p=4, C=32, 4x4 grid, m=n=5, 2/2 blocks):
  //   stem 4640 + 9248, embedding 320, encoder block 5248 + 58432,
  //   decoder block 2*5248 + 58432, head 4624.
  EXPECT_EQ(parameter_count(ModelConfig::toy()), 284048u);
  Rng rng(1);
  Parameters p = init_parameters(ModelConfig::toy(), rng);
  EXPECT_EQ(p.scalar_count(), 284048u);
  EXPECT_NO_THROW(check_parameters(p, ModelConfig::toy()));
}

TEST(Parameters, VariantsDropTheirTensors) {
  ModelConfig c = ModelConfig::toy();
  const std::size_t full = parameter_count(c);
  c.use_decoder_self_attn = false;
  EXPECT_EQ(full - parameter_count(c), 2u * 5248u);
  c = ModelConfig::toy();
  c.use_2dmha = false;
  Rng rng(2);
  Parameters p = init_parameters(c, rng);
  for (const auto& [name, _] : p) EXPECT_EQ(name.find("attn"), std::string::npos) << name;
  Parameters q = init_parameters(ModelConfig::toy(), rng);
  EXPECT_THROW(check_parameters(q, c), ShapeError);
}

TEST(Parameters, InitialisationRules) {
  Rng rng(3);
  ModelConfig c = tiny_config();
  Parameters p = init_parameters(c, rng);
  for (double v : p.at("stem.conv1.bias").data()) EXPECT_EQ(v, 0.0);
  for (double v : p.at("enc.0.ffn_norm.gain").data()) EXPECT_EQ(v, 1.0);
  for (double v : p.at("enc.0.ffn_norm.offset").data()) EXPECT_EQ(v, 0.0);
  const double bound = std::sqrt(6.0 / (8.0 * 27 + 8.0 * 27));
  for (double v : p.at("enc.0.ffn.conv1.weight").data()) EXPECT_LE(std::abs(v), bound);
}

TEST(PatchStem, Shapes) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(4);
  Parameters p = init_parameters(c, rng);
  Tensor y = patch_stem(random_frames(2, 5, c, 1), p, c);
  EXPECT_EQ(y.shape(), (Shape{2, 5, 32, 4, 4}));
  ModelConfig other = c;
  other.height = 20;
  EXPECT_THROW(patch_stem(random_frames(1, 2, other, 1), p, c), ShapeError);
}

TEST(PatchStem, IdentityConfiguration) {
  ModelConfig c = tiny_config();
  c.patch = 1;
  Rng rng(5);
  Parameters p = init_parameters(c, rng);
  set_identity_conv(p.at("stem.conv1.weight"));
  set_identity_conv(p.at("stem.conv2.weight"));
  Tensor x = random_frames(1, 2, c, 9);
  Tensor y = patch_stem(x, p, c);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 8, 8, 8}));
  // Channel 0 carries the input through both SiLU layers; the rest are zero.
  Tensor expect = silu(silu(x));
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t ch = 0; ch < 8; ++ch)
      for (std::size_t i = 0; i < 64; ++i) {
        const double v = y[(f * 8 + ch) * 64 + i];
        EXPECT_EQ(v, ch == 0 ? expect[f * 64 + i] : 0.0);
      }
}

TEST(OutputHead, RangeShapeAndRoundTripWithStem) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(6);
  Parameters p = init_parameters(c, rng);
  Tensor feat = random_features({2, 5, 32, 4, 4}, 3);
  Tensor y = output_head(feat, p, c);
  EXPECT_EQ(y.shape(), (Shape{2, 5, 1, 16, 16}));
  for (double v : y.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(output_head(patch_stem(random_frames(1, 3, c, 2), p, c), p, c).shape(), (Shape{1, 3, 1, 16, 16}));
}

TEST(TemporalEncoding, BroadcastAndDistinctRows) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(7);
  Parameters p = init_parameters(c, rng);
  Tensor t = temporal_encoding(c, p);
  ASSERT_EQ(t.shape(), (Shape{10, 32, 4, 4}));
  const Tensor& table = p.at("embed.weight");
  for (std::size_t step = 0; step < 10; ++step)
    for (std::size_t ch = 0; ch < 32; ++ch)
      for (std::size_t s = 0; s < 16; ++s) EXPECT_EQ(t[(step * 32 + ch) * 16 + s], table[step * 32 + ch]);
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t b = a + 1; b < 10; ++b) {
      bool differ = false;
      for (std::size_t ch = 0; ch < 32; ++ch) differ = differ || table[a * 32 + ch] != table[b * 32 + ch];
      EXPECT_TRUE(differ);
    }
}

TEST(Mha2d, PerHeadDk) {
  ModelConfig c;
  c.channels = 128;
  c.heads = 8;
  EXPECT_EQ(attention_dk(c, 16, 16), 4096u);
  c.dk_mode = DkMode::full_frame;
  EXPECT_EQ(attention_dk(c, 16, 16), 32768u);
}

TEST(Mha2d, SingleKeyGivesOutputProjectionOfValue) {
  ModelConfig c = tiny_config();
  Rng rng(8);
  Parameters p = init_parameters(c, rng);
  Tensor q = random_features({1, 3, 8, 4, 4}, 1);
  Tensor kv = random_features({1, 1, 8, 4, 4}, 2);
  std::vector<AttentionRecord> rec;
  Tensor out = mha2d(q, kv, p, "enc.0.attn", c, AttentionKind::encoder_self, 0, &rec);
  ASSERT_EQ(rec.size(), 2u);
  for (const auto& r : rec)
    for (double w : r.weights) EXPECT_EQ(w, 1.0);
  Tensor kv_img = reshape(kv, {1, 8, 4, 4});
  Tensor v = conv2d(kv_img, p.at("enc.0.attn.v.weight"), p.at("enc.0.attn.v.bias"));
  Tensor expect = conv2d(v, p.at("enc.0.attn.o.weight"), p.at("enc.0.attn.o.bias"));
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < expect.numel(); ++i) EXPECT_NEAR(out[f * expect.numel() + i], expect[i], 1e-12);
}

TEST(Mha2d, KeyPermutationInvarianceAndQueryEquivariance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig c = tiny_config();
    Rng rng(seed);
    Parameters p = init_parameters(c, rng);
    Tensor q = random_features({2, 4, 8, 4, 4}, seed + 100);
    Tensor kv = random_features({2, 4, 8, 4, 4}, seed + 200);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<AttentionRecord> rec;
    Tensor base = mha2d(q, kv, p, "dec.0.cross_attn", c, AttentionKind::decoder_cross, 0, &rec);
    for (const auto& r : rec)
      for (std::size_t row = 0; row < r.rows; ++row) {
        double total = 0.0;
        for (std::size_t k = 0; k < r.cols; ++k) total += r.at(row, k);
        EXPECT_NEAR(total, 1.0, 1e-6);
      }
    Tensor key_perm = mha2d(q, permute_frames(kv, perm), p, "dec.0.cross_attn", c, AttentionKind::decoder_cross, 0);
    expect_near_all(key_perm, base, 1e-9);
    Tensor query_perm = mha2d(permute_frames(q, perm), kv, p, "dec.0.cross_attn", c, AttentionKind::decoder_cross, 0);
    expect_near_all(query_perm, permute_frames(base, perm), 1e-9);
  }
}

TEST(Ffn3d, ShapeAndZeroWeightDegenerateCase) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(9);
  Parameters p = init_parameters(c, rng);
  Tensor x = random_features({2, 5, 32, 4, 4}, 5);
  EXPECT_EQ(ffn3d(x, p, "enc.0.ffn", "enc.0.ffn_norm", c).shape(), x.shape());

  for (const char* w : {"enc.0.ffn.conv1.weight", "enc.0.ffn.conv2.weight"})
    for (auto& v : p.at(w).mutable_data()) v = 0.0;
  Tensor y = ffn3d(x, p, "enc.0.ffn", "enc.0.ffn_norm", c);
  Tensor ln = layer_norm(x, 3, p.at("enc.0.ffn_norm.gain"), p.at("enc.0.ffn_norm.offset"));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], ln[i]);
}

TEST(Ffn3d, TemporalReceptiveField) {
  ModelConfig c = tiny_config();
  Rng rng(10);
  Parameters p = init_parameters(c, rng);
  Tensor x = random_features({1, 7, 8, 4, 4}, 6);
  Tensor base = ffn3d(x, p, "enc.0.ffn", "enc.0.ffn_norm", c);
  auto perturbed_frame = [&](std::size_t t) {
    Tensor y = x.clone();
    for (std::size_t i = 0; i < 128; ++i) y.mutable_data()[t * 128 + i] += 0.5;
    return ffn3d(y, p, "enc.0.ffn", "enc.0.ffn_norm", c);
  };
  auto frame_changed = [&](const Tensor& out, std::size_t t) {
    for (std::size_t i = 0; i < 128; ++i)
      if (out[t * 128 + i] != base[t * 128 + i]) return true;
    return false;
  };
  const std::size_t t = 3;
  EXPECT_TRUE(frame_changed(perturbed_frame(t + 1), t));
  EXPECT_TRUE(frame_changed(perturbed_frame(t - 1), t));
  EXPECT_FALSE(frame_changed(perturbed_frame(t + 3), t));
  EXPECT_FALSE(frame_changed(perturbed_frame(t - 3), t));
}

TEST(Encoder, ZeroBlocksAndFlagSemantics) {
  ModelConfig c = tiny_config();
  c.enc_blocks = 0;
  Rng rng(11);
  Parameters p = init_parameters(c, rng);
  Tensor h0 = random_features({1, 3, 8, 4, 4}, 7);
  EXPECT_TRUE(same_bits(encoder_forward(h0, p, c), h0));

  c = tiny_config();
  c.use_2dmha = false;
  Parameters q = init_parameters(c, rng);
  std::vector<AttentionRecord> rec;
  encoder_forward(h0, q, c, &rec);
  EXPECT_TRUE(rec.empty());
}

TEST(Encoder, PureAttentionEncoderIsTimeEquivariant) {
  ModelConfig c = tiny_config();
  c.use_lsb = false;
  Rng rng(12);
  Parameters p = init_parameters(c, rng);
  set_identity_conv(p.at("enc.0.attn.o.weight"));
  Tensor h0 = random_features({1, 4, 8, 4, 4}, 8);
  const std::vector<std::size_t> perm{3, 1, 0, 2};
  Tensor a = encoder_forward(permute_frames(h0, perm), p, c);
  Tensor b = permute_frames(encoder_forward(h0, p, c), perm);
  expect_near_all(a, b, 1e-9);
}

TEST(Decoder, ShapesAndSingleQuery) {
  ModelConfig c = tiny_config();
  c.n = 1;
  Rng rng(13);
  Parameters p = init_parameters(c, rng);
  Tensor memory = random_features({2, 3, 8, 4, 4}, 9);
  Tensor queries = random_features({2, 1, 8, 4, 4}, 10);
  std::vector<AttentionRecord> rec;
  auto layers = decoder_forward(queries, memory, p, c, &rec);
  ASSERT_EQ(layers.size(), 1u);
  auto self = extract_attention(rec, {AttentionKind::decoder_self, {}, {}});
  ASSERT_EQ(self.size(), 2u);
  for (const auto& r : self) {
    EXPECT_EQ(r.rows, 1u);
    EXPECT_EQ(r.cols, 1u);
    EXPECT_EQ(r.weights[0], 1.0);
  }
  for (std::size_t m : {1u, 2u, 5u}) {
    ModelConfig cm = tiny_config();
    cm.m = m;
    cm.dec_blocks = 2;
    Parameters pm = init_parameters(cm, rng);
    auto out = decoder_forward(random_features({2, 4, 8, 4, 4}, 11), random_features({2, m, 8, 4, 4}, 12), pm, cm);
    ASSERT_EQ(out.size(), 2u);
    for (const auto& f : out) EXPECT_EQ(f.shape(), (Shape{2, 4, 8, 4, 4}));
  }
}

TEST(Decoder, WithoutAttentionKeepsQueryFrames) {
  ModelConfig c = tiny_config();
  c.use_2dmha = false;
  Rng rng(14);
  Parameters p = init_parameters(c, rng);
  auto layers = decoder_forward(random_features({1, 4, 8, 4, 4}, 1), random_features({1, 3, 8, 4, 4}, 2), p, c);
  ASSERT_EQ(layers.size(), 1u);
  EXPECT_EQ(layers[0].shape(), (Shape{1, 4, 8, 4, 4}));
}

TEST(Decoder, FutureFrameDependency) {
  ModelConfig c = tiny_config();
  c.n = 5;
  Rng rng(15);
  Parameters p = init_parameters(c, rng);
  Tensor frames = random_frames(1, 3, c, 3);
  // Frames 0 and 4 are farther apart than the 3D-conv receptive field.
  EXPECT_GT(query_dependency(frames, p, c, 0, 4), 1e-8);

  c.use_decoder_self_attn = false;
  Rng rng2(15);
  Parameters f = init_parameters(c, rng2);
  EXPECT_EQ(query_dependency(frames, f, c, 0, 4), 0.0);
  EXPECT_GT(query_dependency(frames, f, c, 0, 0), 1e-8);
}

TEST(ModelForward, DeterminismAndShapes) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(16);
  Parameters p = init_parameters(c, rng);
  Tensor frames = random_frames(2, 5, c, 4);
  NoGradGuard g;
  auto a = model_forward(frames, p, c);
  auto b = model_forward(frames, p, c);
  EXPECT_EQ(a.prediction.shape(), (Shape{2, 5, 1, 16, 16}));
  EXPECT_TRUE(same_bits(a.prediction, b.prediction));
  EXPECT_EQ(a.layer_predictions.size(), 2u);
  EXPECT_THROW(model_forward(random_frames(2, 6, c, 4), p, c), ShapeError);
  EXPECT_EQ(model_forward(random_frames(1, 2, c, 4), p, c).prediction.shape(), (Shape{1, 5, 1, 16, 16}));
}

TEST(ModelForward, ShapeContractOverRandomConfigs) {
  Rng pick(2024);
  for (int trial = 0; trial < 12; ++trial) {
    ModelConfig c;
    c.m = 1 + pick.uniform_int(4);
    c.n = 1 + pick.uniform_int(4);
    c.channels_in = 1 + pick.uniform_int(2);
    c.patch = 1 + pick.uniform_int(2);
    c.height = c.patch * (2 + pick.uniform_int(3));
    c.width = c.patch * (2 + pick.uniform_int(3));
    c.heads = 1 + pick.uniform_int(2);
    c.channels = c.heads * (2 + pick.uniform_int(3));
    c.enc_blocks = pick.uniform_int(3);
    c.dec_blocks = pick.uniform_int(3);
    c.use_2dmha = pick.uniform_int(4) != 0;
    c.use_lsb = pick.uniform_int(2) != 0;
    c.use_decoder_self_attn = pick.uniform_int(2) != 0;
    c.deep_supervision = pick.uniform_int(2) != 0;
    c.decode_mode = pick.uniform_int(3) == 0 ? DecodeMode::miso : DecodeMode::mimo;
    Rng rng(trial);
    Parameters p = init_parameters(c, rng);
    const std::size_t B = 1 + pick.uniform_int(2);
    NoGradGuard g;
    auto r = model_forward(random_frames(B, c.m, c, trial), p, c);
    EXPECT_EQ(r.prediction.shape(), (Shape{B, c.out_frames(), c.channels_in, c.height, c.width}));
    EXPECT_EQ(r.layer_predictions.size(), c.deep_supervision ? std::max<std::size_t>(c.dec_blocks, 1) : 1u);
    EXPECT_TRUE(r.prediction.all_finite());
  }
}

TEST(ModelForward, EndToEndGradientCheck) {
  ModelConfig c;
  c.m = 2;
  c.n = 2;
  c.height = 8;
  c.width = 8;
  c.patch = 2;
  c.channels = 8;
  c.heads = 2;
  c.enc_blocks = 1;
  c.dec_blocks = 1;
  Rng rng(17);
  Parameters p = init_parameters(c, rng);
  Tensor frames = random_frames(1, 2, c, 5);
  Tensor& w = p.at("stem.conv1.weight");
  auto f = [&](const Tensor&) { return mean(model_forward(frames, p, c).prediction); };
  EXPECT_LT(grad_check(f, w, 1e-5).max_rel_error, 1e-4);
}

TEST(EncoderBlock, GradientCheckOnSmallInput) {
  ModelConfig c = tiny_config();  // C=8, 4x4 grid
  Rng rng(18);
  Parameters p = init_parameters(c, rng);
  Tensor h0 = random_features({1, 2, 8, 4, 4}, 13);
  h0.set_requires_grad(true);
  Rng wr(5);
  Tensor weights = Tensor::build({1, 2, 8, 4, 4}, fill::Uniform{-1, 1}, &wr);
  auto f = [&](const Tensor& x) { return sum(mul(encoder_forward(x, p, c), weights)); };
  EXPECT_LT(grad_check(f, h0).max_rel_error, 1e-4);
}

TEST(Attention, ExtractionBookkeeping) {
  ModelConfig c = ModelConfig::toy();
  Rng rng(19);
  Parameters p = init_parameters(c, rng);
  NoGradGuard g;
  auto r = model_forward(random_frames(2, 5, c, 6), p, c, {.record_attention = true});
  auto enc = extract_attention(r.attention, {AttentionKind::encoder_self, {}, {}});
  EXPECT_EQ(enc.size(), c.enc_blocks * c.heads);
  auto cross = extract_attention(r.attention, {AttentionKind::decoder_cross, 0, {}});
  ASSERT_EQ(cross.size(), c.heads);
  EXPECT_EQ(cross[0].rows, 5u);
  EXPECT_EQ(cross[0].cols, 5u);
  for (const auto& rec : r.attention)
    for (std::size_t q = 0; q < rec.rows; ++q) {
      double total = 0;
      for (std::size_t k = 0; k < rec.cols; ++k) {
        EXPECT_GE(rec.at(q, k), 0.0);
        total += rec.at(q, k);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  auto summed = sum_heads(cross);
  ASSERT_EQ(summed.size(), 1u);
  for (std::size_t i = 0; i < 25; ++i) {
    double expect = 0;
    for (const auto& h : cross) expect += h.weights[i];
    EXPECT_EQ(summed[0].weights[i], expect);
  }
  EXPECT_THROW(extract_attention({}), Error);

  std::ostringstream csv;
  write_attention_csv(csv, summed);
  EXPECT_EQ(csv.str().substr(0, 35), "kind,layer,head,query,key,weight\nde");
}
