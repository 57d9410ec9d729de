#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "mimo/baselines.hpp"
#include "mimo/data.hpp"

using namespace mimo;

namespace {

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 8) & 0xff),
          static_cast<char>(v & 0xff)};
}

std::string idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, unsigned char fill) {
  return be32(0x803) + be32(n) + be32(rows) + be32(cols) + std::string(n * rows * cols, static_cast<char>(fill));
}

double frame_mass(const Dataset& ds, std::size_t seq, std::size_t t) {
  double s = 0;
  for (std::size_t i = 0; i < ds.frame_size(); ++i) s += ds.values[seq * ds.sequence_size() + t * ds.frame_size() + i];
  return s;
}

}  // namespace

TEST(Sprites, StaticWorldRepeatsFrames) {
  SpriteWorldConfig c;
  c.speed_min = c.speed_max = 0.0;
  c.num_sequences = 3;
  Dataset ds = generate_sprites(c);
  for (std::size_t s = 0; s < ds.N; ++s)
    for (std::size_t t = 1; t < ds.L; ++t)
      for (std::size_t i = 0; i < ds.frame_size(); ++i)
        ASSERT_EQ(ds.values[s * ds.sequence_size() + t * ds.frame_size() + i],
                  ds.values[s * ds.sequence_size() + i]);
}

TEST(Sprites, DeterministicAndInRange) {
  SpriteWorldConfig c;
  c.num_sequences = 20;
  c.seed = 7;
  Dataset a = generate_sprites(c), b = generate_sprites(c);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.provenance, b.provenance);
  for (double v : a.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  c.seed = 8;
  EXPECT_NE(generate_sprites(c).values, a.values);
}

TEST(Sprites, UnitVelocityShiftsByOnePixel) {
  SpriteWorldConfig c;
  c.kind = SpriteKind::square;
  c.sprite_size = 3;
  c.num_sprites = 1;
  c.seq_len = 6;
  auto frames = simulate_sprites(c, {{5.0, 2.0, 0.0, 1.0}});
  const std::size_t W = c.width, fs = c.height * W;
  for (std::size_t t = 0; t + 1 < c.seq_len; ++t)
    for (std::size_t y = 0; y < c.height; ++y)
      for (std::size_t x = 1; x < W; ++x) ASSERT_EQ(frames[(t + 1) * fs + y * W + x], frames[t * fs + y * W + x - 1]);
  double mass = 0;
  for (std::size_t i = 0; i < fs; ++i) mass += frames[i];
  EXPECT_EQ(mass, 9.0);
}

TEST(Sprites, BounceKeepsSpritesOnCanvas) {
  SpriteWorldConfig c;
  c.num_sprites = 1;
  c.speed_min = 1.0;
  c.speed_max = 2.0;
  c.seq_len = 40;
  c.num_sequences = 10;
  Dataset ds = generate_sprites(c);
  for (std::size_t s = 0; s < ds.N; ++s)
    for (std::size_t t = 1; t < ds.L; ++t) EXPECT_EQ(frame_mass(ds, s, t), frame_mass(ds, s, 0));

  c.bounce = false;
  Dataset gone = generate_sprites(c);
  EXPECT_EQ(frame_mass(gone, 0, c.seq_len - 1), 0.0);
}

TEST(Sprites, ShapesAndErrors) {
  auto disk = sprite_mask(SpriteKind::disk, 5);
  EXPECT_EQ(disk[0], 0.0);
  EXPECT_EQ(disk[12], 1.0);
  auto cross = sprite_mask(SpriteKind::cross, 5);
  EXPECT_EQ(cross[0], 0.0);
  EXPECT_EQ(cross[2], 1.0);
  EXPECT_EQ(cross[10], 1.0);
  SpriteWorldConfig c;
  c.sprite_size = 16;
  EXPECT_THROW(generate_sprites(c), UsageError);
  c = {};
  c.kind = SpriteKind::digit;
  EXPECT_THROW(generate_sprites(c), UsageError);
  EXPECT_THROW(sprite_kind_from_string("blob"), UsageError);
  EXPECT_EQ(sprite_config_from_json(to_json(c)), c);
}

TEST(Idx, ParsesHeaderAndNormalises) {
  std::string bytes = idx_images(2, 28, 28, 255);
  bytes[16] = 0;
  std::istringstream in(bytes);
  SpriteBank bank = read_idx(in);
  ASSERT_EQ(bank.bitmaps.size(), 2u);
  EXPECT_EQ(bank.rows, 28u);
  EXPECT_EQ(bank.bitmaps[0][0], 0.0);
  EXPECT_EQ(bank.bitmaps[0][1], 1.0);

  std::istringstream img(idx_images(3, 4, 4, 128)), lab(be32(0x801) + be32(3) + std::string("\x01\x02\x03"));
  SpriteBank labelled = read_idx(img, &lab);
  EXPECT_EQ(labelled.labels, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(Idx, CorruptInputsAreRejected) {
  std::string full = idx_images(2, 28, 28, 1);
  std::istringstream truncated(full.substr(0, full.size() - 1));
  EXPECT_THROW(read_idx(truncated), FormatError);
  std::string bad = full;
  bad[3] = 0x01;
  std::istringstream bad_magic(bad);
  EXPECT_THROW(read_idx(bad_magic), FormatError);
  std::istringstream img(full), lab(be32(0x801) + be32(3) + std::string(3, '\0'));
  EXPECT_THROW(read_idx(img, &lab), FormatError);
  try {
    read_idx(std::string("/nonexistent/train-images"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/train-images"), std::string::npos);
  }
}

TEST(Idx, DigitSpritesFromBank) {
  std::istringstream in(idx_images(2, 28, 28, 200));
  SpriteBank bank = read_idx(in);
  SpriteWorldConfig c;
  c.kind = SpriteKind::digit;
  c.height = c.width = 32;
  c.sprite_size = 14;
  c.num_sequences = 2;
  Dataset ds = generate_sprites(c, &bank);
  EXPECT_GT(frame_mass(ds, 0, 0), 0.0);
  for (double v : ds.values) EXPECT_LE(v, 1.0);
}

TEST(Vseq, RoundTripIsExact) {
  SpriteWorldConfig c;
  c.num_sequences = 4;
  Dataset ds = generate_sprites(c);
  ds.values[5] = 0.123456789;  // not representable in float32
  std::stringstream buf;
  write_vseq(ds, buf);
  Dataset back = read_vseq(buf);
  EXPECT_EQ(back.N, 4u);
  EXPECT_EQ(back.L, 10u);
  EXPECT_EQ(back.values.size(), ds.values.size());
  for (std::size_t i = 0; i < ds.values.size(); ++i)
    EXPECT_EQ(back.values[i], static_cast<double>(static_cast<float>(ds.values[i])));
  std::stringstream again;
  write_vseq(back, again);
  EXPECT_EQ(read_vseq(again).values, back.values);
}

TEST(Vseq, HeaderArithmetic) {
  Dataset ds;
  ds.N = 100;
  ds.L = 20;
  ds.C = 1;
  ds.H = ds.W = 64;
  ds.values.assign(100 * 20 * 64 * 64, 0.5);
  std::ostringstream out;
  write_vseq(ds, out);
  EXPECT_EQ(out.str().size(), 25u + 100u * 20 * 1 * 64 * 64 * 4);
  EXPECT_EQ(out.str().substr(0, 5), std::string("VSEQ\x01"));
}

TEST(Vseq, FormatErrorsAndClamping) {
  std::istringstream empty("");
  EXPECT_THROW(read_vseq(empty), FormatError);
  std::istringstream junk("NOPE-not-a-file-at-all-xxxxxxxx");
  EXPECT_THROW(read_vseq(junk), FormatError);

  Dataset ds;
  ds.N = 1;
  ds.L = 2;
  ds.H = ds.W = 2;
  ds.values = {0, 0.5, 1, 1.5, -0.25, 0.5, 0.5, 0.5};
  std::stringstream buf;
  write_vseq(ds, buf);
  std::string bytes = buf.str();
  std::istringstream short_payload(bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(read_vseq(short_payload), FormatError);
  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  std::istringstream v2(wrong_version);
  EXPECT_THROW(read_vseq(v2), FormatError);

  std::istringstream ok(bytes);
  std::ostringstream warnings;
  Dataset back = read_vseq(ok, "probe", &warnings);
  EXPECT_EQ(back.values[3], 1.0);
  EXPECT_EQ(back.values[4], 0.0);
  EXPECT_NE(warnings.str().find("clamped 2"), std::string::npos);
}

TEST(Split, DisjointExhaustiveDeterministic) {
  SpriteWorldConfig c;
  c.num_sequences = 10;
  Dataset ds = generate_sprites(c);
  auto [train, eval] = split(ds, 0.5, 3);
  EXPECT_EQ(train.N, 5u);
  EXPECT_EQ(eval.N, 5u);
  std::set<std::size_t> all(train.source_index.begin(), train.source_index.end());
  all.insert(eval.source_index.begin(), eval.source_index.end());
  EXPECT_EQ(all.size(), 10u);
  auto [train2, eval2] = split(ds, 0.5, 3);
  EXPECT_EQ(train2.source_index, train.source_index);
  EXPECT_EQ(train.values.size(), 5 * ds.sequence_size());
  const std::size_t first = train.source_index[0];
  for (std::size_t i = 0; i < ds.sequence_size(); ++i)
    ASSERT_EQ(train.values[i], ds.values[first * ds.sequence_size() + i]);
  EXPECT_THROW(split(ds, 1.0, 0), UsageError);
  EXPECT_THROW(split(ds.subset({0}, "one"), 0.5, 0), UsageError);
}

TEST(CopyLastOnSprites, ErrorGrowsWithHorizon) {
  SpriteWorldConfig c;
  c.num_sequences = 512;
  c.seq_len = 10;
  Dataset ds = generate_sprites(c);
  Tensor inputs = ds.frames(0, 5), truth = ds.frames(5, 5);
  RolloutCurve curve = framewise_error_curve(copy_last(inputs, 5), truth, "copy_last");
  for (std::size_t k = 1; k < curve.values.size(); ++k) EXPECT_GE(curve.values[k], curve.values[k - 1]);
}
