#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mimo/data/dataset.hpp"
#include "mimo/data/idx.hpp"
#include "mimo/json_util.hpp"

namespace mimo {

enum class SpriteKind { disk, square, cross, digit };

inline const char* to_string(SpriteKind k) {
  switch (k) {
    case SpriteKind::disk: return "disk";
    case SpriteKind::square: return "square";
    case SpriteKind::cross: return "cross";
    case SpriteKind::digit: return "digit";
  }
  return "?";
}

inline SpriteKind sprite_kind_from_string(const std::string& s) {
  for (auto k : {SpriteKind::disk, SpriteKind::square, SpriteKind::cross, SpriteKind::digit})
    if (s == to_string(k)) return k;
  throw UsageError("unknown sprite kind '" + s + "' (disk, square, cross, digit)");
}

struct SpriteWorldConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t num_sprites = 2;
  SpriteKind kind = SpriteKind::disk;
  std::size_t sprite_size = 5;
  double speed_min = 0.5;  // pixels per frame
  double speed_max = 1.5;
  std::size_t seq_len = 10;
  std::size_t num_sequences = 256;
  std::uint64_t seed = 0;
  bool bounce = true;

  void validate() const {
    if (sprite_size == 0 || sprite_size >= height || sprite_size >= width)
      throw UsageError("sprites: sprite size " + std::to_string(sprite_size) + " must be in [1, canvas) for a " +
                       std::to_string(height) + "x" + std::to_string(width) + " canvas");
    if (!(speed_min >= 0.0 && speed_max >= speed_min)) throw UsageError("sprites: need 0 <= speed_min <= speed_max");
    if (seq_len < 2) throw UsageError("sprites: sequences need at least 2 frames");
    if (num_sprites < 1) throw UsageError("sprites: need at least one sprite");
  }

  bool operator==(const SpriteWorldConfig&) const = default;
};

inline Json to_json(const SpriteWorldConfig& c) {
  return Json{{"height", c.height},       {"width", c.width},         {"num_sprites", c.num_sprites},
              {"kind", to_string(c.kind)}, {"sprite_size", c.sprite_size}, {"speed_min", c.speed_min},
              {"speed_max", c.speed_max}, {"seq_len", c.seq_len},     {"num_sequences", c.num_sequences},
              {"seed", c.seed},           {"bounce", c.bounce}};
}

inline SpriteWorldConfig sprite_config_from_json(const Json& j, SpriteWorldConfig c = {}) {
  JsonReader r(j, "sprites");
  std::string kind = to_string(c.kind);
  r.get("height", c.height)
      .get("width", c.width)
      .get("num_sprites", c.num_sprites)
      .get("kind", kind)
      .get("sprite_size", c.sprite_size)
      .get("speed_min", c.speed_min)
      .get("speed_max", c.speed_max)
      .get("seq_len", c.seq_len)
      .get("num_sequences", c.num_sequences)
      .get("seed", c.seed)
      .get("bounce", c.bounce)
      .finish();
  c.kind = sprite_kind_from_string(kind);
  return c;
}

/// Top-left position and velocity in pixels; `bitmap` selects a bank entry.
struct SpriteState {
  double y = 0, x = 0, vy = 0, vx = 0;
  std::size_t bitmap = 0;
};

/// size x size intensity mask of one sprite.
inline std::vector<double> sprite_mask(SpriteKind kind, std::size_t size, const SpriteBank* bank = nullptr,
                                       std::size_t index = 0) {
  std::vector<double> m(size * size, 0.0);
  const double c = (static_cast<double>(size) - 1.0) / 2.0, r = static_cast<double>(size) / 2.0;
  const std::size_t arm = std::max<std::size_t>(1, size / 3), lo = (size - arm) / 2;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      double v = 0.0;
      switch (kind) {
        case SpriteKind::disk: {
          const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
          v = di * di + dj * dj <= r * r ? 1.0 : 0.0;
          break;
        }
        case SpriteKind::square: v = 1.0; break;
        case SpriteKind::cross: v = (i >= lo && i < lo + arm) || (j >= lo && j < lo + arm) ? 1.0 : 0.0; break;
        case SpriteKind::digit: {
          if (!bank || bank->bitmaps.empty()) throw UsageError("sprites: digit sprites need an IDX sprite bank");
          const auto& bm = bank->bitmaps.at(index % bank->bitmaps.size());
          const std::size_t si = (2 * i + 1) * bank->rows / (2 * size), sj = (2 * j + 1) * bank->cols / (2 * size);
          v = bm[si * bank->cols + sj];
          break;
        }
      }
      m[i * size + j] = v;
    }
  return m;
}

/// Renders sprites at their nearest-pixel positions with max compositing.
inline void render_sprites(const SpriteWorldConfig& c, const std::vector<SpriteState>& sprites,
                           const std::vector<std::vector<double>>& masks, std::span<double> frame) {
  std::fill(frame.begin(), frame.end(), 0.0);
  const auto H = static_cast<long>(c.height), W = static_cast<long>(c.width), S = static_cast<long>(c.sprite_size);
  for (std::size_t s = 0; s < sprites.size(); ++s) {
    const long y0 = std::lround(sprites[s].y), x0 = std::lround(sprites[s].x);
    for (long i = 0; i < S; ++i)
      for (long j = 0; j < S; ++j) {
        const long y = y0 + i, x = x0 + j;
        if (y < 0 || y >= H || x < 0 || x >= W) continue;
        double& px = frame[static_cast<std::size_t>(y * W + x)];
        px = std::max(px, masks[s][static_cast<std::size_t>(i * S + j)]);
      }
  }
}

/// Linear motion; with bounce, a wall contact clamps the position and flips
/// that velocity component in the same tick.
inline void advance_sprites(const SpriteWorldConfig& c, std::vector<SpriteState>& sprites) {
  const double ymax = static_cast<double>(c.height - c.sprite_size);
  const double xmax = static_cast<double>(c.width - c.sprite_size);
  for (auto& s : sprites) {
    s.y += s.vy;
    s.x += s.vx;
    if (!c.bounce) continue;
    if (s.y < 0.0 || s.y > ymax) {
      s.y = std::clamp(s.y, 0.0, ymax);
      s.vy = -s.vy;
    }
    if (s.x < 0.0 || s.x > xmax) {
      s.x = std::clamp(s.x, 0.0, xmax);
      s.vx = -s.vx;
    }
  }
}

/// seq_len frames [L, H, W] starting from explicit sprite states.
inline std::vector<double> simulate_sprites(const SpriteWorldConfig& c, std::vector<SpriteState> sprites,
                                            const SpriteBank* bank = nullptr) {
  std::vector<std::vector<double>> masks;
  for (const auto& s : sprites) masks.push_back(sprite_mask(c.kind, c.sprite_size, bank, s.bitmap));
  const std::size_t fs = c.height * c.width;
  std::vector<double> out(c.seq_len * fs);
  for (std::size_t t = 0; t < c.seq_len; ++t) {
    render_sprites(c, sprites, masks, std::span<double>(out).subspan(t * fs, fs));
    advance_sprites(c, sprites);
  }
  for (auto& v : out) v = static_cast<float>(v);  // storage precision, so files round-trip exactly
  return out;
}

/// Random start states for one sequence.
inline std::vector<SpriteState> random_sprites(const SpriteWorldConfig& c, Rng& rng, const SpriteBank* bank) {
  std::vector<SpriteState> sprites(c.num_sprites);
  for (auto& s : sprites) {
    s.y = rng.uniform(0.0, static_cast<double>(c.height - c.sprite_size));
    s.x = rng.uniform(0.0, static_cast<double>(c.width - c.sprite_size));
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(c.speed_min, c.speed_max);
    s.vy = speed * std::sin(angle);
    s.vx = speed * std::cos(angle);
    if (c.kind == SpriteKind::digit && bank && !bank->bitmaps.empty()) s.bitmap = rng.uniform_int(bank->bitmaps.size());
  }
  return sprites;
}

/// Moving-sprite videos; sequence i draws from derive_seed(seed, i), so any
/// sequence can be regenerated on its own.
inline Dataset generate_sprites(const SpriteWorldConfig& c, const SpriteBank* bank = nullptr) {
  c.validate();
  if (c.kind == SpriteKind::digit && (!bank || bank->bitmaps.empty()))
    throw UsageError("sprites: digit sprites need an IDX sprite bank");
  Dataset ds;
  ds.N = c.num_sequences;
  ds.L = c.seq_len;
  ds.C = 1;
  ds.H = c.height;
  ds.W = c.width;
  ds.values.reserve(ds.N * ds.sequence_size());
  for (std::size_t i = 0; i < ds.N; ++i) {
    Rng rng(derive_seed(c.seed, i));
    auto seq = simulate_sprites(c, random_sprites(c, rng, bank), bank);
    ds.values.insert(ds.values.end(), seq.begin(), seq.end());
  }
  ds.provenance = "sprites:" + fnv1a_hex(to_json(c).dump());
  return ds;
}

}  // namespace mimo
