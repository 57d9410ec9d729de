#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "mimo/error.hpp"

namespace mimo {

/// Grayscale sprite bitmaps (values in [0, 1]), e.g. MNIST digits.
struct SpriteBank {
  std::size_t rows = 0, cols = 0;
  std::vector<std::vector<double>> bitmaps;
  std::vector<std::uint8_t> labels;  // empty when no label file was given
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(what + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

inline std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

/// Reads an IDX image file (magic 0x00000803, big-endian N, rows, cols, u8
/// pixels) and, optionally, its IDX label file (magic 0x00000801, N, u8).
inline SpriteBank read_idx(std::istream& images, std::istream* labels = nullptr, const std::string& name = "idx") {
  SpriteBank bank;
  if (const auto magic = detail::read_be32(images, name); magic != 0x00000803)
    throw FormatError(name + ": bad image magic " + std::to_string(magic) + " (expected 2051)");
  const std::size_t n = detail::read_be32(images, name);
  bank.rows = detail::read_be32(images, name);
  bank.cols = detail::read_be32(images, name);
  const std::size_t px = bank.rows * bank.cols;
  if (n * px > (std::size_t{1} << 32)) throw FormatError(name + ": implausible IDX extents");
  std::vector<unsigned char> raw(n * px);
  if (!images.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw FormatError(name + ": truncated image payload (expected " + std::to_string(raw.size()) + " bytes)");
  bank.bitmaps.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    bank.bitmaps[i].resize(px);
    for (std::size_t k = 0; k < px; ++k) bank.bitmaps[i][k] = raw[i * px + k] / 255.0;
  }
  if (labels) {
    if (const auto magic = detail::read_be32(*labels, name + " labels"); magic != 0x00000801)
      throw FormatError(name + ": bad label magic " + std::to_string(magic) + " (expected 2049)");
    const std::size_t nl = detail::read_be32(*labels, name + " labels");
    if (nl != n)
      throw FormatError(name + ": " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");
    bank.labels.resize(nl);
    if (!labels->read(reinterpret_cast<char*>(bank.labels.data()), static_cast<std::streamsize>(nl)))
      throw FormatError(name + ": truncated label payload");
  }
  return bank;
}

inline SpriteBank read_idx(const std::string& images_path, const std::optional<std::string>& labels_path = {}) {
  std::ifstream images = detail::open_binary(images_path);
  if (!labels_path) return read_idx(images, nullptr, images_path);
  std::ifstream labels = detail::open_binary(*labels_path);
  return read_idx(images, &labels, images_path);
}

}  // namespace mimo
