#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>

#include "mimo/data/dataset.hpp"

namespace mimo {

// VSEQ, little-endian: "VSEQ", version byte 1, u32 N, L, C, H, W, then
// N*L*C*H*W float32 values in [seq][frame][channel][row][col] order.

inline constexpr std::uint8_t kVseqVersion = 1;

namespace detail {

inline void put_le32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t get_le32(const unsigned char* b) {
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

inline void put_f32s(std::ostream& os, std::span<const double> values) {
  std::string buf(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<char>((u >> (8 * k)) & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void get_f32s(const unsigned char* bytes, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_le32(bytes + 4 * i));
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw FormatError(std::string("vseq: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline void write_vseq(const Dataset& ds, std::ostream& os) {
  ds.check();
  os.write("VSEQ", 4);
  os.put(static_cast<char>(kVseqVersion));
  for (auto [v, what] : {std::pair{ds.N, "N"}, {ds.L, "L"}, {ds.C, "C"}, {ds.H, "H"}, {ds.W, "W"}})
    detail::put_le32(os, detail::checked_u32(v, what));
  detail::put_f32s(os, ds.values);
  if (!os) throw FormatError("vseq: write failed");
}

inline void write_vseq(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("vseq: cannot open '" + path + "' for writing");
  write_vseq(ds, os);
}

/// Values outside [0, 1] are clamped; a single warning reports how many.
inline Dataset read_vseq(std::istream& in, const std::string& name = "vseq", std::ostream* warn = &std::cerr) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = 4 + 1 + 5 * 4;
  if (bytes.empty()) throw FormatError(name + ": empty file");
  if (bytes.size() < header || bytes.compare(0, 4, "VSEQ") != 0) throw FormatError(name + ": not a VSEQ file");
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  if (b[4] != kVseqVersion) throw FormatError(name + ": unsupported VSEQ version " + std::to_string(b[4]));
  Dataset ds;
  ds.N = detail::get_le32(b + 5);
  ds.L = detail::get_le32(b + 9);
  ds.C = detail::get_le32(b + 13);
  ds.H = detail::get_le32(b + 17);
  ds.W = detail::get_le32(b + 21);
  const std::size_t count = ds.N * ds.L * ds.C * ds.H * ds.W;
  if (bytes.size() - header != count * 4)
    throw FormatError(name + ": header promises " + std::to_string(count * 4) + " payload bytes, file has " +
                      std::to_string(bytes.size() - header));
  ds.values.resize(count);
  detail::get_f32s(b + header, ds.values);
  std::size_t clamped = 0;
  for (auto& v : ds.values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
      ++clamped;
    }
  }
  if (clamped && warn) *warn << "warning: " << name << ": clamped " << clamped << " values outside [0,1]\n";
  return ds;
}

inline Dataset read_vseq(const std::string& path, std::ostream* warn = &std::cerr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("vseq: cannot open '" + path + "'");
  return read_vseq(in, path, warn);
}

}  // namespace mimo
