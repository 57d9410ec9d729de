#pragma once

#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "mimo/error.hpp"

namespace mimo {

enum class AttentionKind { encoder_self, decoder_self, decoder_cross };

inline const char* to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::encoder_self: return "encoder_self";
    case AttentionKind::decoder_self: return "decoder_self";
    case AttentionKind::decoder_cross: return "decoder_cross";
  }
  return "?";
}

inline AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "encoder_self") return AttentionKind::encoder_self;
  if (s == "decoder_self") return AttentionKind::decoder_self;
  if (s == "decoder_cross") return AttentionKind::decoder_cross;
  throw UsageError("unknown attention kind '" + s + "'");
}

/// One head's temporal attention map (rows = queries, cols = keys), averaged
/// over the batch. Summed-head aggregates carry head == kSummedHeads.
struct AttentionRecord {
  static constexpr std::size_t kSummedHeads = std::numeric_limits<std::size_t>::max();

  AttentionKind kind;
  std::size_t layer;
  std::size_t head;
  std::size_t rows, cols;
  std::vector<double> weights;

  double at(std::size_t q, std::size_t k) const { return weights[q * cols + k]; }
  bool summed() const { return head == kSummedHeads; }
};

struct AttentionFilter {
  std::optional<AttentionKind> kind;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> head;
};

inline std::vector<AttentionRecord> extract_attention(const std::vector<AttentionRecord>& records,
                                                      const AttentionFilter& filter = {}) {
  if (records.empty()) throw Error("extract_attention: no attention was recorded");
  std::vector<AttentionRecord> out;
  for (const auto& r : records) {
    if (filter.kind && r.kind != *filter.kind) continue;
    if (filter.layer && r.layer != *filter.layer) continue;
    if (filter.head && r.head != *filter.head) continue;
    out.push_back(r);
  }
  return out;
}

// Elementwise sum over heads, one map per (kind, layer).
inline std::vector<AttentionRecord> sum_heads(const std::vector<AttentionRecord>& records) {
  std::map<std::tuple<int, std::size_t>, AttentionRecord> acc;
  for (const auto& r : records) {
    if (r.summed()) continue;
    auto key = std::make_tuple(static_cast<int>(r.kind), r.layer);
    auto it = acc.find(key);
    if (it == acc.end()) {
      AttentionRecord s = r;
      s.head = AttentionRecord::kSummedHeads;
      acc.emplace(key, std::move(s));
    } else {
      for (std::size_t i = 0; i < r.weights.size(); ++i) it->second.weights[i] += r.weights[i];
    }
  }
  std::vector<AttentionRecord> out;
  for (auto& [_, r] : acc) out.push_back(std::move(r));
  return out;
}

// CSV: kind,layer,head,query,key,weight at full double precision. Summed
// maps print "sum" in the head column.
inline void write_attention_csv(std::ostream& os, const std::vector<AttentionRecord>& records) {
  os << "kind,layer,head,query,key,weight\n";
  char buf[64];
  for (const auto& r : records)
    for (std::size_t q = 0; q < r.rows; ++q)
      for (std::size_t k = 0; k < r.cols; ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", r.at(q, k));
        os << to_string(r.kind) << ',' << r.layer << ',' << (r.summed() ? std::string("sum") : std::to_string(r.head))
           << ',' << q << ',' << k << ',' << buf << '\n';
      }
}

}  // namespace mimo
