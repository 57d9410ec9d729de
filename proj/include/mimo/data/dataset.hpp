#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mimo/error.hpp"
#include "mimo/numerics/rng.hpp"
#include "mimo/numerics/tensor.hpp"

namespace mimo {

/// N sequences of L frames of [C, H, W] values in [0, 1], stored row-major
/// [seq][frame][channel][row][col].
struct Dataset {
  std::size_t N = 0, L = 0, C = 1, H = 0, W = 0;
  std::vector<double> values;
  std::string split = "all";
  std::string provenance;             // config hash + seed of whatever produced it
  std::vector<std::size_t> source_index;  // row in the unsplit dataset

  std::size_t frame_size() const { return C * H * W; }
  std::size_t sequence_size() const { return L * frame_size(); }

  void check() const {
    if (values.size() != N * sequence_size())
      throw FormatError("dataset: " + std::to_string(values.size()) + " values do not match header " +
                        std::to_string(N) + "x" + std::to_string(L) + "x" + std::to_string(C) + "x" +
                        std::to_string(H) + "x" + std::to_string(W));
  }

  /// Frames [begin, begin+count) of the listed sequences as [B, count, C, H, W].
  Tensor batch(const std::vector<std::size_t>& seqs, std::size_t begin, std::size_t count) const {
    if (begin + count > L)
      throw ShapeError("dataset: frames [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                       ") exceed sequence length " + std::to_string(L));
    const std::size_t fs = frame_size();
    std::vector<double> out;
    out.reserve(seqs.size() * count * fs);
    for (auto s : seqs) {
      if (s >= N) throw ShapeError("dataset: sequence index out of range");
      const auto first = values.begin() + static_cast<std::ptrdiff_t>(s * sequence_size() + begin * fs);
      out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(count * fs));
    }
    return Tensor({seqs.size(), count, C, H, W}, std::move(out));
  }

  /// Every sequence, frames [begin, begin+count).
  Tensor frames(std::size_t begin, std::size_t count) const {
    std::vector<std::size_t> all(N);
    for (std::size_t i = 0; i < N; ++i) all[i] = i;
    return batch(all, begin, count);
  }

  Dataset subset(const std::vector<std::size_t>& seqs, std::string tag) const {
    Dataset d = *this;
    d.N = seqs.size();
    d.split = std::move(tag);
    d.values.clear();
    d.source_index.clear();
    for (auto s : seqs) {
      const auto first = values.begin() + static_cast<std::ptrdiff_t>(s * sequence_size());
      d.values.insert(d.values.end(), first, first + static_cast<std::ptrdiff_t>(sequence_size()));
      d.source_index.push_back(source_index.empty() ? s : source_index[s]);
    }
    return d;
  }
};

/// Seeded shuffle split at sequence granularity; both parts are non-empty.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw UsageError("split: train_frac must be in (0, 1)");
  if (ds.N < 2) throw UsageError("split: need at least 2 sequences, have " + std::to_string(ds.N));
  std::vector<std::size_t> order(ds.N);
  for (std::size_t i = 0; i < ds.N; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = ds.N - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
  auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(ds.N)));
  n_train = std::clamp<std::size_t>(n_train, 1, ds.N - 1);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> eval(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(eval.begin(), eval.end());
  return {ds.subset(train, "train"), ds.subset(eval, "eval")};
}

}  // namespace mimo
