#pragma once

#include <algorithm>
#include <cmath>

#include "mimo/model/model.hpp"

namespace mimo {

/// Finite-difference dependency probe: shifts every channel of timestep
/// query `query` by `delta` and returns the largest absolute change in
/// predicted frame `frame`. Exactly zero iff that frame cannot see the query.
inline double query_dependency(const Tensor& frames, const Parameters& params, const ModelConfig& c,
                               std::size_t query, std::size_t frame, double delta = 1e-4) {
  if (query >= c.out_frames() || frame >= c.out_frames()) throw ShapeError("query_dependency: index out of range");
  NoGradGuard no_grad;
  Parameters shifted = params.clone();
  auto table = shifted.at("embed.weight").mutable_data();
  for (std::size_t ch = 0; ch < c.channels; ++ch) table[(c.m + query) * c.channels + ch] += delta;

  const Tensor base = model_forward(frames, params, c).prediction;
  const Tensor moved = model_forward(frames, shifted, c).prediction;
  const std::size_t per_frame = c.channels_in * c.height * c.width;
  const std::size_t B = frames.dim(0), n = c.out_frames();
  double worst = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < per_frame; ++i) {
      const std::size_t idx = (b * n + frame) * per_frame + i;
      worst = std::max(worst, std::abs(moved[idx] - base[idx]));
    }
  return worst;
}

}  // namespace mimo
