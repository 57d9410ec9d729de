#pragma once

#include <string>
#include <vector>

#include "mimo/numerics/ops.hpp"

namespace mimo {

enum class LossNorm {
  per_frame,  // divide by B * n
  raw_sum,
};

inline const char* to_string(LossNorm n) { return n == LossNorm::per_frame ? "per_frame" : "raw_sum"; }

inline LossNorm loss_norm_from_string(const std::string& s) {
  if (s == "per_frame") return LossNorm::per_frame;
  if (s == "raw_sum") return LossNorm::raw_sum;
  throw UsageError("unknown loss normalisation '" + s + "' (per_frame, raw_sum)");
}

/// Squared-L2 plus L1 of the residual per supervised layer; with deep
/// supervision the layers are averaged with equal weight, otherwise only the
/// last one counts. target [B, n, C0, H0, W0].
inline Tensor prediction_loss(const std::vector<Tensor>& layer_predictions, const Tensor& target,
                              bool deep_supervision, LossNorm norm = LossNorm::per_frame) {
  if (layer_predictions.empty()) throw ShapeError("loss: no supervised predictions");
  if (target.rank() != 5) throw ShapeError("loss: target must be [B,n,C0,H0,W0]");
  const double frames = static_cast<double>(target.dim(0) * target.dim(1));
  auto one = [&](const Tensor& pred) {
    if (pred.shape() != target.shape())
      throw ShapeError("loss: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
    Tensor r = sub(pred, target);
    Tensor l = add(reduce(r, Reduction::sum_of_squares), reduce(r, Reduction::sum_of_abs));
    return norm == LossNorm::per_frame ? scale(l, 1.0 / frames) : l;
  };
  if (!deep_supervision) return one(layer_predictions.back());
  Tensor total = one(layer_predictions.front());
  for (std::size_t i = 1; i < layer_predictions.size(); ++i) total = add(total, one(layer_predictions[i]));
  return scale(total, 1.0 / static_cast<double>(layer_predictions.size()));
}

}  // namespace mimo
