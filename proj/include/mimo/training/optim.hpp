#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mimo/json_util.hpp"
#include "mimo/model/parameters.hpp"

namespace mimo {

// ---------------------------------------------------------------- Adam ----

struct OptimState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

/// Bias-corrected Adam over every parameter that requires grad; gradients
/// are cleared afterwards.
inline void adam_step(Parameters& params, OptimState& s) {
  for (auto& [name, t] : params)
    if (t.requires_grad() && !t.has_grad()) throw Error("adam_step: no gradient for trainable parameter " + name);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) continue;
    auto& m = s.m[name];
    auto& v = s.v[name];
    m.resize(t.numel(), 0.0);
    v.resize(t.numel(), 0.0);
    auto w = t.mutable_data();
    auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      w[i] -= s.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
    }
    t.zero_grad();
  }
}

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(Parameters& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : params)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [_, t] : params)
      if (t.has_grad())
        for (double& g : t.mutable_grad()) g *= f;
  }
  return norm;
}

// ----------------------------------------------------- reduce on plateau ----

struct PlateauScheduler {
  std::size_t patience = 5;
  double factor = 0.5;
  double min_lr = 1e-6;
  double threshold = 1e-6;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::size_t reductions = 0;

  /// Feeds one epoch loss; returns the learning rate to use next.
  double step(double epoch_loss, double lr) {
    if (!std::isfinite(epoch_loss)) throw NumericError("scheduler: non-finite epoch loss");
    if (epoch_loss < best - threshold) {
      best = epoch_loss;
      bad_epochs = 0;
      return lr;
    }
    if (++bad_epochs >= patience) {
      bad_epochs = 0;
      const double next = std::max(lr * factor, min_lr);
      if (next < lr) ++reductions;
      return next;
    }
    return lr;
  }
};

inline Json to_json(const PlateauScheduler& s) {
  return Json{{"patience", s.patience},
              {"factor", s.factor},
              {"min_lr", s.min_lr},
              {"threshold", s.threshold},
              {"best", std::isfinite(s.best) ? Json(s.best) : Json(nullptr)},
              {"bad_epochs", s.bad_epochs},
              {"reductions", s.reductions}};
}

inline PlateauScheduler scheduler_from_json(const Json& j) {
  PlateauScheduler s;
  JsonReader r(j, "scheduler");
  r.get("patience", s.patience)
      .get("factor", s.factor)
      .get("min_lr", s.min_lr)
      .get("threshold", s.threshold)
      .get("bad_epochs", s.bad_epochs)
      .get("reductions", s.reductions);
  if (const Json* best = r.child("best"); best && !best->is_null()) s.best = best->get<double>();
  r.finish();
  return s;
}

}  // namespace mimo
