#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mimo/numerics/tensor.hpp"

namespace mimo {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the taped gradient of scalar f at x against central differences
/// (f(x+h e_i) - f(x-h e_i)) / 2h. Relative error per coordinate uses the
/// denominator max(|analytic|, |numeric|, 1e-8).
///
/// x must be a leaf with requires_grad set; f may close over other tensors.
/// `coords` restricts the check to a subset of coordinates (all when empty).
inline GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double h = 1e-5,
                                  const std::vector<std::size_t>& coords = {}) {
  if (!x.requires_grad()) throw ShapeError("grad_check: x must require grad");
  Tape::current().reset();
  x.zero_grad();
  Tensor y = f(x);
  if (y.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
  const double base = y.item();
  backward(y);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  if (analytic.empty()) analytic.assign(x.numel(), 0.0);

  NoGradGuard no_grad;
  if (f(x).item() != base) throw Error("grad_check: f is not deterministic");

  std::vector<std::size_t> all;
  const std::vector<std::size_t>* which = &coords;
  if (coords.empty()) {
    all.resize(x.numel());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    which = &all;
  }
  GradCheckResult result;
  auto xd = x.mutable_data();
  for (std::size_t i : *which) {
    const double v = xd[i];
    xd[i] = v + h;
    const double fp = f(x).item();
    xd[i] = v - h;
    const double fm = f(x).item();
    xd[i] = v;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel >= result.max_rel_error) result = {rel, i, analytic[i], numeric};
  }
  x.zero_grad();
  return result;
}

}  // namespace mimo
