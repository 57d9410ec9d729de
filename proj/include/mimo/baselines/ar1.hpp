#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mimo/error.hpp"
#include "mimo/numerics/rng.hpp"

namespace mimo {

/// Linear autoregression x_{j+1} = A x_j + sigma * eps_{j+1}, eps ~ N(0, I).
struct Ar1Params {
  Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 0.5);
  double noise_std = 1.0;
  std::size_t horizon = 20;
  std::size_t trials = 100000;
  std::uint64_t seed = 0;

  static Ar1Params scalar(double a, double sigma, std::size_t horizon, std::size_t trials, std::uint64_t seed = 0) {
    return {Eigen::MatrixXd::Constant(1, 1, a), sigma, horizon, trials, seed};
  }

  double spectral_radius() const { return A.eigenvalues().cwiseAbs().maxCoeff(); }

  void validate() const {
    if (A.rows() != A.cols() || A.rows() == 0) throw UsageError("ar1: A must be a non-empty square matrix");
    if (!(noise_std >= 0.0)) throw UsageError("ar1: noise_std must be >= 0");
    if (trials < 1) throw UsageError("ar1: trials must be >= 1");
  }
};

struct Ar1Result {
  // variance[k-1] is the sample variance of the residual x_k - A^k x_0 at
  // step k, averaged over state components.
  std::vector<double> variance;
  double spectral_radius = 0.0;
};

/// Monte-Carlo residual variance of the noise-driven rollout. Each trial has
/// its own derived seed and a random start state; the residual removes the
/// deterministic part, so only the accumulated noise remains.
inline Ar1Result ar1_rollout(const Ar1Params& p) {
  p.validate();
  const Eigen::Index d = p.A.rows();
  const std::size_t K = p.horizon;
  // Welford accumulators per (step, component); trial order is fixed.
  std::vector<double> mean(K * d, 0.0), m2(K * d, 0.0);
  Eigen::VectorXd x(d), det(d), eps(d);
  for (std::size_t t = 0; t < p.trials; ++t) {
    Rng rng(derive_seed(p.seed, t));
    for (Eigen::Index i = 0; i < d; ++i) x[i] = rng.normal();
    det = x;
    for (std::size_t k = 0; k < K; ++k) {
      for (Eigen::Index i = 0; i < d; ++i) eps[i] = rng.normal();
      x = p.A * x + p.noise_std * eps;
      det = p.A * det;
      for (Eigen::Index i = 0; i < d; ++i) {
        const double r = x[i] - det[i];
        const std::size_t idx = k * d + i;
        const double delta = r - mean[idx];
        mean[idx] += delta / static_cast<double>(t + 1);
        m2[idx] += delta * (r - mean[idx]);
      }
    }
  }
  Ar1Result out;
  out.spectral_radius = p.spectral_radius();
  out.variance.assign(K, 0.0);
  if (p.trials < 2) return out;
  for (std::size_t k = 0; k < K; ++k) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) v += m2[k * d + i] / static_cast<double>(p.trials - 1);
    out.variance[k] = v / static_cast<double>(d);
  }
  return out;
}

/// sigma^2 (1 - A^{2k}) / (1 - A^2), or k sigma^2 when |A| = 1.
inline double ar1_variance_closed_form(double A, double sigma, std::size_t k) {
  const double s2 = sigma * sigma;
  if (std::abs(A) == 1.0) return static_cast<double>(k) * s2;
  return s2 * (1.0 - std::pow(A, 2.0 * static_cast<double>(k))) / (1.0 - A * A);
}

}  // namespace mimo
