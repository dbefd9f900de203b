#pragma once

#include "proxvi/models.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace proxvi {

struct GradientEstimate {
  Vector gradient;
  Vector sample_variance;  // unbiased per-coordinate variance of the S terms
  int sample_count = 0;
  std::vector<int> minibatch;
  std::uint64_t seed = 0;
};

/// Score-function estimate of (d/dm, d/dv) E[f~(z)] for scalar z ~ N(m, v):
/// per-sample terms f~(z) grad log q(z | m, v), averaged over S draws.
/// gradient has 2 coordinates (m then v); deterministic given seed.
GradientEstimate score_function_estimate(
    const std::function<double(double)>& f_tilde, double m, double v, int S,
    std::uint64_t seed, std::uint64_t stream = 0);

struct MinibatchOptions {
  int minibatch_size = 1;
  int sample_count = 0;  // 0 selects exact quadrature per-example gradients
  bool with_replacement = true;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Mini-batch stochastic gradient of f w.r.t. (m, diag V): selects M example
/// indices, scales per-example gradients by N/M. Gradient has 2N coordinates
/// (m block, then variance block).
GradientEstimate minibatch_gradient(const ModelSplit& model,
                                    const GaussianVariational& q,
                                    const MinibatchOptions& opts);

}  // namespace proxvi
