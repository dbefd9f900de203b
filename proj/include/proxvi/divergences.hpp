#pragma once

#include "proxvi/models.hpp"

#include <vector>

namespace proxvi {

/// Gaussian parameter point lambda = (m, V) in the flattened coordinate chart
/// used for divergence gradients and the A6 norm.
struct GaussianParams {
  Vector mean;
  Matrix cov;

  int dim() const { return static_cast<int>(mean.size()); }
  Vector flatten() const;
};

enum class DivergenceKind {
  SquaredEuclidean,
  KlForward,   // D_KL[q_lambda || q_lambda']
  KlReverse,   // D_KL[q_lambda' || q_lambda], the Bregman form
  SymmetricKl
};

struct DivergenceSpec {
  DivergenceKind kind = DivergenceKind::KlForward;
};

struct DivergenceResult {
  double value;
  Vector grad_mean;  // d D / d m (first argument)
  Matrix grad_cov;   // d D / d V (first argument)

  Vector flatten_grad() const;
};

DivergenceResult divergence(const DivergenceSpec& spec,
                            const GaussianParams& lambda,
                            const GaussianParams& lambda_prime);

/// |SymKL - (KlForward + KlReverse)|, evaluated by independent routes.
double symmetric_kl_decomposition_check(const GaussianParams& lambda,
                                        const GaussianParams& lambda_prime);

/// Largest alpha consistent with the observed pairs:
/// min over pairs of (l - l')' grad D(l || l') / |l - l'|^2.
double estimate_alpha(
    const DivergenceSpec& spec,
    const std::vector<std::pair<GaussianParams, GaussianParams>>& iterates);

}  // namespace proxvi
