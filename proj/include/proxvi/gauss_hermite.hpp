#pragma once

#include "proxvi/linalg.hpp"

#include <functional>

namespace proxvi {

/// Gauss-Hermite rule (physicists' weight exp(-x^2)).
struct GaussHermite {
  Vector nodes;
  Vector weights;

  explicit GaussHermite(int n);

  /// E[g(z)] for z ~ N(mean, var), var > 0.
  double expect(const std::function<double(double)>& g, double mean,
                double var) const;
};

/// Shared 64-node rule; exact to ~1e-12 for the logistic integrands used here.
const GaussHermite& gh64();

}  // namespace proxvi
