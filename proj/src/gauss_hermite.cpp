#include "proxvi/gauss_hermite.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace proxvi {

GaussHermite::GaussHermite(int n) {
  if (n < 1) throw std::invalid_argument("GaussHermite: n >= 1 required");
  // Golub-Welsch: eigen-decompose the symmetric Jacobi matrix.
  Matrix j = Matrix::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double b = std::sqrt(i / 2.0);
    j(i, i - 1) = b;
    j(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  nodes = es.eigenvalues();
  weights.resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights(i) = sqrt_pi * v0 * v0;
  }
}

double GaussHermite::expect(const std::function<double(double)>& g,
                            double mean, double var) const {
  if (var <= 0.0) throw std::invalid_argument("GaussHermite::expect: var <= 0");
  const double scale = std::sqrt(2.0 * var);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  double acc = 0.0;
  for (int i = 0; i < nodes.size(); ++i) {
    acc += weights(i) * g(mean + scale * nodes(i));
  }
  return acc * inv_sqrt_pi;
}

const GaussHermite& gh64() {
  static const GaussHermite rule(64);
  return rule;
}

}  // namespace proxvi
