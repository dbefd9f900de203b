#include "proxvi/linalg.hpp"

#include <cmath>

namespace proxvi {

SymmetricMatrix::SymmetricMatrix(const Matrix& source) {
  if (source.rows() < 1 || source.rows() != source.cols()) {
    throw std::invalid_argument("SymmetricMatrix: square matrix of order >= 1 required");
  }
  if (!source.allFinite()) {
    throw std::invalid_argument("SymmetricMatrix: non-finite entries");
  }
  mat_ = source.selfadjointView<Eigen::Upper>();
}

SymmetricMatrix SymmetricMatrix::identity(int order) {
  return SymmetricMatrix(Matrix::Identity(order, order));
}

CholeskyFactor::CholeskyFactor(const SymmetricMatrix& a) {
  const int n = a.order();
  lower_ = Matrix::Zero(n, n);
  const Matrix& m = a.mat();
  for (int j = 0; j < n; ++j) {
    double d = m(j, j) - lower_.row(j).head(j).squaredNorm();
    if (d <= 0.0 || !std::isfinite(d)) {
      throw NotPositiveDefiniteError(j, d);
    }
    lower_(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = lower_.row(i).head(j).dot(lower_.row(j).head(j));
      lower_(i, j) = (m(i, j) - s) / lower_(j, j);
    }
  }
}

Vector CholeskyFactor::solve(const Vector& b) const {
  Vector y = lower_.triangularView<Eigen::Lower>().solve(b);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix CholeskyFactor::solve(const Matrix& b) const {
  Matrix y = lower_.triangularView<Eigen::Lower>().solve(b);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

double CholeskyFactor::log_det() const {
  return 2.0 * lower_.diagonal().array().log().sum();
}

SolveResult factor_and_solve(const SymmetricMatrix& a, const Matrix& b) {
  CholeskyFactor chol(a);
  return SolveResult{chol.solve(b), chol.log_det()};
}

double KernelConfig::effective_jitter() const {
  if (jitter >= 0.0) return jitter;
  double sigma = signal_std();
  return 1e-8 * sigma * sigma;
}

SymmetricMatrix se_kernel(const Matrix& x, const KernelConfig& cfg) {
  if (x.rows() < 1) throw std::invalid_argument("se_kernel: empty input");
  if (!x.allFinite()) throw std::invalid_argument("se_kernel: non-finite input");
  const int n = static_cast<int>(x.rows());
  const double s2 = cfg.signal_std() * cfg.signal_std();
  const double inv2l2 = 0.5 / (cfg.length_scale() * cfg.length_scale());
  Matrix k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = s2 + cfg.effective_jitter();
    for (int j = i + 1; j < n; ++j) {
      double d2 = (x.row(i) - x.row(j)).squaredNorm();
      k(i, j) = s2 * std::exp(-d2 * inv2l2);
      k(j, i) = k(i, j);
    }
  }
  return SymmetricMatrix(k);
}

Matrix se_kernel_cross(const Matrix& x1, const Matrix& x2,
                       const KernelConfig& cfg) {
  if (!x1.allFinite() || !x2.allFinite()) {
    throw std::invalid_argument("se_kernel_cross: non-finite input");
  }
  const double s2 = cfg.signal_std() * cfg.signal_std();
  const double inv2l2 = 0.5 / (cfg.length_scale() * cfg.length_scale());
  Matrix k(x1.rows(), x2.rows());
  for (int i = 0; i < x1.rows(); ++i) {
    for (int j = 0; j < x2.rows(); ++j) {
      double d2 = (x1.row(i) - x2.row(j)).squaredNorm();
      k(i, j) = s2 * std::exp(-d2 * inv2l2);
    }
  }
  return k;
}

SymmetricMatrix a_matrix(const SymmetricMatrix& k, const Vector& gamma_tilde) {
  if (gamma_tilde.size() != k.order()) {
    throw std::invalid_argument("a_matrix: dimension mismatch");
  }
  if ((gamma_tilde.array() <= 0.0).any()) {
    throw std::invalid_argument("a_matrix: gamma_tilde must be strictly positive");
  }
  Matrix a = k.mat();
  a.diagonal() += gamma_tilde.cwiseInverse();
  return SymmetricMatrix(a);
}

}  // namespace proxvi
