#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace proxvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a Cholesky factorization hits a non-positive pivot.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(int pivot, double value)
      : std::runtime_error("matrix not positive definite: pivot " +
                           std::to_string(pivot) + " = " +
                           std::to_string(value)),
        pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

/// Dense symmetric matrix. The upper triangle is authoritative at
/// construction time; storage is kept exactly symmetric afterwards.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(const Matrix& source);
  static SymmetricMatrix identity(int order);

  int order() const { return static_cast<int>(mat_.rows()); }
  double operator()(int i, int j) const { return mat_(i, j); }
  const Matrix& mat() const { return mat_; }
  Vector diagonal() const { return mat_.diagonal(); }

 private:
  Matrix mat_;
};

/// Lower-triangular Cholesky factor with strictly positive diagonal.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const SymmetricMatrix& a);

  int order() const { return static_cast<int>(lower_.rows()); }
  const Matrix& lower() const { return lower_; }

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  double log_det() const;  // log|A| = 2 sum(log diag(L))

 private:
  Matrix lower_;
};

struct SolveResult {
  Matrix solution;
  double log_det;
};

/// Solves A X = B for SPD A; also returns log|A|.
SolveResult factor_and_solve(const SymmetricMatrix& a, const Matrix& b);

struct KernelConfig {
  double log_length_scale = 0.0;
  double log_signal_std = 0.0;
  double jitter = -1.0;  // < 0 means default 1e-8 * sigma^2

  double length_scale() const { return std::exp(log_length_scale); }
  double signal_std() const { return std::exp(log_signal_std); }
  double effective_jitter() const;
};

/// Squared-exponential kernel K[i][j] = sigma^2 exp(-|xi-xj|^2 / (2 l^2)),
/// jitter added to the diagonal.
SymmetricMatrix se_kernel(const Matrix& x, const KernelConfig& cfg);

/// Cross-kernel between two point sets (no jitter).
Matrix se_kernel_cross(const Matrix& x1, const Matrix& x2,
                       const KernelConfig& cfg);

/// A = K + [diag(gamma_tilde)]^{-1}; every gamma_tilde entry must be > 0.
SymmetricMatrix a_matrix(const SymmetricMatrix& k, const Vector& gamma_tilde);

}  // namespace proxvi
