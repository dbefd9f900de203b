#pragma once

#include "proxvi/linalg.hpp"

#include <optional>
#include <string>

namespace proxvi {

enum class OptimizerKind { GD, SGD, ADAGRAD, RMSPROP, ADADELTA, ADAM };

struct OptimizerHyperparams {
  double alpha0 = 0.01;
  double kappa = 0.5;    // SGD decay exponent
  double rho = 0.9;      // RMSprop / ADADELTA decay
  double rho_mu = 0.9;   // ADAM first-moment decay
  double rho_s = 0.999;  // ADAM second-moment decay
  double eps = 1e-8;
};

/// Baseline optimizers over lambda = (m, lower-triangular L) flattened as
/// [m (N); L packed row-major]. diag(L) is clamped at 1e-8 after every step.
class OptimizerState {
 public:
  OptimizerState(OptimizerKind kind, int mean_dim,
                 const OptimizerHyperparams& hp);

  OptimizerKind kind() const { return kind_; }
  int mean_dim() const { return mean_dim_; }
  int step_count() const { return k_; }
  const Vector& lambda() const { return lambda_; }
  const OptimizerHyperparams& hyperparams() const { return hp_; }

  void set_lambda(const Vector& lambda);
  Vector mean() const { return lambda_.head(mean_dim_); }
  Matrix cholesky_factor() const;
  Matrix covariance() const;

  /// Applies one update with gradient g of the minimized objective.
  void step(const Vector& g);

  static int lambda_size(int n) { return n + n * (n + 1) / 2; }
  static Vector pack(const Vector& mean, const Matrix& lower);

 private:
  OptimizerKind kind_;
  int mean_dim_;
  OptimizerHyperparams hp_;
  Vector lambda_;
  Vector s_;      // second-moment accumulator
  Vector mu_;     // first moment (ADAM)
  Vector delta_;  // ADADELTA update accumulator
  int k_ = 0;

  void clamp_diag();
};

/// Chain rule from (grad_m, grad_V) to the (m, L) parameterization with
/// V = L L': grad_L = (grad_V + grad_V') L restricted to the lower triangle.
Vector chain_rule_to_cholesky(const Vector& grad_mean, const Matrix& grad_cov,
                              const Matrix& lower);

/// Table-style presets: "<method>/<dataset>" with method in {sgd, adagrad,
/// rmsprop, adadelta, adam} and dataset in {sonar, ionosphere, usps}.
std::optional<OptimizerHyperparams> baseline_preset(const std::string& name,
                                                    int train_size);

/// PG-SVI preset step sizes: beta_k * N per dataset.
std::optional<double> pg_svi_preset_beta_times_n(const std::string& dataset);

}  // namespace proxvi
