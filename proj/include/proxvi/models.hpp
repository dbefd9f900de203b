#pragma once

#include "proxvi/linalg.hpp"

#include <memory>
#include <optional>
#include <string>

namespace proxvi {

/// Gaussian variational state q(z) = N(m, V). Either the covariance is held
/// explicitly, or (for GP models) only the vector gamma_tilde with
/// V^{-1} = K^{-1} + diag(gamma_tilde) is kept, never materializing V.
class GaussianVariational {
 public:
  enum class Rep { FullCovariance, GpCompact };

  static GaussianVariational full(Vector mean, SymmetricMatrix v);
  static GaussianVariational compact(Vector mean, Vector gamma_tilde,
                                     std::shared_ptr<const SymmetricMatrix> kernel);

  Rep rep() const { return rep_; }
  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Vector& gamma_tilde() const;
  const SymmetricMatrix& kernel() const;

  /// Covariance as an explicit matrix. For the compact representation this
  /// evaluates K - K A^{-1} K with A = K + diag(gamma_tilde)^{-1}.
  Matrix covariance() const;
  Vector diag_variances() const;

 private:
  GaussianVariational() = default;
  Rep rep_ = Rep::FullCovariance;
  Vector mean_;
  std::optional<SymmetricMatrix> v_;
  Vector gamma_tilde_;
  std::shared_ptr<const SymmetricMatrix> kernel_;
};

/// KL[N(m1,V1) || N(m0,V0)].
double kl_gaussian(const Vector& m1, const SymmetricMatrix& v1,
                   const Vector& m0, const SymmetricMatrix& v0);

enum class Likelihood { BernoulliLogit, Gaussian, Poisson };

struct DifficultTerm {
  double value;
  double d_mean;
  double d_var;
};

/// Split of the negative lower bound into per-example difficult terms
/// f_n(m_n, v_n) = -E_q[log p(y_n | z_n)] plus the convex KL-to-prior term.
class ModelSplit {
 public:
  ModelSplit(std::string name, Likelihood lik, Vector y,
             std::shared_ptr<const SymmetricMatrix> prior_kernel,
             double noise_var = 1.0);

  const std::string& name() const { return name_; }
  Likelihood likelihood() const { return lik_; }
  int num_examples() const { return static_cast<int>(y_.size()); }
  const Vector& labels() const { return y_; }
  const SymmetricMatrix& prior_kernel() const { return *prior_kernel_; }
  std::shared_ptr<const SymmetricMatrix> prior_kernel_ptr() const { return prior_kernel_; }
  double noise_var() const { return noise_var_; }

  /// Lipschitz constant of grad f w.r.t. m when known (Gaussian: 1/sigma^2);
  /// unavailable for non-Lipschitz likelihoods (Poisson).
  std::optional<double> lipschitz_constant() const;

  /// log p(y_n | z).
  double log_lik(int n, double z) const;

  DifficultTerm difficult_value_and_grads(int n, double m_n, double v_n) const;

  /// Deterministic quadrature ELBO: -sum_n f_n - KL(q || prior).
  double elbo(const GaussianVariational& q) const;

 private:
  std::string name_;
  Likelihood lik_;
  Vector y_;
  std::shared_ptr<const SymmetricMatrix> prior_kernel_;
  double noise_var_;
};

struct PredictiveLogloss {
  double mean_logloss;  // base-2; 1.0 == coin flipping
  int clamped = 0;      // predictive probabilities clamped at 1e-300
};

/// GP predictive test log-loss for a Bernoulli-logit model.
PredictiveLogloss predictive_logloss(const ModelSplit& model,
                                     const GaussianVariational& q,
                                     const Matrix& x_train,
                                     const Matrix& x_test,
                                     const Vector& y_test,
                                     const KernelConfig& cfg);

/// Correlated topic model with fixed topic-word matrix.
class CtmModel {
 public:
  CtmModel(Matrix topic_word, Vector prior_mean, SymmetricMatrix prior_cov,
           Eigen::VectorXi counts);

  int vocab_size() const { return static_cast<int>(topic_word_.rows()); }
  int num_topics() const { return static_cast<int>(topic_word_.cols()); }
  const Matrix& topic_word() const { return topic_word_; }
  const Vector& prior_mean() const { return prior_mean_; }
  const SymmetricMatrix& prior_cov() const { return prior_cov_; }
  const Eigen::VectorXi& counts() const { return counts_; }
  long total_words() const { return total_words_; }

  /// f~(z) = -sum_n y_n log(sum_k beta_nk e^{z_k}) + W lse(z).
  double f_tilde(const Vector& z) const;

 private:
  Matrix topic_word_;
  Vector prior_mean_;
  SymmetricMatrix prior_cov_;
  Eigen::VectorXi counts_;
  long total_words_;
};

struct CtmGradient {
  double value;
  Vector grad_mean;
  Matrix grad_cov;  // score-function estimate of grad w.r.t. V (full)
  Vector grad_diag_cov() const { return grad_cov.diagonal(); }
};

/// Score-function Monte Carlo estimate of the CTM difficult term and its
/// gradients; deterministic given seed.
CtmGradient ctm_difficult_grads(const CtmModel& model,
                                const GaussianVariational& q, int sample_count,
                                std::uint64_t seed);

}  // namespace proxvi
