#include "proxvi/baselines.hpp"

#include <cmath>

namespace proxvi {

OptimizerState::OptimizerState(OptimizerKind kind, int mean_dim,
                               const OptimizerHyperparams& hp)
    : kind_(kind), mean_dim_(mean_dim), hp_(hp) {
  if (mean_dim < 1) throw std::invalid_argument("OptimizerState: mean_dim >= 1");
  const int size = lambda_size(mean_dim);
  lambda_ = Vector::Zero(size);
  s_ = Vector::Zero(size);
  mu_ = Vector::Zero(size);
  delta_ = Vector::Zero(size);
}

Vector OptimizerState::pack(const Vector& mean, const Matrix& lower) {
  const int n = static_cast<int>(mean.size());
  Vector out(lambda_size(n));
  out.head(n) = mean;
  int pos = n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) out(pos++) = lower(i, j);
  }
  return out;
}

void OptimizerState::set_lambda(const Vector& lambda) {
  if (lambda.size() != lambda_.size()) {
    throw std::invalid_argument("set_lambda: size mismatch");
  }
  lambda_ = lambda;
  clamp_diag();
}

Matrix OptimizerState::cholesky_factor() const {
  Matrix l = Matrix::Zero(mean_dim_, mean_dim_);
  int pos = mean_dim_;
  for (int i = 0; i < mean_dim_; ++i) {
    for (int j = 0; j <= i; ++j) l(i, j) = lambda_(pos++);
  }
  return l;
}

Matrix OptimizerState::covariance() const {
  Matrix l = cholesky_factor();
  return l * l.transpose();
}

void OptimizerState::clamp_diag() {
  int pos = mean_dim_;  // start of packed row i
  for (int i = 0; i < mean_dim_; ++i) {
    double& d = lambda_(pos + i);
    if (d < 1e-8) d = 1e-8;
    pos += i + 1;
  }
}

void OptimizerState::step(const Vector& g) {
  if (g.size() != lambda_.size()) {
    throw std::invalid_argument("optimizer_step: gradient size mismatch");
  }
  if (!g.allFinite()) {
    throw std::invalid_argument("optimizer_step: non-finite gradient");
  }
  switch (kind_) {
    case OptimizerKind::GD:
      lambda_ -= hp_.alpha0 * g;
      break;
    case OptimizerKind::SGD:
      lambda_ -= hp_.alpha0 * std::pow(k_ + 1.0, -hp_.kappa) * g;
      break;
    case OptimizerKind::ADAGRAD:
      s_ += g.cwiseProduct(g);
      lambda_ -= hp_.alpha0 *
                 (g.array() / (s_.array() + hp_.eps).sqrt()).matrix();
      break;
    case OptimizerKind::RMSPROP:
      s_ = hp_.rho * s_ + (1.0 - hp_.rho) * g.cwiseProduct(g);
      lambda_ -= hp_.alpha0 *
                 (g.array() / (s_.array() + hp_.eps).sqrt()).matrix();
      break;
    case OptimizerKind::ADADELTA: {
      s_ = hp_.rho * s_ + (1.0 - hp_.rho) * g.cwiseProduct(g);
      Vector g_ad = hp_.alpha0 * ((delta_.array() + hp_.eps).sqrt() /
                                  (s_.array() + hp_.eps).sqrt() * g.array())
                                     .matrix();
      lambda_ -= g_ad;
      delta_ = hp_.rho * delta_ + (1.0 - hp_.rho) * g_ad.cwiseProduct(g_ad);
      break;
    }
    case OptimizerKind::ADAM: {
      mu_ = hp_.rho_mu * mu_ + (1.0 - hp_.rho_mu) * g;
      s_ = hp_.rho_s * s_ + (1.0 - hp_.rho_s) * g.cwiseProduct(g);
      const int k1 = k_ + 1;
      Vector g_s = (s_.array() / (1.0 - std::pow(hp_.rho_s, k1))).sqrt();
      Vector mu_hat = mu_ / (1.0 - std::pow(hp_.rho_mu, k1));
      lambda_ -= hp_.alpha0 *
                 (mu_hat.array() / (g_s.array() + hp_.eps)).matrix();
      break;
    }
  }
  ++k_;
  clamp_diag();
}

Vector chain_rule_to_cholesky(const Vector& grad_mean, const Matrix& grad_cov,
                              const Matrix& lower) {
  const int n = static_cast<int>(grad_mean.size());
  if (grad_cov.rows() != n || grad_cov.cols() != n || lower.rows() != n ||
      lower.cols() != n) {
    throw std::invalid_argument("chain_rule_to_cholesky: dimension mismatch");
  }
  Matrix grad_l = (grad_cov + grad_cov.transpose()) * lower;
  Vector out(OptimizerState::lambda_size(n));
  out.head(n) = grad_mean;
  int pos = n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) out(pos++) = grad_l(i, j);
  }
  return out;
}

std::optional<OptimizerHyperparams> baseline_preset(const std::string& name,
                                                    int train_size) {
  auto slash = name.find('/');
  if (slash == std::string::npos) return std::nullopt;
  std::string method = name.substr(0, slash);
  std::string dataset = name.substr(slash + 1);
  int d = dataset == "sonar" ? 0 : dataset == "ionosphere" ? 1
                                 : dataset == "usps"       ? 2
                                                           : -1;
  if (d < 0) return std::nullopt;

  OptimizerHyperparams hp;
  if (method == "sgd") {
    static const double kappa[3] = {0.8, 0.51, 0.6};
    static const double a0_times_n[3] = {1200.0, 25.0, 800.0};
    hp.kappa = kappa[d];
    hp.alpha0 = a0_times_n[d] / train_size;
  } else if (method == "adagrad") {
    static const double a0[3] = {4.5, 4.0, 8.0};
    hp.alpha0 = a0[d];
  } else if (method == "rmsprop") {
    static const double a0[3] = {0.1, 0.04, 0.1};
    static const double rho[3] = {0.9, 0.9999, 0.9};
    hp.alpha0 = a0[d];
    hp.rho = rho[d];
  } else if (method == "adadelta") {
    static const double a0[3] = {1.0, 0.1, 1.0};
    static const double one_minus_rho[3] = {5e-10, 1e-11, 1e-12};
    hp.alpha0 = a0[d];
    hp.rho = 1.0 - one_minus_rho[d];
  } else if (method == "adam") {
    static const double a0[3] = {0.04, 0.25, 2.5};
    hp.alpha0 = a0[d];
    hp.rho_mu = 0.9;
    hp.rho_s = 0.999;
  } else {
    return std::nullopt;
  }
  return hp;
}

std::optional<double> pg_svi_preset_beta_times_n(const std::string& dataset) {
  if (dataset == "sonar") return 0.2;
  if (dataset == "ionosphere") return 2.0;
  if (dataset == "usps") return 2.5;
  return std::nullopt;
}

}  // namespace proxvi
