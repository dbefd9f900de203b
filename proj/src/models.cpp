#include "proxvi/models.hpp"

#include "proxvi/gauss_hermite.hpp"
#include "proxvi/rng.hpp"

#include <cmath>

namespace proxvi {

namespace {

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(const Vector& z) {
  double zmax = z.maxCoeff();
  return zmax + std::log((z.array() - zmax).exp().sum());
}

}  // namespace

GaussianVariational GaussianVariational::full(Vector mean, SymmetricMatrix v) {
  if (mean.size() != v.order()) {
    throw std::invalid_argument("GaussianVariational: dimension mismatch");
  }
  CholeskyFactor check(v);  // V must be SPD
  GaussianVariational q;
  q.rep_ = Rep::FullCovariance;
  q.mean_ = std::move(mean);
  q.v_ = std::move(v);
  return q;
}

GaussianVariational GaussianVariational::compact(
    Vector mean, Vector gamma_tilde,
    std::shared_ptr<const SymmetricMatrix> kernel) {
  if (!kernel || mean.size() != kernel->order() ||
      gamma_tilde.size() != mean.size()) {
    throw std::invalid_argument("GaussianVariational: dimension mismatch");
  }
  if ((gamma_tilde.array() <= 0.0).any()) {
    throw std::invalid_argument("GaussianVariational: gamma_tilde must be > 0");
  }
  GaussianVariational q;
  q.rep_ = Rep::GpCompact;
  q.mean_ = std::move(mean);
  q.gamma_tilde_ = std::move(gamma_tilde);
  q.kernel_ = std::move(kernel);
  return q;
}

const Vector& GaussianVariational::gamma_tilde() const {
  if (rep_ != Rep::GpCompact) {
    throw std::logic_error("gamma_tilde: not a compact representation");
  }
  return gamma_tilde_;
}

const SymmetricMatrix& GaussianVariational::kernel() const {
  if (rep_ != Rep::GpCompact) {
    throw std::logic_error("kernel: not a compact representation");
  }
  return *kernel_;
}

Matrix GaussianVariational::covariance() const {
  if (rep_ == Rep::FullCovariance) return v_->mat();
  const Matrix& k = kernel_->mat();
  SymmetricMatrix a = a_matrix(*kernel_, gamma_tilde_);
  CholeskyFactor chol(a);
  Matrix v = k - k * chol.solve(k);
  return Matrix(v.selfadjointView<Eigen::Upper>());
}

Vector GaussianVariational::diag_variances() const {
  if (rep_ == Rep::FullCovariance) return v_->diagonal();
  const Matrix& k = kernel_->mat();
  SymmetricMatrix a = a_matrix(*kernel_, gamma_tilde_);
  CholeskyFactor chol(a);
  Vector d(dim());
  Matrix sol = chol.solve(k);
  for (int n = 0; n < dim(); ++n) {
    d(n) = k(n, n) - k.col(n).dot(sol.col(n));
  }
  return d;
}

double kl_gaussian(const Vector& m1, const SymmetricMatrix& v1,
                   const Vector& m0, const SymmetricMatrix& v0) {
  const int d = static_cast<int>(m1.size());
  if (m0.size() != d || v1.order() != d || v0.order() != d) {
    throw std::invalid_argument("kl_gaussian: dimension mismatch");
  }
  CholeskyFactor c1(v1);
  CholeskyFactor c0(v0);
  double log_ratio = c1.log_det() - c0.log_det();
  double trace = c0.solve(v1.mat()).trace();
  Vector dm = m1 - m0;
  double quad = dm.dot(c0.solve(dm));
  return 0.5 * (-log_ratio + trace + quad - d);
}

ModelSplit::ModelSplit(std::string name, Likelihood lik, Vector y,
                       std::shared_ptr<const SymmetricMatrix> prior_kernel,
                       double noise_var)
    : name_(std::move(name)),
      lik_(lik),
      y_(std::move(y)),
      prior_kernel_(std::move(prior_kernel)),
      noise_var_(noise_var) {
  if (!prior_kernel_ || prior_kernel_->order() != y_.size()) {
    throw std::invalid_argument("ModelSplit: prior kernel/label size mismatch");
  }
  if (lik_ == Likelihood::BernoulliLogit) {
    for (int n = 0; n < y_.size(); ++n) {
      if (y_(n) != 1.0 && y_(n) != -1.0) {
        throw std::invalid_argument("ModelSplit: Bernoulli labels must be +-1");
      }
    }
  }
  if (noise_var_ <= 0.0) {
    throw std::invalid_argument("ModelSplit: noise variance must be > 0");
  }
}

std::optional<double> ModelSplit::lipschitz_constant() const {
  switch (lik_) {
    case Likelihood::Gaussian:
      return 1.0 / noise_var_;
    case Likelihood::BernoulliLogit:
      // |g''| <= 1/4 for the logistic log-likelihood.
      return 0.25;
    case Likelihood::Poisson:
      return std::nullopt;  // exponential mean function is not Lipschitz
  }
  return std::nullopt;
}

double ModelSplit::log_lik(int n, double z) const {
  switch (lik_) {
    case Likelihood::BernoulliLogit:
      return -softplus(-y_(n) * z);
    case Likelihood::Gaussian: {
      double r = y_(n) - z;
      return -0.5 * std::log(2.0 * M_PI * noise_var_) -
             r * r / (2.0 * noise_var_);
    }
    case Likelihood::Poisson:
      return y_(n) * z - std::exp(z) - std::lgamma(y_(n) + 1.0);
  }
  throw std::logic_error("unknown likelihood");
}

DifficultTerm ModelSplit::difficult_value_and_grads(int n, double m_n,
                                                    double v_n) const {
  if (n < 0 || n >= num_examples()) {
    throw std::invalid_argument("difficult_value_and_grads: index out of range");
  }
  if (v_n <= 0.0) {
    throw std::invalid_argument("difficult_value_and_grads: v_n must be > 0");
  }
  switch (lik_) {
    case Likelihood::Gaussian: {
      double r = y_(n) - m_n;
      double value = 0.5 * std::log(2.0 * M_PI * noise_var_) +
                     (r * r + v_n) / (2.0 * noise_var_);
      return {value, (m_n - y_(n)) / noise_var_, 0.5 / noise_var_};
    }
    case Likelihood::Poisson: {
      double e = std::exp(m_n + 0.5 * v_n);
      double value = -y_(n) * m_n + e + std::lgamma(y_(n) + 1.0);
      return {value, -y_(n) + e, 0.5 * e};
    }
    case Likelihood::BernoulliLogit: {
      const double y = y_(n);
      const GaussHermite& gh = gh64();
      double value = gh.expect([&](double z) { return softplus(-y * z); },
                               m_n, v_n);
      // d/dm E[g] = E[g'], d/dv E[g] = (1/2) E[g''].
      double dm = gh.expect([&](double z) { return -y * sigmoid(-y * z); },
                            m_n, v_n);
      double dv = 0.5 * gh.expect(
                            [&](double z) {
                              double s = sigmoid(z);
                              return s * (1.0 - s);
                            },
                            m_n, v_n);
      return {value, dm, dv};
    }
  }
  throw std::logic_error("unknown likelihood");
}

double ModelSplit::elbo(const GaussianVariational& q) const {
  const int n = num_examples();
  if (q.dim() != n) throw std::invalid_argument("elbo: dimension mismatch");
  if (n == 0) return 0.0;
  Vector v = q.diag_variances();
  double f = 0.0;
  for (int i = 0; i < n; ++i) {
    f += difficult_value_and_grads(i, q.mean()(i), v(i)).value;
  }
  double h;
  if (q.rep() == GaussianVariational::Rep::GpCompact) {
    // KL(q || N(0,K)) with V^{-1} = K^{-1} + diag(gt):
    //   1/2 [ log|A| + sum log gt - Tr(A^{-1} K) + m' K^{-1} m ]
    const SymmetricMatrix& k = *prior_kernel_;
    SymmetricMatrix a = a_matrix(k, q.gamma_tilde());
    CholeskyFactor chol_a(a);
    CholeskyFactor chol_k(k);
    double log_term =
        chol_a.log_det() + q.gamma_tilde().array().log().sum();
    double trace = chol_a.solve(k.mat()).trace();
    double quad = q.mean().dot(chol_k.solve(q.mean()));
    h = 0.5 * (log_term - trace + quad);
  } else {
    Vector zero = Vector::Zero(n);
    h = kl_gaussian(q.mean(), SymmetricMatrix(q.covariance()), zero,
                    *prior_kernel_);
  }
  return -f - h;
}

PredictiveLogloss predictive_logloss(const ModelSplit& model,
                                     const GaussianVariational& q,
                                     const Matrix& x_train,
                                     const Matrix& x_test,
                                     const Vector& y_test,
                                     const KernelConfig& cfg) {
  if (x_test.rows() == 0) {
    throw std::invalid_argument("predictive_logloss: empty test set");
  }
  if (y_test.size() != x_test.rows()) {
    throw std::invalid_argument("predictive_logloss: label count mismatch");
  }
  const SymmetricMatrix& k = model.prior_kernel();
  Matrix k_cross = se_kernel_cross(x_train, x_test, cfg);
  CholeskyFactor chol_k(k);
  Vector k_inv_m = chol_k.solve(q.mean());
  const double k_star_star =
      cfg.signal_std() * cfg.signal_std() + cfg.effective_jitter();

  PredictiveLogloss out{0.0, 0};
  const GaussHermite& gh = gh64();
  std::optional<CholeskyFactor> chol_a;
  if (q.rep() == GaussianVariational::Rep::GpCompact) {
    chol_a.emplace(a_matrix(k, q.gamma_tilde()));
  }
  for (int t = 0; t < x_test.rows(); ++t) {
    Vector ks = k_cross.col(t);
    double m_star = ks.dot(k_inv_m);
    double v_star;
    if (chol_a) {
      v_star = k_star_star - ks.dot(chol_a->solve(ks));
    } else {
      Vector k_inv_ks = chol_k.solve(ks);
      v_star = k_star_star - ks.dot(k_inv_ks) +
               k_inv_ks.dot(q.covariance() * k_inv_ks);
    }
    v_star = std::max(v_star, 1e-12);
    double y = y_test(t);
    double p = gh.expect([&](double z) { return sigmoid(y * z); }, m_star,
                         v_star);
    if (p < 1e-300) {
      p = 1e-300;
      ++out.clamped;
    }
    out.mean_logloss += -std::log2(p);
  }
  out.mean_logloss /= static_cast<double>(x_test.rows());
  return out;
}

CtmModel::CtmModel(Matrix topic_word, Vector prior_mean,
                   SymmetricMatrix prior_cov, Eigen::VectorXi counts)
    : topic_word_(std::move(topic_word)),
      prior_mean_(std::move(prior_mean)),
      prior_cov_(std::move(prior_cov)),
      counts_(std::move(counts)) {
  const int k = num_topics();
  if (prior_mean_.size() != k || prior_cov_.order() != k) {
    throw std::invalid_argument("CtmModel: prior dimension mismatch");
  }
  if (counts_.size() != vocab_size()) {
    throw std::invalid_argument("CtmModel: count vector size mismatch");
  }
  if ((topic_word_.array() < 0.0).any()) {
    throw std::invalid_argument("CtmModel: negative topic-word entries");
  }
  for (int j = 0; j < k; ++j) {
    if (std::abs(topic_word_.col(j).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("CtmModel: column " + std::to_string(j) +
                                  " does not sum to 1");
    }
  }
  if ((counts_.array() < 0).any()) {
    throw std::invalid_argument("CtmModel: negative counts");
  }
  CholeskyFactor check(prior_cov_);
  total_words_ = counts_.cast<long>().sum();
}

double CtmModel::f_tilde(const Vector& z) const {
  if (z.size() != num_topics()) {
    throw std::invalid_argument("f_tilde: dimension mismatch");
  }
  double lse = log_sum_exp(z);
  double acc = static_cast<double>(total_words_) * lse;
  double zmax = z.maxCoeff();
  Vector ez = (z.array() - zmax).exp();
  for (int n = 0; n < vocab_size(); ++n) {
    if (counts_(n) == 0) continue;
    double mix = topic_word_.row(n).dot(ez);
    acc -= counts_(n) * (zmax + std::log(mix));
  }
  return acc;
}

CtmGradient ctm_difficult_grads(const CtmModel& model,
                                const GaussianVariational& q, int sample_count,
                                std::uint64_t seed) {
  if (sample_count < 1) {
    throw std::invalid_argument("ctm_difficult_grads: sample_count >= 1");
  }
  const int k = model.num_topics();
  if (q.dim() != k) {
    throw std::invalid_argument("ctm_difficult_grads: dimension mismatch");
  }
  SymmetricMatrix v(q.covariance());
  CholeskyFactor chol(v);
  const Matrix& l = chol.lower();
  Matrix v_inv = chol.solve(Matrix(Matrix::Identity(k, k)));

  std::vector<double> fs(sample_count);
  std::vector<Vector> us(sample_count);
  double f_sum = 0.0;
  for (int s = 0; s < sample_count; ++s) {
    CounterRng rng(seed, static_cast<std::uint64_t>(s));
    Vector xi(k);
    for (int i = 0; i < k; ++i) xi(i) = rng.next_normal();
    Vector z = q.mean() + l * xi;
    fs[s] = model.f_tilde(z);
    us[s] = chol.solve(Vector(z - q.mean()));  // V^{-1}(z - m)
    f_sum += fs[s];
  }

  CtmGradient out;
  out.value = f_sum / sample_count;
  out.grad_mean = Vector::Zero(k);
  out.grad_cov = Matrix::Zero(k, k);
  for (int s = 0; s < sample_count; ++s) {
    // Leave-one-out baseline: unbiased, and exactly zero when f is constant.
    double b = sample_count > 1 ? (f_sum - fs[s]) / (sample_count - 1) : 0.0;
    double w = fs[s] - b;
    out.grad_mean += w * us[s];
    out.grad_cov += w * 0.5 * (us[s] * us[s].transpose() - v_inv);
  }
  double inv_s = 1.0 / static_cast<double>(sample_count);
  out.grad_mean *= inv_s;
  out.grad_cov *= inv_s;
  return out;
}

}  // namespace proxvi
