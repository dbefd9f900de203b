#include "proxvi/estimators.hpp"

#include "proxvi/rng.hpp"

#include <cmath>

namespace proxvi {

GradientEstimate score_function_estimate(
    const std::function<double(double)>& f_tilde, double m, double v, int S,
    std::uint64_t seed, std::uint64_t stream) {
  if (S < 2) {
    throw std::invalid_argument("score_function_estimate: S >= 2 required");
  }
  if (v <= 0.0) {
    throw std::invalid_argument("score_function_estimate: v must be > 0");
  }
  const double sd = std::sqrt(v);
  Vector sum = Vector::Zero(2);
  Vector sum_sq = Vector::Zero(2);
  for (int s = 0; s < S; ++s) {
    CounterRng rng(seed, CounterRng::mix(stream) + static_cast<std::uint64_t>(s));
    double z = m + sd * rng.next_normal();
    double f = f_tilde(z);
    double dz = z - m;
    // grad log N(z | m, v): d/dm = (z-m)/v, d/dv = ((z-m)^2 - v)/(2 v^2)
    double gm = f * dz / v;
    double gv = f * (dz * dz - v) / (2.0 * v * v);
    sum(0) += gm;
    sum(1) += gv;
    sum_sq(0) += gm * gm;
    sum_sq(1) += gv * gv;
  }
  GradientEstimate est;
  est.gradient = sum / static_cast<double>(S);
  est.sample_variance =
      (sum_sq - sum.cwiseProduct(est.gradient)) / static_cast<double>(S - 1);
  est.sample_variance = est.sample_variance.cwiseMax(0.0);
  est.sample_count = S;
  est.seed = seed;
  return est;
}

GradientEstimate minibatch_gradient(const ModelSplit& model,
                                    const GaussianVariational& q,
                                    const MinibatchOptions& opts) {
  const int n = model.num_examples();
  const int m_size = opts.minibatch_size;
  if (m_size < 1 || m_size > n) {
    throw std::invalid_argument("minibatch_gradient: M outside [1, N]");
  }
  Vector v = q.diag_variances();

  GradientEstimate est;
  est.gradient = Vector::Zero(2 * n);
  est.sample_variance = Vector::Zero(2 * n);
  est.sample_count = opts.sample_count;
  est.seed = opts.seed;

  CounterRng pick(opts.seed, CounterRng::mix(opts.stream) ^ 0xb5297a4d3f84d5b2ULL);
  est.minibatch.reserve(m_size);
  if (opts.with_replacement) {
    for (int i = 0; i < m_size; ++i) {
      est.minibatch.push_back(static_cast<int>(pick.next_below(n)));
    }
  } else {
    // Fisher-Yates prefix over [0, N)
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < m_size; ++i) {
      int j = i + static_cast<int>(pick.next_below(n - i));
      std::swap(idx[i], idx[j]);
      est.minibatch.push_back(idx[i]);
    }
  }

  const double scale = static_cast<double>(n) / static_cast<double>(m_size);
  for (int i = 0; i < m_size; ++i) {
    int ex = est.minibatch[i];
    double mean_n = q.mean()(ex);
    double var_n = v(ex);
    if (opts.sample_count == 0) {
      DifficultTerm t = model.difficult_value_and_grads(ex, mean_n, var_n);
      est.gradient(ex) += scale * t.d_mean;
      est.gradient(n + ex) += scale * t.d_var;
    } else {
      GradientEstimate g = score_function_estimate(
          [&](double z) { return -model.log_lik(ex, z); }, mean_n, var_n,
          opts.sample_count, opts.seed,
          CounterRng::mix(opts.stream) + static_cast<std::uint64_t>(ex) + 1);
      est.gradient(ex) += scale * g.gradient(0);
      est.gradient(n + ex) += scale * g.gradient(1);
      est.sample_variance(ex) += scale * scale * g.sample_variance(0);
      est.sample_variance(n + ex) += scale * scale * g.sample_variance(1);
    }
  }
  return est;
}

}  // namespace proxvi
