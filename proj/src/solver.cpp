#include "proxvi/solver.hpp"

#include "proxvi/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace proxvi {

StepSchedule StepSchedule::constant(double beta) {
  if (beta <= 0.0) throw std::invalid_argument("StepSchedule: beta must be > 0");
  StepSchedule s;
  s.betas_ = {beta};
  return s;
}

StepSchedule StepSchedule::general(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("StepSchedule: empty sequence");
  for (double b : betas) {
    if (b <= 0.0) throw std::invalid_argument("StepSchedule: beta must be > 0");
  }
  StepSchedule s;
  s.betas_ = std::move(betas);
  return s;
}

double StepSchedule::beta(int k) const {
  if (k < 0) throw std::invalid_argument("StepSchedule: negative index");
  if (static_cast<size_t>(k) < betas_.size()) return betas_[k];
  return betas_.back();
}

void StepSchedule::validate(double alpha, double lipschitz) const {
  double cap = 2.0 * alpha / lipschitz;
  for (double b : betas_) {
    if (b > cap) {
      throw std::invalid_argument("StepSchedule: beta exceeds 2 alpha / L");
    }
  }
}

GpSolverState GpSolverState::init(int n, double epsilon) {
  if (n < 1 || epsilon <= 0.0) {
    throw std::invalid_argument("GpSolverState: invalid init");
  }
  GpSolverState s;
  s.m = Vector::Zero(n);
  s.gamma_tilde = Vector::Constant(n, epsilon);
  return s;
}

GpSolverState pg_svi_gp_step_multi(const GpSolverState& state,
                                   const SymmetricMatrix& k_mat,
                                   const Vector& alpha_vec,
                                   const Vector& gamma_vec, double beta_k,
                                   const GpStepOptions& opts) {
  const int n = static_cast<int>(state.m.size());
  if (k_mat.order() != n || alpha_vec.size() != n || gamma_vec.size() != n) {
    throw std::invalid_argument("pg_svi_gp_step: dimension mismatch");
  }
  if (beta_k <= 0.0) throw std::invalid_argument("pg_svi_gp_step: beta <= 0");
  const double r = 1.0 / (1.0 + beta_k);

  GpSolverState next = state;
  next.gamma_tilde = r * state.gamma_tilde + (1.0 - r) * gamma_vec;
  for (int i = 0; i < n; ++i) {
    if (next.gamma_tilde(i) <= 0.0) {
      next.gamma_tilde(i) = opts.gamma_floor;
      ++next.clamp_events;
    }
  }

  // Mean update m - (1-r)(I - K M^{-1})(m + K alpha); default M = A_k, the
  // stated approximation; exact mode uses B_k = K + diag(r gt_{k-1})^{-1}.
  Vector diag_for_solve =
      opts.exact_bk ? Vector(r * state.gamma_tilde) : next.gamma_tilde;
  SymmetricMatrix a = a_matrix(k_mat, diag_for_solve);
  CholeskyFactor chol(a);
  Vector u = state.m + k_mat.mat() * alpha_vec;
  next.m = state.m - (1.0 - r) * (u - k_mat.mat() * chol.solve(u));
  next.k = state.k + 1;
  return next;
}

GpSolverState pg_svi_gp_step(const GpSolverState& state,
                             const SymmetricMatrix& k_mat, int n_k,
                             double alpha_nk, double gamma_nk, double beta_k,
                             const GpStepOptions& opts) {
  const int n = static_cast<int>(state.m.size());
  if (n_k < 0 || n_k >= n) {
    throw std::invalid_argument("pg_svi_gp_step: example index out of range");
  }
  Vector alpha_vec = Vector::Zero(n);
  Vector gamma_vec = Vector::Zero(n);
  alpha_vec(n_k) = alpha_nk;
  gamma_vec(n_k) = gamma_nk;
  return pg_svi_gp_step_multi(state, k_mat, alpha_vec, gamma_vec, beta_k, opts);
}

double gp_state_diag(const GpSolverState& state, const SymmetricMatrix& k_mat,
                     int n) {
  SymmetricMatrix a = a_matrix(k_mat, state.gamma_tilde);
  CholeskyFactor chol(a);
  Vector kn = k_mat.mat().col(n);
  return k_mat(n, n) - kn.dot(chol.solve(kn));
}

FullOracleState full_oracle_step(const FullOracleState& state,
                                 const SymmetricMatrix& k_mat,
                                 const Vector& alpha_vec,
                                 const Vector& gamma_vec, double beta_k) {
  const int n = static_cast<int>(state.m.size());
  if (beta_k <= 0.0) throw std::invalid_argument("full_oracle_step: beta <= 0");
  const double r = 1.0 / (1.0 + beta_k);

  CholeskyFactor chol_v{SymmetricMatrix(state.v)};
  CholeskyFactor chol_k(k_mat);
  Matrix eye = Matrix::Identity(n, n);
  Matrix v_inv = chol_v.solve(eye);
  Matrix k_inv = chol_k.solve(eye);

  Matrix prec = r * v_inv + (1.0 - r) * (k_inv + Matrix(gamma_vec.asDiagonal()));
  CholeskyFactor chol_prec{SymmetricMatrix(prec)};  // hard error if not SPD

  // Exact mean update from the proximal optimality condition.
  Matrix mean_prec = (1.0 - r) * k_inv + r * v_inv;
  CholeskyFactor chol_mp{SymmetricMatrix(mean_prec)};
  Vector rhs = r * (v_inv * state.m) - (1.0 - r) * alpha_vec;

  FullOracleState next;
  next.m = chol_mp.solve(rhs);
  Matrix v_new = chol_prec.solve(eye);
  next.v = v_new.selfadjointView<Eigen::Upper>();
  return next;
}

SymmetricMatrix glm_kernel(const Matrix& x, double jitter) {
  Matrix k = x * x.transpose();
  k.diagonal().array() += jitter;
  return SymmetricMatrix(k);
}

GpSolverState pg_svi_glm_step(const GpSolverState& state,
                              const SymmetricMatrix& k_glm, int n_k,
                              double alpha_nk, double gamma_nk, double beta_k,
                              const GpStepOptions& opts) {
  return pg_svi_gp_step(state, k_glm, n_k, alpha_nk, gamma_nk, beta_k, opts);
}

namespace {

struct PerExampleGrad {
  double d_mean;
  double d_var;
};

PerExampleGrad example_gradient(const ModelSplit& model, int ex, double m_n,
                                double v_n, int samples, std::uint64_t seed,
                                std::uint64_t stream) {
  if (samples == 0) {
    DifficultTerm t = model.difficult_value_and_grads(ex, m_n, v_n);
    return {t.d_mean, t.d_var};
  }
  GradientEstimate g = score_function_estimate(
      [&](double z) { return -model.log_lik(ex, z); }, m_n, v_n, samples, seed,
      stream);
  return {g.gradient(0), g.gradient(1)};
}

}  // namespace

SolverResult run_solver(const ModelSplit& model, const SolverOptions& opts) {
  const int n = model.num_examples();
  const int m_batch = opts.minibatch;
  if (m_batch < 1 || m_batch > n) {
    throw std::invalid_argument("run_solver: minibatch outside [1, N]");
  }
  const SymmetricMatrix& k_mat = model.prior_kernel();
  auto kernel_ptr = model.prior_kernel_ptr();
  const int iters_per_pass = (n + m_batch - 1) / m_batch;

  GpStepOptions step_opts;
  step_opts.exact_bk = opts.exact_bk;
  step_opts.gamma_floor = opts.gamma_floor;

  const bool oracle = opts.method == SolverMethod::PgSviOracle;
  GpSolverState state = GpSolverState::init(n, opts.gamma_floor);
  FullOracleState full{Vector::Zero(n), k_mat.mat()};

  SolverTrace trace;
  trace.seed = opts.seed;

  auto make_q = [&]() {
    if (oracle) {
      return GaussianVariational::full(full.m, SymmetricMatrix(full.v));
    }
    return GaussianVariational::compact(state.m, state.gamma_tilde, kernel_ptr);
  };

  auto t_start = std::chrono::steady_clock::now();
  auto wall_ms = [&]() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  auto logloss_of = [&](const GaussianVariational& q) {
    return opts.logloss_fn ? opts.logloss_fn(q)
                           : std::numeric_limits<double>::quiet_NaN();
  };

  double elbo = model.elbo(make_q());
  trace.rows.push_back({0, 0, elbo, 0.0, 0.0, wall_ms(), {},
                        logloss_of(make_q())});
  trace.final_elbo = elbo;
  if (opts.max_passes == 0) return {std::move(trace), make_q()};

  double prev_pass_elbo = elbo;
  const int max_iters = opts.max_passes * iters_per_pass;
  CounterRng noise_rng(opts.seed, 0x6e6f697365ULL);

  for (int k = 0; k < max_iters; ++k) {
    double beta = opts.schedule.beta(k);

    // Select the mini-batch and assemble the scaled gradient vectors.
    CounterRng pick(opts.seed, CounterRng::mix(k) ^ 0xb5297a4d3f84d5b2ULL);
    std::vector<int> batch;
    batch.reserve(m_batch);
    if (opts.with_replacement) {
      for (int i = 0; i < m_batch; ++i) {
        batch.push_back(static_cast<int>(pick.next_below(n)));
      }
    } else {
      std::vector<int> idx(n);
      for (int i = 0; i < n; ++i) idx[i] = i;
      for (int i = 0; i < m_batch; ++i) {
        int j = i + static_cast<int>(pick.next_below(n - i));
        std::swap(idx[i], idx[j]);
        batch.push_back(idx[i]);
      }
    }

    // Diagonal variances of the current iterate for the selected coordinates:
    // one factorization of A_{k-1} shared across the batch.
    Vector alpha_vec = Vector::Zero(n);
    Vector gamma_vec = Vector::Zero(n);
    const double scale = static_cast<double>(n) / static_cast<double>(m_batch);
    {
      std::optional<CholeskyFactor> chol_prev;
      Vector cur_m = oracle ? full.m : state.m;
      for (int i = 0; i < m_batch; ++i) {
        int ex = batch[i];
        double v_n;
        if (oracle) {
          v_n = full.v(ex, ex);
        } else {
          if (!chol_prev) {
            chol_prev.emplace(a_matrix(k_mat, state.gamma_tilde));
          }
          Vector kn = k_mat.mat().col(ex);
          v_n = k_mat(ex, ex) - kn.dot(chol_prev->solve(kn));
        }
        PerExampleGrad g = example_gradient(
            model, ex, cur_m(ex), std::max(v_n, 1e-12), opts.samples,
            opts.seed, CounterRng::mix(k) + static_cast<std::uint64_t>(i));
        if (opts.injected_noise_sd > 0.0) {
          g.d_mean += opts.injected_noise_sd * noise_rng.next_normal();
          g.d_var += opts.injected_noise_sd * noise_rng.next_normal();
        }
        alpha_vec(ex) += scale * g.d_mean;
        gamma_vec(ex) += 2.0 * scale * g.d_var;
      }
    }

    double gnorm;
    if (oracle) {
      FullOracleState next = full_oracle_step(full, k_mat, alpha_vec,
                                              gamma_vec, beta);
      gnorm = ((next.m - full.m).squaredNorm() +
               (next.v - full.v).squaredNorm()) /
              (beta * beta);
      full = std::move(next);
    } else {
      GpSolverState next = pg_svi_gp_step_multi(state, k_mat, alpha_vec,
                                                gamma_vec, beta, step_opts);
      gnorm = ((next.m - state.m).squaredNorm() +
               (next.gamma_tilde - state.gamma_tilde).squaredNorm()) /
              (beta * beta);
      trace.clamp_events = next.clamp_events;
      state = std::move(next);
    }

    const Vector& cur_mean = oracle ? full.m : state.m;
    if (!cur_mean.allFinite() ||
        (!oracle && !state.gamma_tilde.allFinite()) ||
        (oracle && !full.v.allFinite())) {
      trace.diverged = true;
      trace.rows.push_back({k + 1, (k + 1) * m_batch / n,
                            std::numeric_limits<double>::quiet_NaN(), gnorm,
                            beta, wall_ms(), batch});
      break;
    }

    bool pass_boundary = ((k + 1) % iters_per_pass == 0);
    int pass = (k + 1) / iters_per_pass;
    if (pass_boundary) {
      elbo = model.elbo(make_q());
      trace.final_elbo = elbo;
      trace.rows.push_back({k + 1, pass, elbo, gnorm, beta, wall_ms(), batch,
                            logloss_of(make_q())});
      if (!std::isfinite(elbo)) {
        trace.diverged = true;
        break;
      }
      double denom = std::max(std::abs(prev_pass_elbo), 1e-12);
      if (std::abs(elbo - prev_pass_elbo) / denom < opts.elbo_delta_threshold) {
        trace.converged = true;
        trace.passes_to_converge = pass;
        break;
      }
      prev_pass_elbo = elbo;
    } else if (opts.record_every_iteration) {
      trace.rows.push_back({k + 1, pass, elbo, gnorm, beta, wall_ms(), batch});
    }
  }
  return {std::move(trace), make_q()};
}

BoundResult convergence_bound(BoundKind kind, const BoundInput& in) {
  if (in.lipschitz <= 0.0 || in.alpha <= 0.0 || in.c0 <= 0.0 || in.t <= 0) {
    throw std::invalid_argument("convergence_bound: L, alpha, C0, t must be > 0");
  }
  switch (kind) {
    case BoundKind::Prop1:
      return {2.0 * in.lipschitz * in.c0 / (in.alpha * in.alpha * in.t), {}};
    case BoundKind::Prop2: {
      double denom = 0.0;
      for (int k = 0; k < in.t; ++k) {
        double b = in.schedule.beta(k);
        denom += in.alpha * b - 0.5 * in.lipschitz * b * b;
      }
      if (denom <= 0.0) {
        throw std::invalid_argument("convergence_bound: step sizes violate prop2");
      }
      return {in.c0 / denom, {}};
    }
    case BoundKind::Prop3: {
      if (in.c <= 0.5 / in.alpha) {
        throw std::invalid_argument("convergence_bound: c <= 1/(2 alpha)");
      }
      double a_star = in.alpha - 0.5 / in.c;
      return {2.0 * in.lipschitz * in.c0 / (a_star * a_star * in.t) +
                  in.c * in.sigma2 / (in.minibatch * a_star),
              {}};
    }
    case BoundKind::Thm1: {
      if (in.c <= 0.5 / in.alpha) {
        throw std::invalid_argument("convergence_bound: c <= 1/(2 alpha)");
      }
      double a_star = in.alpha - 0.5 / in.c;
      double denom = 0.0;
      double beta_sum = 0.0;
      std::vector<double> pmf(in.t);
      for (int k = 0; k < in.t; ++k) {
        double b = in.schedule.beta(k);
        double w = a_star * b - 0.5 * in.lipschitz * b * b;
        pmf[k] = w;
        denom += w;
        beta_sum += b / in.minibatch;
      }
      if (denom <= 0.0) {
        throw std::invalid_argument("convergence_bound: step sizes violate thm1");
      }
      for (double& p : pmf) p /= denom;
      double value = (in.c0 + 0.5 * in.c * in.sigma2 * beta_sum) / denom;
      return {value, std::move(pmf)};
    }
  }
  throw std::logic_error("unknown bound kind");
}

}  // namespace proxvi
