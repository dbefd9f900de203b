#pragma once

#include "proxvi/estimators.hpp"
#include "proxvi/models.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace proxvi {

/// Step-size sequence beta_k > 0, optionally validated against beta <= 2a/L.
class StepSchedule {
 public:
  static StepSchedule constant(double beta);
  static StepSchedule general(std::vector<double> betas);

  double beta(int k) const;
  bool is_constant() const { return betas_.size() == 1; }

  /// Checks every beta_k against 0 < beta_k <= 2 alpha / L.
  void validate(double alpha, double lipschitz) const;

 private:
  std::vector<double> betas_;
};

/// O(N)-memory PG solver state for GP models: mean plus the accumulated
/// variance-gradient vector gamma_tilde with V^{-1} = K^{-1} + diag(gt).
struct GpSolverState {
  Vector m;
  Vector gamma_tilde;
  int k = 0;
  int clamp_events = 0;

  static GpSolverState init(int n, double epsilon = 1e-6);
};

struct GpStepOptions {
  bool exact_bk = false;    // use B_k = K + diag(r gt_{k-1})^{-1} in the mean update
  double gamma_floor = 1e-6;
};

/// One PG-SVI iteration (single selected example). alpha_nk and gamma_nk are
/// the scaled gradients N df/dm and 2N df/dv at (m_nk, v_nk).
GpSolverState pg_svi_gp_step(const GpSolverState& state,
                             const SymmetricMatrix& k_mat, int n_k,
                             double alpha_nk, double gamma_nk, double beta_k,
                             const GpStepOptions& opts = {});

/// Mini-batch generalization: alpha_vec and gamma_vec hold the accumulated
/// scaled gradients on the selected coordinates (zero elsewhere).
GpSolverState pg_svi_gp_step_multi(const GpSolverState& state,
                                   const SymmetricMatrix& k_mat,
                                   const Vector& alpha_vec,
                                   const Vector& gamma_vec, double beta_k,
                                   const GpStepOptions& opts = {});

/// Diagonal element v_n of the implied covariance, one solve against A_k.
double gp_state_diag(const GpSolverState& state, const SymmetricMatrix& k_mat,
                     int n);

/// Full-matrix oracle step: materializes V_{k+1} and uses the exact B_k-form
/// mean update. Hard error on loss of positive-definiteness (never clamps).
struct FullOracleState {
  Vector m;
  Matrix v;
};
FullOracleState full_oracle_step(const FullOracleState& state,
                                 const SymmetricMatrix& k_mat,
                                 const Vector& alpha_vec,
                                 const Vector& gamma_vec, double beta_k);

/// GLM kernel K = X X' + jitter I; the GLM recursions are the GP recursions
/// in the predictive coordinates m~ = X m.
SymmetricMatrix glm_kernel(const Matrix& x, double jitter = 1e-8);

GpSolverState pg_svi_glm_step(const GpSolverState& state,
                              const SymmetricMatrix& k_glm, int n_k,
                              double alpha_nk, double gamma_nk, double beta_k,
                              const GpStepOptions& opts = {});

enum class SolverMethod { PgSviCompact, PgSviOracle, PgSviGlm };

struct TraceRow {
  int iteration;
  int pass;
  double elbo;
  double grad_norm_sq;  // |G_k|^2 = |lambda_k - lambda_{k+1}|^2 / beta_k^2
  double beta;
  double wall_ms;
  std::vector<int> minibatch;
  // Filled at pass boundaries when SolverOptions::logloss_fn is set.
  double test_logloss = std::numeric_limits<double>::quiet_NaN();
};

struct SolverTrace {
  std::vector<TraceRow> rows;
  bool converged = false;
  bool diverged = false;
  int clamp_events = 0;
  int passes_to_converge = -1;
  double final_elbo = 0.0;
  std::uint64_t seed = 0;
};

struct SolverOptions {
  SolverMethod method = SolverMethod::PgSviCompact;
  StepSchedule schedule = StepSchedule::constant(0.01);
  int minibatch = 1;
  int samples = 0;  // 0 = exact quadrature per-example gradients
  bool with_replacement = true;
  std::uint64_t seed = 0;
  int max_passes = 100;
  double elbo_delta_threshold = 1e-5;
  bool exact_bk = false;
  double gamma_floor = 1e-6;
  bool record_every_iteration = false;
  double injected_noise_sd = 0.0;  // adds N(0, sd^2) noise to each gradient
  // Optional per-pass metric evaluated on the current iterate.
  std::function<double(const GaussianVariational&)> logloss_fn;
};

struct SolverResult {
  SolverTrace trace;
  GaussianVariational q;
};

SolverResult run_solver(const ModelSplit& model, const SolverOptions& opts);

/// Convergence-rate bound calculator.
enum class BoundKind { Prop1, Prop2, Prop3, Thm1 };

struct BoundInput {
  double lipschitz = 1.0;
  double alpha = 1.0;
  double c0 = 1.0;
  int t = 1;
  StepSchedule schedule = StepSchedule::constant(1.0);
  double sigma2 = 0.0;
  int minibatch = 1;
  double c = 1.0;  // Young's-inequality constant; must exceed 1/(2 alpha)
};

struct BoundResult {
  double value;
  std::vector<double> iterate_pmf;  // nonempty for Thm1
};

BoundResult convergence_bound(BoundKind kind, const BoundInput& in);

}  // namespace proxvi
