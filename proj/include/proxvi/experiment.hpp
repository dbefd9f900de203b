#pragma once

#include "proxvi/baselines.hpp"
#include "proxvi/dataset.hpp"
#include "proxvi/solver.hpp"

#include <string>
#include <vector>

namespace proxvi {

/// Methods: "pg" (full-batch, exact gradients), "pg-mc" (full-batch, MC),
/// "pg-svi" (mini-batch, MC), "gd", "sgd", "adagrad", "rmsprop", "adadelta",
/// "adam". The last six run over lambda = (m, L) with V = L L'.
struct ExperimentConfig {
  std::string dataset_name = "synthetic";
  DatasetBundle data;
  KernelConfig kernel;
  std::string method = "pg-svi";
  double beta = 0.01;  // PG-family step size
  OptimizerHyperparams hyper;
  int minibatch = 1;
  int samples = 500;  // MC samples; 0 = quadrature
  int passes = 100;
  double threshold = 1e-5;  // relative ELBO change per pass
  std::uint64_t seed = 0;
  std::string out_dir;     // empty = no artifacts written
  bool record_wall = false;  // false keeps trace.csv byte-reproducible
};

struct ExperimentResult {
  SolverTrace trace;
  double final_test_logloss = 0.0;
  std::string artifact_dir;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

struct SweepRow {
  double beta;
  int passes_to_converge;  // -1 if not converged
  bool diverged;
};

/// One run per grid entry (ascending). For PG methods the grid sets beta;
/// for baselines it sets alpha0.
std::vector<SweepRow> stepsize_sweep(const ExperimentConfig& config,
                                     const std::vector<double>& grid);

/// Divergence guard: an ELBO drop exceeding 10x its trailing standard
/// deviation on three consecutive passes (or any non-finite value).
bool elbo_divergence_guard(const std::vector<double>& pass_elbos);

bool is_pg_method(const std::string& method);
bool is_baseline_method(const std::string& method);

}  // namespace proxvi
