#include "proxvi/experiment.hpp"

#include "proxvi/estimators.hpp"
#include "proxvi/rng.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace proxvi {

bool is_pg_method(const std::string& method) {
  return method == "pg" || method == "pg-mc" || method == "pg-svi";
}

bool is_baseline_method(const std::string& method) {
  return method == "gd" || method == "sgd" || method == "adagrad" ||
         method == "rmsprop" || method == "adadelta" || method == "adam";
}

namespace {

OptimizerKind kind_from_name(const std::string& method) {
  if (method == "gd") return OptimizerKind::GD;
  if (method == "sgd") return OptimizerKind::SGD;
  if (method == "adagrad") return OptimizerKind::ADAGRAD;
  if (method == "rmsprop") return OptimizerKind::RMSPROP;
  if (method == "adadelta") return OptimizerKind::ADADELTA;
  if (method == "adam") return OptimizerKind::ADAM;
  throw std::invalid_argument("unknown optimizer: " + method);
}

ModelSplit build_model(const ExperimentConfig& cfg, const Matrix& train_x,
                       const Vector& train_y) {
  auto kernel = std::make_shared<SymmetricMatrix>(se_kernel(train_x, cfg.kernel));
  return ModelSplit(cfg.dataset_name, Likelihood::BernoulliLogit, train_y,
                    kernel);
}

/// Baseline loop over lambda = (m, L): stochastic -ELBO gradients assembled
/// from per-example difficult terms plus the analytic KL-to-prior gradient.
SolverTrace run_baseline(const ExperimentConfig& cfg, const ModelSplit& model,
                         const Matrix& train_x,
                         const std::function<double(const GaussianVariational&)>&
                             logloss_fn,
                         GaussianVariational* q_out) {
  const int n = model.num_examples();
  const int m_batch = std::min(cfg.minibatch, n);
  if (m_batch < 1) throw std::invalid_argument("baseline: minibatch >= 1");
  const SymmetricMatrix& k_mat = model.prior_kernel();
  CholeskyFactor chol_k(k_mat);
  const Matrix k_inv = chol_k.solve(Matrix(Matrix::Identity(n, n)));

  OptimizerState opt(kind_from_name(cfg.method), n, cfg.hyper);
  opt.set_lambda(OptimizerState::pack(Vector::Zero(n), chol_k.lower()));

  const bool full_batch = cfg.method == "gd";
  const int batch = full_batch ? n : m_batch;
  const int iters_per_pass = (n + batch - 1) / batch;
  const double scale = static_cast<double>(n) / static_cast<double>(batch);

  SolverTrace trace;
  trace.seed = cfg.seed;

  auto t_start = std::chrono::steady_clock::now();
  auto wall_ms = [&]() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };
  auto current_q = [&]() {
    return GaussianVariational::full(opt.mean(),
                                     SymmetricMatrix(opt.covariance()));
  };
  auto eval_logloss = [&](const GaussianVariational& q) {
    return logloss_fn ? logloss_fn(q)
                      : std::numeric_limits<double>::quiet_NaN();
  };

  double elbo = model.elbo(current_q());
  trace.rows.push_back({0, 0, elbo, 0.0, 0.0, wall_ms(), {},
                        eval_logloss(current_q())});
  trace.final_elbo = elbo;
  if (cfg.passes == 0) {
    *q_out = current_q();
    return trace;
  }

  double prev_pass_elbo = elbo;
  const int max_iters = cfg.passes * iters_per_pass;
  for (int k = 0; k < max_iters; ++k) {
    Matrix v = opt.covariance();
    Vector mean = opt.mean();

    std::vector<int> picks;
    picks.reserve(batch);
    if (full_batch) {
      for (int i = 0; i < n; ++i) picks.push_back(i);
    } else {
      CounterRng pick(cfg.seed, CounterRng::mix(k) ^ 0xb5297a4d3f84d5b2ULL);
      for (int i = 0; i < batch; ++i) {
        picks.push_back(static_cast<int>(pick.next_below(n)));
      }
    }

    Vector g_m = Vector::Zero(n);
    Matrix g_v = Matrix::Zero(n, n);
    for (size_t i = 0; i < picks.size(); ++i) {
      const int ex = picks[i];
      const double v_n = std::max(v(ex, ex), 1e-12);
      double d_mean, d_var;
      if (cfg.samples == 0) {
        DifficultTerm t = model.difficult_value_and_grads(ex, mean(ex), v_n);
        d_mean = t.d_mean;
        d_var = t.d_var;
      } else {
        GradientEstimate g = score_function_estimate(
            [&](double z) { return -model.log_lik(ex, z); }, mean(ex), v_n,
            cfg.samples, cfg.seed,
            CounterRng::mix(k) + static_cast<std::uint64_t>(i));
        d_mean = g.gradient(0);
        d_var = g.gradient(1);
      }
      g_m(ex) += scale * d_mean;
      g_v(ex, ex) += scale * d_var;
    }
    // KL(q || N(0, K)) gradients.
    g_m += k_inv * mean;
    Matrix v_inv =
        v.selfadjointView<Eigen::Upper>().llt().solve(Matrix::Identity(n, n));
    g_v += 0.5 * (k_inv - v_inv);

    Vector g = chain_rule_to_cholesky(g_m, g_v, opt.cholesky_factor());
    const double gnorm = g.squaredNorm();
    if (!g.allFinite()) {
      trace.diverged = true;
      trace.rows.push_back({k + 1, (k + 1) / iters_per_pass,
                            std::numeric_limits<double>::quiet_NaN(), gnorm,
                            0.0, wall_ms(), picks});
      break;
    }
    opt.step(g);

    const bool pass_boundary = ((k + 1) % iters_per_pass == 0);
    const int pass = (k + 1) / iters_per_pass;
    if (pass_boundary) {
      elbo = model.elbo(current_q());
      trace.final_elbo = elbo;
      trace.rows.push_back({k + 1, pass, elbo, gnorm, 0.0, wall_ms(), picks,
                            eval_logloss(current_q())});
      if (!std::isfinite(elbo)) {
        trace.diverged = true;
        break;
      }
      double denom = std::max(std::abs(prev_pass_elbo), 1e-12);
      if (std::abs(elbo - prev_pass_elbo) / denom < cfg.threshold) {
        trace.converged = true;
        trace.passes_to_converge = pass;
        break;
      }
      prev_pass_elbo = elbo;
    }
  }
  *q_out = current_q();
  return trace;
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void write_artifacts(const ExperimentConfig& cfg, const ExperimentResult& res) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  {
    std::ofstream out(cfg.out_dir + "/trace.csv");
    out << "pass,iteration,elbo,test_logloss,grad_norm_sq,beta,wall_ms\n";
    for (const TraceRow& r : res.trace.rows) {
      out << r.pass << ',' << r.iteration << ',' << csv_num(r.elbo) << ','
          << csv_num(r.test_logloss) << ',' << csv_num(r.grad_norm_sq) << ','
          << csv_num(r.beta) << ','
          << csv_num(cfg.record_wall ? r.wall_ms : 0.0) << '\n';
    }
  }
  {
    std::ofstream out(cfg.out_dir + "/summary.csv");
    out << "converged,diverged,passes_to_converge,final_elbo,"
           "final_test_logloss,clamp_events,seed\n";
    out << (res.trace.converged ? 1 : 0) << ','
        << (res.trace.diverged ? 1 : 0) << ',' << res.trace.passes_to_converge
        << ',' << csv_num(res.trace.final_elbo) << ','
        << csv_num(res.final_test_logloss) << ',' << res.trace.clamp_events
        << ',' << res.trace.seed << '\n';
  }
  {
    std::ofstream out(cfg.out_dir + "/config.txt");
    out << "dataset=" << cfg.dataset_name << '\n'
        << "method=" << cfg.method << '\n'
        << "log_length_scale=" << csv_num(cfg.kernel.log_length_scale) << '\n'
        << "log_signal_std=" << csv_num(cfg.kernel.log_signal_std) << '\n'
        << "jitter=" << csv_num(cfg.kernel.jitter) << '\n'
        << "beta=" << csv_num(cfg.beta) << '\n'
        << "alpha0=" << csv_num(cfg.hyper.alpha0) << '\n'
        << "kappa=" << csv_num(cfg.hyper.kappa) << '\n'
        << "rho=" << csv_num(cfg.hyper.rho) << '\n'
        << "rho_mu=" << csv_num(cfg.hyper.rho_mu) << '\n'
        << "rho_s=" << csv_num(cfg.hyper.rho_s) << '\n'
        << "minibatch=" << cfg.minibatch << '\n'
        << "samples=" << cfg.samples << '\n'
        << "passes=" << cfg.passes << '\n'
        << "threshold=" << csv_num(cfg.threshold) << '\n'
        << "seed=" << cfg.seed << '\n'
        << "train_size=" << cfg.data.train_indices.size() << '\n'
        << "test_size=" << cfg.data.test_indices.size() << '\n';
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const Matrix train_x = cfg.data.train_x();
  const Vector train_y = cfg.data.train_y();
  const Matrix test_x = cfg.data.test_x();
  const Vector test_y = cfg.data.test_y();
  ModelSplit model = build_model(cfg, train_x, train_y);

  std::function<double(const GaussianVariational&)> logloss_fn;
  if (test_x.rows() > 0) {
    logloss_fn = [&, test_x, test_y](const GaussianVariational& q) {
      return predictive_logloss(model, q, train_x, test_x, test_y, cfg.kernel)
          .mean_logloss;
    };
  }

  ExperimentResult res;
  if (is_pg_method(cfg.method)) {
    SolverOptions opts;
    opts.method = SolverMethod::PgSviCompact;
    opts.schedule = StepSchedule::constant(cfg.beta);
    if (cfg.method == "pg-svi") {
      opts.minibatch = std::min(cfg.minibatch, model.num_examples());
      opts.samples = cfg.samples;
    } else {
      opts.minibatch = model.num_examples();
      opts.with_replacement = false;
      opts.samples = cfg.method == "pg-mc" ? cfg.samples : 0;
    }
    opts.seed = cfg.seed;
    opts.max_passes = cfg.passes;
    opts.elbo_delta_threshold = cfg.threshold;
    opts.logloss_fn = logloss_fn;
    SolverResult sr = run_solver(model, opts);
    res.trace = std::move(sr.trace);
    res.final_test_logloss =
        logloss_fn ? logloss_fn(sr.q) : std::numeric_limits<double>::quiet_NaN();
  } else if (is_baseline_method(cfg.method)) {
    GaussianVariational q = GaussianVariational::full(
        Vector::Zero(1), SymmetricMatrix(Matrix::Identity(1, 1)));
    res.trace = run_baseline(cfg, model, train_x, logloss_fn, &q);
    res.final_test_logloss =
        logloss_fn ? logloss_fn(q) : std::numeric_limits<double>::quiet_NaN();
  } else {
    throw std::invalid_argument("unknown method: " + cfg.method);
  }

  // Post-hoc guard: a sustained ELBO collapse counts as divergence even when
  // every value stayed finite.
  std::vector<double> pass_elbos;
  for (const TraceRow& r : res.trace.rows) pass_elbos.push_back(r.elbo);
  if (!res.trace.diverged && elbo_divergence_guard(pass_elbos)) {
    res.trace.diverged = true;
    res.trace.converged = false;
    res.trace.passes_to_converge = -1;
  }

  if (!cfg.out_dir.empty()) {
    write_artifacts(cfg, res);
    res.artifact_dir = cfg.out_dir;
  }
  return res;
}

bool elbo_divergence_guard(const std::vector<double>& pass_elbos) {
  const size_t n = pass_elbos.size();
  for (double e : pass_elbos) {
    if (!std::isfinite(e)) return true;
  }
  int consecutive = 0;
  for (size_t i = 1; i < n; ++i) {
    // Trailing standard deviation of the preceding ELBO increments.
    const size_t lo = i > 10 ? i - 10 : 1;
    double mean = 0.0;
    int cnt = 0;
    for (size_t j = lo; j < i; ++j) {
      mean += pass_elbos[j] - pass_elbos[j - 1];
      ++cnt;
    }
    double sd;
    if (cnt >= 2) {
      mean /= cnt;
      double ss = 0.0;
      for (size_t j = lo; j < i; ++j) {
        double d = (pass_elbos[j] - pass_elbos[j - 1]) - mean;
        ss += d * d;
      }
      sd = std::sqrt(ss / (cnt - 1));
    } else {
      sd = std::max(1e-8, 1e-8 * std::abs(pass_elbos[i - 1]));
    }
    const double drop = pass_elbos[i - 1] - pass_elbos[i];
    if (drop > 10.0 * std::max(sd, 1e-12)) {
      if (++consecutive >= 3) return true;
    } else {
      consecutive = 0;
    }
  }
  return false;
}

std::vector<SweepRow> stepsize_sweep(const ExperimentConfig& config,
                                     const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("stepsize_sweep: empty grid");
  for (size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) {
      throw std::invalid_argument("stepsize_sweep: grid must ascend");
    }
  }
  std::vector<SweepRow> rows;
  for (double b : grid) {
    ExperimentConfig cfg = config;
    cfg.out_dir.clear();
    if (is_pg_method(cfg.method)) {
      cfg.beta = b;
    } else {
      cfg.hyper.alpha0 = b;
    }
    SweepRow row{b, -1, false};
    try {
      ExperimentResult res = run_experiment(cfg);
      row.diverged = res.trace.diverged;
      row.passes_to_converge = res.trace.passes_to_converge;
    } catch (const NotPositiveDefiniteError&) {
      row.diverged = true;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace proxvi
