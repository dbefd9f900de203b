#include "proxvi/ctm.hpp"
#include "proxvi/divergences.hpp"
#include "proxvi/experiment.hpp"
#include "proxvi/gauss_hermite.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace proxvi;

struct DatasetArgs {
  std::string dataset = "synthetic";
  std::uint64_t seed = 0;
  double log_length_scale = 1.0;
  double log_signal_std = 2.5;
  bool kernel_given = false;
};

void add_kernel_flags(CLI::App* cmd, DatasetArgs* a) {
  cmd->add_option("--dataset", a->dataset,
                  "Dataset: csv/svmlight path, or sonar | ionosphere | usps | "
                  "synthetic[:N:d:train] (synthetic GP draws at the named "
                  "shapes; source files are not bundled)");
  cmd->add_option("--log-length-scale", a->log_length_scale,
                  "Kernel log length-scale")
      ->each([a](const std::string&) { a->kernel_given = true; });
  cmd->add_option("--log-signal-std", a->log_signal_std,
                  "Kernel log signal std")
      ->each([a](const std::string&) { a->kernel_given = true; });
}

struct NamedShape {
  int n, d, train;
  double log_l, log_s;
};

bool named_shape(const std::string& name, NamedShape* out) {
  if (name == "sonar") {
    *out = {208, 60, 165, -1.0, 6.0};
    return true;
  }
  if (name == "ionosphere") {
    *out = {351, 34, 280, 1.0, 2.5};
    return true;
  }
  if (name == "usps") {
    *out = {1540, 256, 884, 2.5, 5.0};
    return true;
  }
  return false;
}

DatasetBundle resolve_dataset(const DatasetArgs& a, KernelConfig* kernel) {
  kernel->log_length_scale = a.log_length_scale;
  kernel->log_signal_std = a.log_signal_std;

  NamedShape shape;
  if (named_shape(a.dataset, &shape)) {
    if (!a.kernel_given) {
      kernel->log_length_scale = shape.log_l;
      kernel->log_signal_std = shape.log_s;
    }
    KernelConfig gen;
    gen.log_length_scale = shape.log_l;
    gen.log_signal_std = shape.log_s;
    return make_synthetic_bundle(shape.n, shape.d, shape.train, gen, a.seed,
                                 /*clusters=*/8);
  }
  if (a.dataset.rfind("synthetic", 0) == 0) {
    int n = 100, d = 5, train = 80;
    if (a.dataset.size() > 9) {
      if (std::sscanf(a.dataset.c_str(), "synthetic:%d:%d:%d", &n, &d,
                      &train) != 3) {
        throw std::runtime_error("expected synthetic:N:d:train");
      }
    }
    return make_synthetic_bundle(n, d, train, *kernel, a.seed);
  }
  DatasetFormat fmt = a.dataset.size() > 4 &&
                              a.dataset.substr(a.dataset.size() - 4) == ".svm"
                          ? DatasetFormat::Svmlight
                          : DatasetFormat::Csv;
  SplitSpec split;
  split.seed = a.seed;
  return load_dataset(a.dataset, fmt, split);
}

int run_check() {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << '\n';
    if (!ok) ++failures;
  };

  // Quadrature: E[z^2] for z ~ N(0.5, 2.0).
  double ez2 = gh64().expect([](double z) { return z * z; }, 0.5, 2.0);
  check("gauss-hermite moment", std::abs(ez2 - 2.25) < 1e-10);

  // Compact / oracle single-step agreement on a random instance.
  KernelConfig cfg;
  cfg.log_signal_std = 0.3;
  SyntheticClassification data = generate_gp_classification(8, 3, cfg, 7);
  auto kernel = std::make_shared<SymmetricMatrix>(se_kernel(data.x, cfg));
  ModelSplit model("check", Likelihood::BernoulliLogit, data.y, kernel);
  GpSolverState state = GpSolverState::init(8, 1e-6);
  FullOracleState full;
  full.m = Vector::Zero(8);
  full.v = GaussianVariational::compact(state.m, state.gamma_tilde, kernel)
               .covariance();
  double max_err = 0.0;
  for (int k = 0; k < 5; ++k) {
    int ex = k % 8;
    double v_n = gp_state_diag(state, *kernel, ex);
    DifficultTerm t = model.difficult_value_and_grads(ex, state.m(ex), v_n);
    Vector av = Vector::Zero(8), gv = Vector::Zero(8);
    av(ex) = 8.0 * t.d_mean;
    gv(ex) = 16.0 * t.d_var;
    GpStepOptions so;
    so.exact_bk = true;
    state = pg_svi_gp_step_multi(state, *kernel, av, gv, 0.25, so);
    full = full_oracle_step(full, *kernel, av, gv, 0.25);
    max_err = std::max(max_err, (state.m - full.m).cwiseAbs().maxCoeff());
  }
  check("compact/oracle mean agreement", max_err < 1e-8);

  // Divergence decomposition.
  GaussianParams p{Vector::Constant(2, 0.3),
                   Matrix::Identity(2, 2) * 1.5};
  GaussianParams pp{Vector::Zero(2), Matrix::Identity(2, 2)};
  double sym = divergence({DivergenceKind::SymmetricKl}, p, pp).value;
  double fwd = divergence({DivergenceKind::KlForward}, p, pp).value;
  double rev = divergence({DivergenceKind::KlReverse}, p, pp).value;
  check("symmetric KL decomposition", std::abs(sym - fwd - rev) < 1e-12);

  std::cout << (failures == 0 ? "all checks passed" : "CHECKS FAILED") << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal-gradient stochastic variational inference toolkit"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "Fit one model and write artifacts");
  DatasetArgs fit_data;
  std::string method = "pg-svi", out_dir = "out", preset;
  double beta = 0.0, beta_times_n = 0.0, threshold = 1e-5;
  int minibatch = 5, samples = 500, passes = 100;
  std::uint64_t seed = 0;
  bool use_mc = false, use_quadrature = false;
  add_kernel_flags(fit, &fit_data);
  fit->add_option("--method", method,
                  "pg | pg-mc | pg-svi | gd | sgd | adagrad | rmsprop | "
                  "adadelta | adam");
  fit->add_option("--beta", beta, "PG-family step size (baselines: alpha0)");
  fit->add_option("--beta-times-n", beta_times_n,
                  "Step size specified as beta * N_train");
  fit->add_option("--minibatch", minibatch, "Mini-batch size M");
  fit->add_option("--samples", samples, "MC samples S (0 = quadrature)");
  fit->add_option("--passes", passes, "Pass budget");
  fit->add_option("--seed", seed, "Random seed");
  fit->add_option("--threshold", threshold, "Relative ELBO change threshold");
  fit->add_option("--out", out_dir, "Artifact directory");
  fit->add_option("--preset", preset,
                  "Step-size table row, e.g. adam/ionosphere or ionosphere "
                  "(PG-SVI)");
  fit->add_flag("--mc", use_mc, "Force Monte Carlo gradients");
  fit->add_flag("--quadrature", use_quadrature, "Force quadrature gradients");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "Step-size sweep");
  DatasetArgs sweep_data;
  std::vector<double> grid;
  add_kernel_flags(sweep, &sweep_data);
  sweep->add_option("--method", method);
  sweep->add_option("--grid", grid, "Ascending step-size grid")->required();
  sweep->add_option("--minibatch", minibatch);
  sweep->add_option("--samples", samples);
  sweep->add_option("--passes", passes);
  sweep->add_option("--seed", seed);
  sweep->add_option("--threshold", threshold);
  sweep->add_option("--out", out_dir);

  // ---- bench ----
  auto* bench = app.add_subcommand(
      "bench", "Run several methods at their preset step sizes");
  DatasetArgs bench_data;
  std::vector<std::string> methods = {"pg-svi", "adam",     "adadelta",
                                      "rmsprop", "adagrad", "sgd"};
  add_kernel_flags(bench, &bench_data);
  bench->add_option("--methods", methods, "Methods to compare");
  bench->add_option("--minibatch", minibatch);
  bench->add_option("--samples", samples);
  bench->add_option("--passes", passes);
  bench->add_option("--seed", seed);
  bench->add_option("--threshold", threshold);
  bench->add_option("--out", out_dir);

  // ---- ctm-fit ----
  auto* ctm_fit_cmd = app.add_subcommand("ctm-fit", "Fit CTM posteriors");
  std::string corpus_path, beta_path, variant = "full";
  double beta_step = 0.001;
  int m_docs = 2, ctm_samples = 10, ctm_passes = 10;
  ctm_fit_cmd->add_option("--dataset", corpus_path,
                          "Corpus file (or 'synthetic')");
  ctm_fit_cmd->add_option("--beta-file", beta_path, "Topic-word CSV");
  ctm_fit_cmd->add_option("--variant", variant, "full | mean-field");
  ctm_fit_cmd->add_option("--beta", beta_step, "Fixed step size");
  ctm_fit_cmd->add_option("--minibatch", m_docs, "Documents per mini-batch");
  ctm_fit_cmd->add_option("--samples", ctm_samples, "Score-function samples");
  ctm_fit_cmd->add_option("--passes", ctm_passes);
  ctm_fit_cmd->add_option("--seed", seed);
  ctm_fit_cmd->add_option("--out", out_dir);

  // ---- ctm-eval ----
  auto* ctm_eval_cmd = app.add_subcommand(
      "ctm-eval", "Split corpus, fit on first halves, report held-out "
                  "log-likelihood of second halves");
  int s_eval = 10000;
  ctm_eval_cmd->add_option("--dataset", corpus_path,
                           "Corpus file (or 'synthetic')");
  ctm_eval_cmd->add_option("--beta-file", beta_path);
  ctm_eval_cmd->add_option("--variant", variant);
  ctm_eval_cmd->add_option("--beta", beta_step);
  ctm_eval_cmd->add_option("--minibatch", m_docs);
  ctm_eval_cmd->add_option("--samples", ctm_samples);
  ctm_eval_cmd->add_option("--passes", ctm_passes);
  ctm_eval_cmd->add_option("--seed", seed);
  ctm_eval_cmd->add_option("--eval-samples", s_eval, "Draws for Eq.-20 MC");
  ctm_eval_cmd->add_option("--out", out_dir);

  // ---- fetch-data ----
  auto* fetch = app.add_subcommand("fetch-data", "Download into the cache");
  RemoteDataset remote;
  std::string cache_dir;
  fetch->add_option("--dataset", remote.name, "Cache file name")->required();
  fetch->add_option("--host", remote.host)->required();
  fetch->add_option("--port", remote.port);
  fetch->add_option("--path", remote.remote_path)->required();
  fetch->add_option("--checksum", remote.checksum, "Expected fnv1a64 hex");
  fetch->add_option("--cache", cache_dir,
                    "Cache directory (default $PROXVI_CACHE)");

  // ---- check ----
  app.add_subcommand("check", "Run the built-in invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("check")) return run_check();

    if (app.got_subcommand("fetch-data")) {
      std::string path = fetch_dataset(remote, cache_dir);
      std::cout << path << '\n';
      std::cout << "checksum=" << file_checksum(path) << '\n';
      return 0;
    }

    if (app.got_subcommand("fit") || app.got_subcommand("sweep") ||
        app.got_subcommand("bench")) {
      DatasetArgs* da = app.got_subcommand("fit")     ? &fit_data
                        : app.got_subcommand("sweep") ? &sweep_data
                                                      : &bench_data;
      da->seed = seed;
      ExperimentConfig cfg;
      cfg.dataset_name = da->dataset;
      cfg.data = resolve_dataset(*da, &cfg.kernel);
      cfg.minibatch = minibatch;
      cfg.samples = use_quadrature ? 0 : samples;
      if (use_mc && cfg.samples == 0) cfg.samples = 500;
      cfg.passes = passes;
      cfg.threshold = threshold;
      cfg.seed = seed;
      const int n_train = static_cast<int>(cfg.data.train_indices.size());

      auto apply_preset = [&](const std::string& m) {
        if (preset.empty()) return;
        if (is_pg_method(m)) {
          auto bn = pg_svi_preset_beta_times_n(preset);
          if (!bn) throw std::runtime_error("unknown PG preset: " + preset);
          cfg.beta = *bn / n_train;
        } else {
          std::string key = preset.find('/') == std::string::npos
                                ? m + "/" + preset
                                : preset;
          auto hp = baseline_preset(key, n_train);
          if (!hp) throw std::runtime_error("unknown preset: " + key);
          cfg.hyper = *hp;
        }
      };

      if (app.got_subcommand("fit")) {
        cfg.method = method;
        if (beta_times_n > 0.0) beta = beta_times_n / n_train;
        if (beta > 0.0) {
          cfg.beta = beta;
          cfg.hyper.alpha0 = beta;
        }
        apply_preset(method);
        cfg.out_dir = out_dir;
        ExperimentResult res = run_experiment(cfg);
        std::cout << "converged=" << res.trace.converged
                  << " diverged=" << res.trace.diverged
                  << " passes=" << res.trace.passes_to_converge
                  << " elbo=" << res.trace.final_elbo
                  << " test_logloss=" << res.final_test_logloss << '\n';
        return res.trace.diverged ? 2 : 0;
      }

      if (app.got_subcommand("sweep")) {
        cfg.method = method;
        auto rows = stepsize_sweep(cfg, grid);
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir + "/sweep.csv");
        out << "beta,passes_to_converge,diverged\n";
        for (const auto& r : rows) {
          out << r.beta << ',' << r.passes_to_converge << ','
              << (r.diverged ? 1 : 0) << '\n';
          std::cout << "beta=" << r.beta << " passes=" << r.passes_to_converge
                    << " diverged=" << r.diverged << '\n';
        }
        return 0;
      }

      // bench
      for (const std::string& m : methods) {
        ExperimentConfig mc = cfg;
        mc.method = m;
        const std::string row = preset.empty() ? da->dataset : preset;
        if (is_pg_method(m)) {
          if (auto bn = pg_svi_preset_beta_times_n(row)) {
            mc.beta = *bn / n_train;
          }
        } else if (auto hp = baseline_preset(m + "/" + row, n_train)) {
          mc.hyper = *hp;
        }
        mc.out_dir = out_dir + "/" + m;
        ExperimentResult res = run_experiment(mc);
        std::cout << m << ": converged=" << res.trace.converged
                  << " passes=" << res.trace.passes_to_converge
                  << " elbo=" << res.trace.final_elbo
                  << " test_logloss=" << res.final_test_logloss << '\n';
      }
      return 0;
    }

    if (app.got_subcommand("ctm-fit") || app.got_subcommand("ctm-eval")) {
      SyntheticCtm syn;
      Corpus corpus;
      Matrix beta_mat;
      Vector mu;
      Matrix sigma;
      if (corpus_path.empty() || corpus_path == "synthetic") {
        syn = generate_ctm_corpus(20, 3, 40, 60, seed);
        corpus = syn.corpus;
        beta_mat = syn.beta;
        mu = syn.prior_mean;
        sigma = syn.prior_cov;
      } else {
        corpus = load_corpus(corpus_path);
        if (beta_path.empty()) {
          throw std::runtime_error("--beta-file required with a corpus file");
        }
        beta_mat = load_beta_csv(beta_path, corpus.vocab_size,
                                 corpus.num_topics);
        mu = Vector::Zero(corpus.num_topics);
        sigma = Matrix::Identity(corpus.num_topics, corpus.num_topics);
      }
      CtmFitOptions opts;
      opts.variant = variant == "mean-field" ? CtmVariant::MeanField
                                             : CtmVariant::Full;
      opts.beta_step = beta_step;
      opts.minibatch_docs = m_docs;
      opts.samples = ctm_samples;
      opts.seed = seed;
      opts.passes = ctm_passes;

      std::filesystem::create_directories(out_dir);
      if (app.got_subcommand("ctm-fit")) {
        CtmFit fit_res = fit_ctm(corpus.documents, beta_mat, mu,
                                 SymmetricMatrix(sigma), opts);
        std::ofstream out(out_dir + "/ctm_trace.csv");
        out << "pass,stochastic_elbo\n";
        for (const auto& r : fit_res.trace) {
          out << r.pass << ',' << r.stochastic_elbo << '\n';
        }
        std::cout << "diverged=" << fit_res.diverged
                  << " final_elbo=" << fit_res.trace.back().stochastic_elbo
                  << '\n';
        return fit_res.diverged ? 2 : 0;
      }

      CorpusSplit split = split_corpus(corpus, 0.5, seed);
      opts.minibatch_docs =
          std::min<int>(opts.minibatch_docs,
                        static_cast<int>(split.test_first_half.size()));
      CtmFit fit_res = fit_ctm(split.test_first_half, beta_mat, mu,
                               SymmetricMatrix(sigma), opts);
      std::ofstream out(out_dir + "/ctm_eval.csv");
      out << "doc,fitted_loglik,prior_loglik\n";
      double total_fit = 0.0, total_prior = 0.0;
      int evaluated = 0;
      CtmDocPosterior prior_q{mu, sigma};
      for (size_t dcc = 0; dcc < split.test_second_half.size(); ++dcc) {
        if (split.test_second_half[dcc].sum() == 0) continue;
        double lf = heldout_loglik(fit_res.posteriors[dcc], beta_mat,
                                   split.test_second_half[dcc], s_eval,
                                   seed + dcc);
        double lp = heldout_loglik(prior_q, beta_mat,
                                   split.test_second_half[dcc], s_eval,
                                   seed + dcc);
        out << dcc << ',' << lf << ',' << lp << '\n';
        total_fit += lf;
        total_prior += lp;
        ++evaluated;
      }
      std::cout << "docs=" << evaluated
                << " fitted=" << total_fit / std::max(1, evaluated)
                << " prior=" << total_prior / std::max(1, evaluated) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
