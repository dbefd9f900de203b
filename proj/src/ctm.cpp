#include "proxvi/ctm.hpp"

#include "proxvi/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace proxvi {

namespace {

[[noreturn]] void corpus_error(const std::string& path, int line,
                               const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) corpus_error(path, 1, "missing header");
  ++line_no;
  {
    std::istringstream hs(line);
    if (!(hs >> corpus.vocab_size >> corpus.num_topics) ||
        corpus.vocab_size < 1 || corpus.num_topics < 1) {
      corpus_error(path, line_no, "header must be 'N_vocab K_topics'");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Eigen::VectorXi doc = Eigen::VectorXi::Zero(corpus.vocab_size);
    std::istringstream ls(line);
    std::string token;
    while (ls >> token) {
      auto colon = token.find(':');
      if (colon == std::string::npos) {
        corpus_error(path, line_no, "expected word:count, got '" + token + "'");
      }
      int word = -1, count = -1;
      try {
        word = std::stoi(token.substr(0, colon));
        count = std::stoi(token.substr(colon + 1));
      } catch (const std::exception&) {
        corpus_error(path, line_no, "malformed pair '" + token + "'");
      }
      if (word < 0 || word >= corpus.vocab_size) {
        corpus_error(path, line_no,
                     "word index " + std::to_string(word) + " out of range");
      }
      if (count < 0) corpus_error(path, line_no, "negative count");
      doc(word) += count;
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << corpus.vocab_size << ' ' << corpus.num_topics << '\n';
  for (const auto& doc : corpus.documents) {
    bool first = true;
    for (int n = 0; n < doc.size(); ++n) {
      if (doc(n) == 0) continue;
      if (!first) out << ' ';
      out << n << ':' << doc(n);
      first = false;
    }
    out << '\n';
  }
}

Matrix load_beta_csv(const std::string& path, int vocab, int topics) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open beta file: " + path);
  Matrix beta(vocab, topics);
  std::string line;
  for (int n = 0; n < vocab; ++n) {
    if (!std::getline(in, line)) {
      corpus_error(path, n + 1, "expected " + std::to_string(vocab) + " rows");
    }
    std::istringstream ls(line);
    std::string cell;
    for (int k = 0; k < topics; ++k) {
      if (!std::getline(ls, cell, ',')) {
        corpus_error(path, n + 1,
                     "expected " + std::to_string(topics) + " columns");
      }
      try {
        beta(n, k) = std::stod(cell);
      } catch (const std::exception&) {
        corpus_error(path, n + 1, "malformed value '" + cell + "'");
      }
    }
  }
  return beta;
}

void save_beta_csv(const Matrix& beta, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write beta file: " + path);
  out.precision(17);
  for (int n = 0; n < beta.rows(); ++n) {
    for (int k = 0; k < beta.cols(); ++k) {
      if (k) out << ',';
      out << beta(n, k);
    }
    out << '\n';
  }
}

CorpusSplit split_corpus(const Corpus& corpus, double train_fraction,
                         std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw std::invalid_argument("split_corpus: train_fraction in (0, 1)");
  }
  const int d = static_cast<int>(corpus.documents.size());
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  CounterRng rng(seed, 0x73706c6974ULL);
  for (int i = d - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  const int n_train = std::max(1, static_cast<int>(train_fraction * d));
  CorpusSplit split;
  for (int i = 0; i < d; ++i) {
    const Eigen::VectorXi& doc = corpus.documents[order[i]];
    if (i < n_train) {
      split.train.push_back(doc);
      continue;
    }
    Eigen::VectorXi h1 = Eigen::VectorXi::Zero(doc.size());
    Eigen::VectorXi h2 = Eigen::VectorXi::Zero(doc.size());
    for (int n = 0; n < doc.size(); ++n) {
      for (int c = 0; c < doc(n); ++c) {
        if (rng.next_u64() & 1) {
          ++h2(n);
        } else {
          ++h1(n);
        }
      }
    }
    split.test_first_half.push_back(std::move(h1));
    split.test_second_half.push_back(std::move(h2));
  }
  return split;
}

namespace {

// Symmetrize and, if needed, floor eigenvalues so the matrix is SPD.
// Returns true when a repair was necessary.
bool make_spd(Matrix& a, double floor) {
  a = 0.5 * (a + a.transpose()).eval();
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  Vector vals = es.eigenvalues().cwiseMax(floor);
  a = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
  a = 0.5 * (a + a.transpose()).eval();
  return true;
}

Matrix spd_inverse(const Matrix& a) {
  return SymmetricMatrix(a).mat().llt().solve(
      Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace

CtmFit fit_ctm(const std::vector<Eigen::VectorXi>& documents,
               const Matrix& beta, const Vector& prior_mean,
               const SymmetricMatrix& prior_cov, const CtmFitOptions& opts) {
  const int d = static_cast<int>(documents.size());
  if (d == 0) throw std::invalid_argument("fit_ctm: no documents");
  if (opts.beta_step <= 0.0) throw std::invalid_argument("fit_ctm: beta_step > 0");
  if (opts.minibatch_docs < 1 || opts.minibatch_docs > d) {
    throw std::invalid_argument("fit_ctm: minibatch_docs in [1, D]");
  }
  if (opts.samples < 2) throw std::invalid_argument("fit_ctm: samples >= 2");
  const int k_topics = static_cast<int>(prior_mean.size());

  std::vector<CtmModel> models;
  models.reserve(d);
  for (const auto& doc : documents) {
    models.emplace_back(beta, prior_mean, prior_cov, doc);
  }

  const Matrix prior_prec = spd_inverse(prior_cov.mat());
  const Vector prior_prec_mu = prior_prec * prior_mean;
  const double r = 1.0 / (1.0 + opts.beta_step);

  CtmFit fit;
  fit.posteriors.resize(d);
  for (auto& q : fit.posteriors) {
    q.mean = prior_mean;
    q.cov = opts.variant == CtmVariant::Full
                ? prior_cov.mat()
                : Matrix(prior_cov.diagonal().asDiagonal());
  }

  // Stochastic ELBO with a fixed evaluation seed so traces are comparable.
  auto stochastic_elbo = [&]() {
    double elbo = 0.0;
    for (int doc = 0; doc < d; ++doc) {
      const CtmDocPosterior& q = fit.posteriors[doc];
      GaussianVariational qv =
          GaussianVariational::full(q.mean, SymmetricMatrix(q.cov));
      CtmGradient g = ctm_difficult_grads(
          models[doc], qv, opts.samples,
          CounterRng::mix(opts.seed ^ 0x6374656c626fULL) + doc);
      elbo -= g.value;
      elbo -= kl_gaussian(q.mean, SymmetricMatrix(q.cov), prior_mean, prior_cov);
    }
    return elbo;
  };
  fit.trace.push_back({0, stochastic_elbo()});

  const int steps_per_pass = (d + opts.minibatch_docs - 1) / opts.minibatch_docs;
  std::uint64_t step_counter = 0;
  for (int pass = 0; pass < opts.passes; ++pass) {
    for (int step = 0; step < steps_per_pass; ++step) {
      CounterRng pick(opts.seed, CounterRng::mix(step_counter) ^ 0x646f6373ULL);
      for (int b = 0; b < opts.minibatch_docs; ++b) {
        const int doc = static_cast<int>(pick.next_below(d));
        CtmDocPosterior& q = fit.posteriors[doc];
        GaussianVariational qv = GaussianVariational::full(
            q.mean, SymmetricMatrix(q.cov));
        const std::uint64_t grad_seed =
            CounterRng::mix(opts.seed ^ CounterRng::mix(step_counter * 64 + b));
        CtmGradient g =
            ctm_difficult_grads(models[doc], qv, opts.samples, grad_seed);

        if (opts.variant == CtmVariant::Full) {
          const Matrix v_prec = spd_inverse(q.cov);
          Matrix g_sym = 0.5 * (g.grad_cov + g.grad_cov.transpose());
          Matrix prec_new = r * v_prec + (1.0 - r) * (prior_prec + 2.0 * g_sym);
          if (make_spd(prec_new, 1e-8)) ++fit.repair_events;
          Matrix mean_lhs = (1.0 - r) * prior_prec + r * v_prec;
          Vector mean_rhs = (1.0 - r) * (prior_prec_mu - g.grad_mean) +
                            r * (v_prec * q.mean);
          q.mean = SymmetricMatrix(mean_lhs).mat().llt().solve(mean_rhs);
          q.cov = spd_inverse(prec_new);
        } else {
          Vector p = q.cov.diagonal().cwiseInverse();
          Vector p_new = r * p +
                         (1.0 - r) * (prior_prec.diagonal() +
                                      2.0 * g.grad_cov.diagonal());
          for (int i = 0; i < k_topics; ++i) {
            if (p_new(i) < 1e-8) {
              p_new(i) = 1e-8;
              ++fit.repair_events;
            }
          }
          Matrix mean_lhs = (1.0 - r) * prior_prec;
          mean_lhs.diagonal() += r * p;
          Vector mean_rhs = (1.0 - r) * (prior_prec_mu - g.grad_mean) +
                            r * p.cwiseProduct(q.mean);
          q.mean = SymmetricMatrix(mean_lhs).mat().llt().solve(mean_rhs);
          q.cov = Matrix(p_new.cwiseInverse().asDiagonal());
        }
        if (!q.mean.allFinite() || !q.cov.allFinite()) {
          fit.diverged = true;
          return fit;
        }
      }
      ++step_counter;
    }

    const double elbo = stochastic_elbo();
    if (!std::isfinite(elbo)) {
      fit.diverged = true;
      return fit;
    }
    fit.trace.push_back({pass + 1, elbo});
  }
  return fit;
}

double heldout_loglik(const CtmDocPosterior& q, const Matrix& beta,
                      const Eigen::VectorXi& y2, int s_eval,
                      std::uint64_t seed) {
  if (s_eval < 100) throw std::invalid_argument("heldout_loglik: s_eval >= 100");
  const long total = y2.sum();
  if (total <= 0) {
    throw std::invalid_argument("heldout_loglik: empty held-out half");
  }
  const int k = static_cast<int>(q.mean.size());
  Matrix lower = Matrix(q.cov).llt().matrixL();
  Vector word_probs = Vector::Zero(beta.rows());
  CounterRng rng(seed, 0x6865726f6cULL);
  Vector eps(k);
  for (int s = 0; s < s_eval; ++s) {
    for (int i = 0; i < k; ++i) eps(i) = rng.next_normal();
    Vector z = q.mean + lower * eps;
    const double zmax = z.maxCoeff();
    Vector theta = (z.array() - zmax).exp();
    theta /= theta.sum();
    word_probs += beta * theta;
  }
  word_probs /= static_cast<double>(s_eval);
  double ll = 0.0;
  for (int n = 0; n < y2.size(); ++n) {
    if (y2(n) == 0) continue;
    ll += y2(n) * std::log(std::max(word_probs(n), 1e-300));
  }
  return ll / static_cast<double>(total);
}

SyntheticCtm generate_ctm_corpus(int vocab, int topics, int num_docs,
                                 int words_per_doc, std::uint64_t seed) {
  if (vocab < 2 || topics < 2 || num_docs < 1 || words_per_doc < 1) {
    throw std::invalid_argument("generate_ctm_corpus: bad sizes");
  }
  CounterRng rng(seed, 0x67656e63746dULL);

  SyntheticCtm out;
  out.beta = Matrix(vocab, topics);
  for (int k = 0; k < topics; ++k) {
    double sum = 0.0;
    for (int n = 0; n < vocab; ++n) {
      // Exponential draws normalized to a Dirichlet(1,...,1) column.
      double e = -std::log(rng.next_uniform());
      out.beta(n, k) = e;
      sum += e;
    }
    out.beta.col(k) /= sum;
  }

  out.prior_mean = Vector::Zero(topics);
  out.prior_cov = Matrix::Constant(topics, topics, 0.5);
  out.prior_cov.diagonal().setConstant(1.0);
  Matrix lower = out.prior_cov.llt().matrixL();

  out.corpus.vocab_size = vocab;
  out.corpus.num_topics = topics;
  Vector eps(topics);
  for (int d = 0; d < num_docs; ++d) {
    for (int i = 0; i < topics; ++i) eps(i) = rng.next_normal();
    Vector z = out.prior_mean + lower * eps;
    const double zmax = z.maxCoeff();
    Vector theta = (z.array() - zmax).exp();
    theta /= theta.sum();
    Vector word_probs = out.beta * theta;
    Eigen::VectorXi doc = Eigen::VectorXi::Zero(vocab);
    for (int w = 0; w < words_per_doc; ++w) {
      double u = rng.next_uniform();
      double acc = 0.0;
      int pick = vocab - 1;
      for (int n = 0; n < vocab; ++n) {
        acc += word_probs(n);
        if (u <= acc) {
          pick = n;
          break;
        }
      }
      ++doc(pick);
    }
    out.corpus.documents.push_back(std::move(doc));
  }
  return out;
}

}  // namespace proxvi
