#pragma once

#include "proxvi/models.hpp"

#include <string>
#include <vector>

namespace proxvi {

struct Corpus {
  int vocab_size = 0;
  int num_topics = 0;  // topic count declared in the file header
  std::vector<Eigen::VectorXi> documents;
};

/// Format: header "N_vocab K_topics", then one document per line as
/// whitespace-separated "word_index:count" pairs.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

/// Dense CSV, N rows x K columns.
Matrix load_beta_csv(const std::string& path, int vocab, int topics);
void save_beta_csv(const Matrix& beta, const std::string& path);

struct CorpusSplit {
  std::vector<Eigen::VectorXi> train;
  std::vector<Eigen::VectorXi> test_first_half;
  std::vector<Eigen::VectorXi> test_second_half;
};

/// Seeded 50/50 document split; each test document's token multiset is
/// partitioned into the two halves.
CorpusSplit split_corpus(const Corpus& corpus, double train_fraction,
                         std::uint64_t seed);

enum class CtmVariant { Full, MeanField };

struct CtmDocPosterior {
  Vector mean;
  Matrix cov;
};

struct CtmTraceRow {
  int pass;
  double stochastic_elbo;  // Monte Carlo f estimates plus exact KL terms
};

struct CtmFitOptions {
  CtmVariant variant = CtmVariant::Full;
  double beta_step = 0.001;
  int minibatch_docs = 2;
  int samples = 10;
  std::uint64_t seed = 0;
  int passes = 10;
};

struct CtmFit {
  std::vector<CtmDocPosterior> posteriors;
  std::vector<CtmTraceRow> trace;
  bool diverged = false;
  int repair_events = 0;  // precision eigen-floors after an indefinite update
};

/// Per-document PG-SVI with Gaussian KL divergence and score-function
/// gradients; documents are independent.
CtmFit fit_ctm(const std::vector<Eigen::VectorXi>& documents,
               const Matrix& beta, const Vector& prior_mean,
               const SymmetricMatrix& prior_cov, const CtmFitOptions& opts);

/// Average per-word held-out log-likelihood (natural log) of the counts in
/// y2 under posterior q; Monte Carlo with S_eval draws, count-weighted.
double heldout_loglik(const CtmDocPosterior& q, const Matrix& beta,
                      const Eigen::VectorXi& y2, int s_eval,
                      std::uint64_t seed);

/// Synthetic corpus drawn from the generative model; also returns beta.
struct SyntheticCtm {
  Corpus corpus;
  Matrix beta;
  Vector prior_mean;
  Matrix prior_cov;
};
SyntheticCtm generate_ctm_corpus(int vocab, int topics, int num_docs,
                                 int words_per_doc, std::uint64_t seed);

}  // namespace proxvi
