#pragma once

#include "proxvi/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace proxvi {

struct DatasetBundle {
  Matrix x;   // standardized features
  Vector y;   // labels in {-1, +1}
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  Vector feature_mean;  // standardization statistics (train rows only)
  Vector feature_std;
  bool labels_remapped = false;  // 0/1 input auto-mapped to -1/+1

  int num_examples() const { return static_cast<int>(x.rows()); }
  int num_features() const { return static_cast<int>(x.cols()); }
  Matrix train_x() const;
  Vector train_y() const;
  Matrix test_x() const;
  Vector test_y() const;
};

enum class DatasetFormat { Csv, Svmlight };

struct SplitSpec {
  int train_size = 0;           // 0 means use fraction instead
  double train_fraction = 0.8;  // used when train_size == 0
  std::uint64_t seed = 0;
  bool shuffle = true;
};

/// CSV rows are "feature,...,feature,label"; svmlight rows are
/// "label idx:val ...". Labels must be in {-1, +1, 0, 1}; 0/1 are mapped to
/// -1/+1. Features are standardized with train-row statistics only.
DatasetBundle load_dataset(const std::string& path, DatasetFormat format,
                           const SplitSpec& split);

/// FNV-1a 64-bit over the file bytes, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(const std::string& bytes);
std::string file_checksum(const std::string& path);

struct RemoteDataset {
  std::string name;
  std::string host;   // e.g. "localhost"
  int port = 80;
  std::string remote_path;
  std::string checksum;  // expected fnv1a64 hex; empty = record on first fetch
};

/// Returns the cached file path, downloading if absent. A cached file with a
/// mismatching checksum is renamed to <file>.quarantine and an error thrown.
/// cache_dir empty -> $PROXVI_CACHE, else ~/.cache/proxvi.
std::string fetch_dataset(const RemoteDataset& spec, std::string cache_dir = "");

std::string default_cache_dir();

/// Synthetic GP-classification data: z ~ N(0, K(X)), y = +1 with probability
/// sigmoid(z). clusters == 0 draws X ~ N(0, I_d); clusters > 0 draws rows
/// around that many N(0, I_d) centers with within-cluster std 0.25, so that
/// nearby points stay kernel-correlated after standardization.
/// Deterministic given seed.
struct SyntheticClassification {
  Matrix x;
  Vector y;
  Vector latent;
};
SyntheticClassification generate_gp_classification(int n, int d,
                                                   const KernelConfig& cfg,
                                                   std::uint64_t seed,
                                                   int clusters = 0);

/// Synthetic stand-in with the given shapes (used where the source files are
/// unavailable); returns the bundle implied by the split.
DatasetBundle make_synthetic_bundle(int n, int d, int train_size,
                                    const KernelConfig& cfg,
                                    std::uint64_t seed, int clusters = 0);

void save_csv_dataset(const Matrix& x, const Vector& y,
                      const std::string& path);

}  // namespace proxvi
