#include "proxvi/dataset.hpp"

#include "proxvi/rng.hpp"

#define CPPHTTPLIB_NO_EXCEPTIONS
#include "httplib.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace proxvi {

namespace {

[[noreturn]] void row_error(const std::string& path, int line,
                            const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

double map_label(double raw, const std::string& path, int line,
                 bool* remapped) {
  if (raw == -1.0 || raw == 1.0) return raw;
  if (raw == 0.0) {
    *remapped = true;
    return -1.0;
  }
  row_error(path, line, "label must be in {-1, +1, 0, 1}");
}

DatasetBundle assemble(Matrix x, Vector y, bool remapped,
                       const std::string& path, const SplitSpec& split) {
  const int n = static_cast<int>(x.rows());
  if (!x.allFinite()) {
    throw std::runtime_error(path + ": non-finite feature after ingestion");
  }
  int train_size = split.train_size > 0
                       ? split.train_size
                       : static_cast<int>(split.train_fraction * n);
  if (train_size < 1 || train_size >= n) {
    throw std::invalid_argument("split: train size out of range");
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  if (split.shuffle) {
    CounterRng rng(split.seed, 0x73706c6974ULL);
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
  }

  DatasetBundle b;
  b.x = std::move(x);
  b.y = std::move(y);
  b.labels_remapped = remapped;
  b.train_indices.assign(order.begin(), order.begin() + train_size);
  b.test_indices.assign(order.begin() + train_size, order.end());

  const int d = b.num_features();
  b.feature_mean = Vector::Zero(d);
  for (int i : b.train_indices) b.feature_mean += b.x.row(i).transpose();
  b.feature_mean /= static_cast<double>(train_size);
  b.feature_std = Vector::Zero(d);
  for (int i : b.train_indices) {
    Vector c = b.x.row(i).transpose() - b.feature_mean;
    b.feature_std += c.cwiseProduct(c);
  }
  b.feature_std = (b.feature_std / static_cast<double>(train_size)).cwiseSqrt();
  for (int j = 0; j < d; ++j) {
    if (b.feature_std(j) < 1e-12) b.feature_std(j) = 1.0;  // constant feature
  }
  b.x = (b.x.rowwise() - b.feature_mean.transpose()).array().rowwise() /
        b.feature_std.transpose().array();
  return b;
}

Matrix select_rows(const Matrix& x, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), x.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = x.row(idx[i]);
  return out;
}

Vector select_entries(const Vector& y, const std::vector<int>& idx) {
  Vector out(static_cast<int>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out(i) = y(idx[i]);
  return out;
}

}  // namespace

Matrix DatasetBundle::train_x() const { return select_rows(x, train_indices); }
Vector DatasetBundle::train_y() const { return select_entries(y, train_indices); }
Matrix DatasetBundle::test_x() const { return select_rows(x, test_indices); }
Vector DatasetBundle::test_y() const { return select_entries(y, test_indices); }

DatasetBundle load_dataset(const std::string& path, DatasetFormat format,
                           const SplitSpec& split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::vector<std::vector<double>> feature_rows;
  std::vector<double> labels;
  bool remapped = false;
  std::string line;
  int line_no = 0;
  int max_index = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (format == DatasetFormat::Csv) {
      std::vector<double> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) {
        try {
          cells.push_back(std::stod(cell));
        } catch (const std::exception&) {
          row_error(path, line_no, "malformed value '" + cell + "'");
        }
      }
      if (cells.size() < 2) row_error(path, line_no, "need features and label");
      if (!feature_rows.empty() &&
          cells.size() - 1 != feature_rows.front().size()) {
        row_error(path, line_no, "inconsistent column count");
      }
      labels.push_back(map_label(cells.back(), path, line_no, &remapped));
      cells.pop_back();
      feature_rows.push_back(std::move(cells));
    } else {
      std::istringstream ls(line);
      std::string token;
      if (!(ls >> token)) row_error(path, line_no, "empty row");
      double raw;
      try {
        raw = std::stod(token);
      } catch (const std::exception&) {
        row_error(path, line_no, "malformed label '" + token + "'");
      }
      labels.push_back(map_label(raw, path, line_no, &remapped));
      std::vector<double> sparse;  // position 2i: index, 2i+1: value
      while (ls >> token) {
        auto colon = token.find(':');
        if (colon == std::string::npos) {
          row_error(path, line_no, "expected idx:value, got '" + token + "'");
        }
        int idx;
        double val;
        try {
          idx = std::stoi(token.substr(0, colon));
          val = std::stod(token.substr(colon + 1));
        } catch (const std::exception&) {
          row_error(path, line_no, "malformed pair '" + token + "'");
        }
        if (idx < 1) row_error(path, line_no, "svmlight indices are 1-based");
        max_index = std::max(max_index, idx);
        sparse.push_back(static_cast<double>(idx));
        sparse.push_back(val);
      }
      feature_rows.push_back(std::move(sparse));
    }
  }
  if (feature_rows.empty()) throw std::runtime_error(path + ": empty dataset");

  const int n = static_cast<int>(feature_rows.size());
  Matrix x;
  if (format == DatasetFormat::Csv) {
    const int d = static_cast<int>(feature_rows.front().size());
    x.resize(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) x(i, j) = feature_rows[i][j];
    }
  } else {
    x = Matrix::Zero(n, max_index);
    for (int i = 0; i < n; ++i) {
      for (size_t p = 0; p + 1 < feature_rows[i].size(); p += 2) {
        x(i, static_cast<int>(feature_rows[i][p]) - 1) = feature_rows[i][p + 1];
      }
    }
  }
  Vector y = Eigen::Map<Vector>(labels.data(), n);
  return assemble(std::move(x), std::move(y), remapped, path, split);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for checksum: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

std::string default_cache_dir() {
  if (const char* env = std::getenv("PROXVI_CACHE")) return env;
  if (const char* home = std::getenv("HOME")) {
    return std::string(home) + "/.cache/proxvi";
  }
  return ".proxvi-cache";
}

std::string fetch_dataset(const RemoteDataset& spec, std::string cache_dir) {
  namespace fs = std::filesystem;
  if (cache_dir.empty()) cache_dir = default_cache_dir();
  fs::create_directories(cache_dir);
  const std::string local = cache_dir + "/" + spec.name;

  if (fs::exists(local)) {
    const std::string sum = file_checksum(local);
    if (spec.checksum.empty() || sum == spec.checksum) return local;
    const std::string quarantine = local + ".quarantine";
    fs::rename(local, quarantine);
    throw std::runtime_error("checksum mismatch for " + spec.name + ": got " +
                             sum + ", expected " + spec.checksum +
                             "; file quarantined at " + quarantine);
  }

  httplib::Client client(spec.host, spec.port);
  client.set_connection_timeout(10);
  auto res = client.Get(spec.remote_path);
  if (!res || res->status != 200) {
    throw std::runtime_error("download failed for " + spec.name + " from " +
                             spec.host + spec.remote_path +
                             (res ? " (status " + std::to_string(res->status) + ")"
                                  : " (no response)"));
  }
  const std::string tmp = local + ".part";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << res->body;
  }
  const std::string sum = file_checksum(tmp);
  if (!spec.checksum.empty() && sum != spec.checksum) {
    const std::string quarantine = local + ".quarantine";
    fs::rename(tmp, quarantine);
    throw std::runtime_error("checksum mismatch for downloaded " + spec.name +
                             ": got " + sum + ", expected " + spec.checksum +
                             "; file quarantined at " + quarantine);
  }
  fs::rename(tmp, local);
  return local;
}

SyntheticClassification generate_gp_classification(int n, int d,
                                                   const KernelConfig& cfg,
                                                   std::uint64_t seed,
                                                   int clusters) {
  if (n < 1 || d < 1) throw std::invalid_argument("generate: n, d >= 1");
  CounterRng rng(seed, 0x67656e677063ULL);
  SyntheticClassification out;
  out.x.resize(n, d);
  if (clusters > 0) {
    Matrix centers(clusters, d);
    for (int c = 0; c < clusters; ++c) {
      for (int j = 0; j < d; ++j) centers(c, j) = rng.next_normal();
    }
    for (int i = 0; i < n; ++i) {
      const int c = i % clusters;  // balanced assignment
      for (int j = 0; j < d; ++j) {
        out.x(i, j) = centers(c, j) + 0.25 * rng.next_normal();
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) out.x(i, j) = rng.next_normal();
    }
  }
  // Latents are drawn on the standardized features the model will see.
  Vector mu = out.x.colwise().mean();
  Matrix xs = out.x.rowwise() - mu.transpose();
  for (int j = 0; j < d; ++j) {
    double sd = std::sqrt(xs.col(j).squaredNorm() / n);
    if (sd > 1e-12) xs.col(j) /= sd;
  }
  SymmetricMatrix k = se_kernel(xs, cfg);
  CholeskyFactor chol(k);
  Vector eps(n);
  for (int i = 0; i < n; ++i) eps(i) = rng.next_normal();
  out.latent = chol.lower() * eps;
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-out.latent(i)));
    out.y(i) = rng.next_uniform() < p ? 1.0 : -1.0;
  }
  return out;
}

DatasetBundle make_synthetic_bundle(int n, int d, int train_size,
                                    const KernelConfig& cfg,
                                    std::uint64_t seed, int clusters) {
  SyntheticClassification gen =
      generate_gp_classification(n, d, cfg, seed, clusters);
  SplitSpec split;
  split.train_size = train_size;
  split.seed = seed;
  return assemble(std::move(gen.x), std::move(gen.y), false, "<synthetic>",
                  split);
}

void save_csv_dataset(const Matrix& x, const Vector& y,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.precision(17);
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) out << x(i, j) << ',';
    out << y(i) << '\n';
  }
}

}  // namespace proxvi
