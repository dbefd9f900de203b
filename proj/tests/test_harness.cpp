#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "proxvi/experiment.hpp"

#include "httplib.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace proxvi;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("csv fixture parses exactly and standardization is invertible") {
  TempDir tmp("proxvi_csv_fixture");
  const std::string path = tmp.str() + "/tiny.csv";
  {
    std::ofstream out(path);
    out << "1.0,2.0,1\n3.0,4.0,-1\n5.0,9.0,1\n";
  }
  SplitSpec split;
  split.train_size = 2;
  split.shuffle = false;
  DatasetBundle b = load_dataset(path, DatasetFormat::Csv, split);
  CHECK(b.num_examples() == 3);
  CHECK(b.num_features() == 2);
  CHECK(b.y(0) == 1.0);
  CHECK(b.y(1) == -1.0);
  CHECK(b.y(2) == 1.0);
  CHECK_FALSE(b.labels_remapped);

  // Undo the standardization and recover the hand-written matrix.
  Matrix raw = (b.x.array().rowwise() * b.feature_std.transpose().array())
                   .rowwise() +
               b.feature_mean.transpose().array();
  Matrix expect(3, 2);
  expect << 1.0, 2.0, 3.0, 4.0, 5.0, 9.0;
  CHECK((raw - expect).cwiseAbs().maxCoeff() < 1e-12);

  // Standardization statistics come from the two train rows only.
  CHECK(b.feature_mean(0) == doctest::Approx(2.0));  // mean of {1, 3}
  CHECK(b.feature_mean(1) == doctest::Approx(3.0));  // mean of {2, 4}
  CHECK(b.train_indices == std::vector<int>{0, 1});
  CHECK(b.test_indices == std::vector<int>{2});
}

TEST_CASE("label handling: 0/1 remap and out-of-domain error") {
  TempDir tmp("proxvi_labels");
  const std::string path = tmp.str() + "/zeroone.csv";
  {
    std::ofstream out(path);
    out << "0.5,1\n1.5,0\n2.5,1\n3.5,0\n";
  }
  SplitSpec split;
  split.train_size = 2;
  DatasetBundle b = load_dataset(path, DatasetFormat::Csv, split);
  CHECK(b.labels_remapped);
  for (int i = 0; i < 4; ++i) {
    CHECK((b.y(i) == 1.0 || b.y(i) == -1.0));
  }

  {
    std::ofstream out(path);
    out << "0.5,1\n1.5,3\n";
  }
  try {
    load_dataset(path, DatasetFormat::Csv, split);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("svmlight rows parse with 1-based sparse indices") {
  TempDir tmp("proxvi_svm");
  const std::string path = tmp.str() + "/tiny.svm";
  {
    std::ofstream out(path);
    out << "+1 1:0.5 3:2.0\n-1 2:1.0\n+1 1:1.0 2:1.0 3:1.0\n-1 3:0.25\n";
  }
  SplitSpec split;
  split.train_size = 3;
  split.shuffle = false;
  DatasetBundle b = load_dataset(path, DatasetFormat::Svmlight, split);
  CHECK(b.num_features() == 3);
  Matrix raw = (b.x.array().rowwise() * b.feature_std.transpose().array())
                   .rowwise() +
               b.feature_mean.transpose().array();
  CHECK(raw(0, 0) == doctest::Approx(0.5));
  CHECK(raw(0, 1) == doctest::Approx(0.0));
  CHECK(raw(0, 2) == doctest::Approx(2.0));
  CHECK(raw(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("fnv1a64 known vectors and file checksum") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  TempDir tmp("proxvi_sum");
  const std::string path = tmp.str() + "/f.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "a";
  }
  CHECK(file_checksum(path) == "af63dc4c8601ec8c");
}

TEST_CASE("fetch: warm cache, corruption quarantine, and mock download") {
  TempDir cache("proxvi_cache");

  // Warm cache: no network involved.
  {
    std::ofstream out(cache.str() + "/warm.csv");
    out << "a";
  }
  RemoteDataset warm{"warm.csv", "127.0.0.1", 1 /* unused */, "/warm",
                     "af63dc4c8601ec8c"};
  CHECK(fetch_dataset(warm, cache.str()) == cache.str() + "/warm.csv");

  // Corrupted cache: checksum mismatch quarantines the file.
  {
    std::ofstream out(cache.str() + "/bad.csv");
    out << "tampered";
  }
  RemoteDataset bad{"bad.csv", "127.0.0.1", 1, "/bad", "af63dc4c8601ec8c"};
  CHECK_THROWS(fetch_dataset(bad, cache.str()));
  CHECK(std::filesystem::exists(cache.str() + "/bad.csv.quarantine"));
  CHECK_FALSE(std::filesystem::exists(cache.str() + "/bad.csv"));

  // Cold cache against a local mock server.
  httplib::Server svr;
  svr.Get("/data.csv", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("a", "text/plain");
  });
  int port = svr.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&]() { svr.listen_after_bind(); });
  svr.wait_until_ready();

  RemoteDataset cold{"cold.csv", "127.0.0.1", port, "/data.csv",
                     "af63dc4c8601ec8c"};
  std::string got = fetch_dataset(cold, cache.str());
  CHECK(slurp(got) == "a");

  // Wrong checksum on download also quarantines.
  RemoteDataset wrong{"wrong.csv", "127.0.0.1", port, "/data.csv",
                      "0000000000000000"};
  CHECK_THROWS(fetch_dataset(wrong, cache.str()));
  CHECK(std::filesystem::exists(cache.str() + "/wrong.csv.quarantine"));

  svr.stop();
  server_thread.join();
}

TEST_CASE("run_experiment artifacts: zero-pass trace and byte determinism") {
  TempDir tmp("proxvi_exp");
  ExperimentConfig cfg;
  cfg.dataset_name = "synthetic";
  cfg.kernel.log_signal_std = 0.5;
  cfg.data = make_synthetic_bundle(24, 3, 18, cfg.kernel, 5);
  cfg.method = "pg-svi";
  cfg.beta = 0.05;
  cfg.minibatch = 3;
  cfg.samples = 50;
  cfg.passes = 0;
  cfg.seed = 11;
  cfg.out_dir = tmp.str() + "/run0";
  run_experiment(cfg);
  {
    std::ifstream in(cfg.out_dir + "/trace.csv");
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "pass,iteration,elbo,test_logloss,grad_norm_sq,beta,wall_ms");
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 1);
  }

  cfg.passes = 3;
  cfg.out_dir = tmp.str() + "/run_a";
  run_experiment(cfg);
  cfg.out_dir = tmp.str() + "/run_b";
  run_experiment(cfg);
  CHECK(slurp(tmp.str() + "/run_a/trace.csv") ==
        slurp(tmp.str() + "/run_b/trace.csv"));
  CHECK(slurp(tmp.str() + "/run_a/summary.csv") ==
        slurp(tmp.str() + "/run_b/summary.csv"));
  CHECK(std::filesystem::exists(tmp.str() + "/run_a/config.txt"));
}

TEST_CASE("divergence guard flags sustained collapse, tolerates noise") {
  // Steady improvement with small jitter: no divergence.
  std::vector<double> good;
  for (int i = 0; i < 20; ++i) {
    good.push_back(-100.0 + 5.0 * i + 0.1 * ((i % 2) ? 1 : -1));
  }
  CHECK_FALSE(elbo_divergence_guard(good));

  // Three consecutive accelerating collapses: each drop dwarfs the trailing
  // standard deviation of the increments even as the window absorbs the
  // previous drops.
  std::vector<double> bad = good;
  bad.push_back(-300.0);
  bad.push_back(-3000.0);
  bad.push_back(-30000.0);
  CHECK(elbo_divergence_guard(bad));

  // NaN anywhere is divergence.
  std::vector<double> nan_trace = {-10.0, std::nan("")};
  CHECK(elbo_divergence_guard(nan_trace));
}

TEST_CASE("stepsize sweep validates grid and marks diverging cells") {
  ExperimentConfig cfg;
  cfg.kernel.log_signal_std = 1.0;
  cfg.data = make_synthetic_bundle(20, 2, 16, cfg.kernel, 9);
  cfg.method = "pg";
  cfg.samples = 0;
  cfg.passes = 12;
  cfg.threshold = 1e-4;
  CHECK_THROWS(stepsize_sweep(cfg, {}));
  CHECK_THROWS(stepsize_sweep(cfg, {0.2, 0.1}));

  auto rows = stepsize_sweep(cfg, {1e-4, 0.5});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].beta == 1e-4);
  // A tiny step neither converges quickly nor diverges.
  CHECK_FALSE(rows[0].diverged);
}
