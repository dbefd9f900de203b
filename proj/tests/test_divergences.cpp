#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "proxvi/divergences.hpp"
#include "proxvi/rng.hpp"

#include <cmath>

using namespace proxvi;

namespace {

GaussianParams random_params(int n, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix b(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) b(i, j) = rng.next_normal();
  }
  GaussianParams p;
  p.cov = b * b.transpose() / n;
  p.cov.diagonal().array() += 0.3;
  p.mean = Vector(n);
  for (int i = 0; i < n; ++i) p.mean(i) = rng.next_normal();
  return p;
}

double fd_mean_dir(const DivergenceSpec& spec, const GaussianParams& l,
                   const GaussianParams& lp, const Vector& dir, double h) {
  GaussianParams a = l, b = l;
  a.mean += h * dir;
  b.mean -= h * dir;
  return (divergence(spec, a, lp).value - divergence(spec, b, lp).value) /
         (2.0 * h);
}

double fd_cov_dir(const DivergenceSpec& spec, const GaussianParams& l,
                  const GaussianParams& lp, const Matrix& dir, double h) {
  GaussianParams a = l, b = l;
  a.cov += h * dir;
  b.cov -= h * dir;
  return (divergence(spec, a, lp).value - divergence(spec, b, lp).value) /
         (2.0 * h);
}

}  // namespace

TEST_CASE("all divergences vanish at identical arguments") {
  for (auto kind :
       {DivergenceKind::SquaredEuclidean, DivergenceKind::KlForward,
        DivergenceKind::KlReverse, DivergenceKind::SymmetricKl}) {
    GaussianParams p = random_params(3, 5);
    DivergenceResult r = divergence({kind}, p, p);
    CHECK(std::abs(r.value) < 1e-12);
  }
}

TEST_CASE("symmetric KL decomposes into forward plus reverse") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    GaussianParams a = random_params(3, 2 * s);
    GaussianParams b = random_params(3, 2 * s + 1);
    CHECK(symmetric_kl_decomposition_check(a, b) < 1e-10);
    double sym = divergence({DivergenceKind::SymmetricKl}, a, b).value;
    double fwd = divergence({DivergenceKind::KlForward}, a, b).value;
    double rev = divergence({DivergenceKind::KlReverse}, a, b).value;
    CHECK(std::abs(sym - fwd - rev) <= 1e-10 * std::max(1.0, std::abs(sym)));
  }
}

TEST_CASE("squared euclidean value and flat gradient") {
  GaussianParams a = random_params(2, 10);
  GaussianParams b = random_params(2, 11);
  DivergenceResult r = divergence({DivergenceKind::SquaredEuclidean}, a, b);
  Vector d = a.flatten() - b.flatten();
  CHECK(r.value == doctest::Approx(0.5 * d.squaredNorm()).epsilon(1e-12));
  CHECK((r.flatten_grad() - d).norm() < 1e-12);
}

TEST_CASE("divergence gradients match finite differences") {
  CounterRng rng(77);
  for (auto kind :
       {DivergenceKind::SquaredEuclidean, DivergenceKind::KlForward,
        DivergenceKind::KlReverse, DivergenceKind::SymmetricKl}) {
    DivergenceSpec spec{kind};
    for (std::uint64_t s = 0; s < 5; ++s) {
      GaussianParams l = random_params(3, 100 + s);
      GaussianParams lp = random_params(3, 200 + s);
      DivergenceResult r = divergence(spec, l, lp);

      Vector dir(3);
      for (int i = 0; i < 3; ++i) dir(i) = rng.next_normal();
      dir.normalize();
      double fd = fd_mean_dir(spec, l, lp, dir, 1e-6);
      CHECK(std::abs(r.grad_mean.dot(dir) - fd) <
            1e-5 * std::max(1.0, std::abs(fd)));

      Matrix mdir(3, 3);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) mdir(i, j) = rng.next_normal();
      }
      mdir = 0.5 * (mdir + mdir.transpose()).eval();
      mdir /= mdir.norm();
      double fdc = fd_cov_dir(spec, l, lp, mdir, 1e-6);
      CHECK(std::abs((r.grad_cov.array() * mdir.array()).sum() - fdc) <
            1e-4 * std::max(1.0, std::abs(fdc)));
    }
  }
}

TEST_CASE("estimate_alpha is exactly 1 for the squared euclidean metric") {
  std::vector<std::pair<GaussianParams, GaussianParams>> pairs;
  for (std::uint64_t s = 0; s < 8; ++s) {
    pairs.emplace_back(random_params(2, 300 + s), random_params(2, 400 + s));
  }
  double alpha =
      estimate_alpha({DivergenceKind::SquaredEuclidean}, pairs);
  CHECK(alpha == doctest::Approx(1.0).epsilon(1e-12));

  // KL-type divergences admit some positive alpha on these bounded pairs.
  double alpha_kl = estimate_alpha({DivergenceKind::KlForward}, pairs);
  CHECK(std::isfinite(alpha_kl));

  std::vector<std::pair<GaussianParams, GaussianParams>> degenerate;
  GaussianParams p = random_params(2, 1);
  degenerate.emplace_back(p, p);
  CHECK_THROWS(estimate_alpha({DivergenceKind::SquaredEuclidean}, degenerate));
}
