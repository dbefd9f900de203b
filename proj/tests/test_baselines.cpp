#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "proxvi/baselines.hpp"
#include "proxvi/rng.hpp"

#include <cmath>

using namespace proxvi;

namespace {

// Independent scalar re-derivation of each update rule, applied coordinate-
// wise to the packed lambda vector.
struct ScalarState {
  double lambda, s = 0.0, mu = 0.0, delta = 0.0;
};

void scalar_step(OptimizerKind kind, const OptimizerHyperparams& hp, int k,
                 double g, ScalarState* st) {
  switch (kind) {
    case OptimizerKind::GD:
      st->lambda -= hp.alpha0 * g;
      break;
    case OptimizerKind::SGD:
      st->lambda -= hp.alpha0 * std::pow(k + 1.0, -hp.kappa) * g;
      break;
    // Parenthesization mirrors the coefficient-wise expressions in the
    // implementation so the comparison can be bit-exact.
    case OptimizerKind::ADAGRAD:
      st->s += g * g;
      st->lambda -= hp.alpha0 * (g / std::sqrt(st->s + hp.eps));
      break;
    case OptimizerKind::RMSPROP:
      st->s = hp.rho * st->s + (1.0 - hp.rho) * (g * g);
      st->lambda -= hp.alpha0 * (g / std::sqrt(st->s + hp.eps));
      break;
    case OptimizerKind::ADADELTA: {
      st->s = hp.rho * st->s + (1.0 - hp.rho) * (g * g);
      double d = hp.alpha0 * (std::sqrt(st->delta + hp.eps) /
                              std::sqrt(st->s + hp.eps) * g);
      st->lambda -= d;
      st->delta = hp.rho * st->delta + (1.0 - hp.rho) * (d * d);
      break;
    }
    case OptimizerKind::ADAM: {
      st->mu = hp.rho_mu * st->mu + (1.0 - hp.rho_mu) * g;
      st->s = hp.rho_s * st->s + (1.0 - hp.rho_s) * (g * g);
      double mu_hat = st->mu / (1.0 - std::pow(hp.rho_mu, k + 1));
      double s_hat = std::sqrt(st->s / (1.0 - std::pow(hp.rho_s, k + 1)));
      st->lambda -= hp.alpha0 * (mu_hat / (s_hat + hp.eps));
      break;
    }
  }
}

}  // namespace

TEST_CASE("three-step traces match the hand-unrolled recurrences") {
  const double g_seq[3][2] = {{0.3, -0.2}, {-0.1, 0.4}, {0.25, 0.1}};
  OptimizerHyperparams hp;
  hp.alpha0 = 0.1;
  hp.kappa = 0.6;
  hp.rho = 0.9;
  hp.rho_mu = 0.9;
  hp.rho_s = 0.999;

  for (auto kind : {OptimizerKind::GD, OptimizerKind::SGD,
                    OptimizerKind::ADAGRAD, OptimizerKind::RMSPROP,
                    OptimizerKind::ADADELTA, OptimizerKind::ADAM}) {
    OptimizerState opt(kind, 1, hp);
    Vector lambda0(2);
    lambda0 << 0.5, 1.0;
    opt.set_lambda(lambda0);

    ScalarState ref[2] = {{0.5}, {1.0}};
    for (int k = 0; k < 3; ++k) {
      Vector g(2);
      g << g_seq[k][0], g_seq[k][1];
      opt.step(g);
      scalar_step(kind, hp, k, g_seq[k][0], &ref[0]);
      scalar_step(kind, hp, k, g_seq[k][1], &ref[1]);
      CHECK(opt.lambda()(0) == ref[0].lambda);
      CHECK(opt.lambda()(1) == ref[1].lambda);
    }
    CHECK(opt.step_count() == 3);
  }
}

TEST_CASE("rmsprop with rho=0 matches adagrad on the first step") {
  OptimizerHyperparams hp;
  hp.alpha0 = 0.2;
  OptimizerHyperparams hp0 = hp;
  hp0.rho = 0.0;
  OptimizerState ada(OptimizerKind::ADAGRAD, 1, hp);
  OptimizerState rms(OptimizerKind::RMSPROP, 1, hp0);
  Vector lambda0(2);
  lambda0 << 0.3, 0.9;
  ada.set_lambda(lambda0);
  rms.set_lambda(lambda0);
  Vector g(2);
  g << -0.4, 0.7;
  ada.step(g);
  rms.step(g);
  CHECK(ada.lambda()(0) == rms.lambda()(0));
  CHECK(ada.lambda()(1) == rms.lambda()(1));
}

TEST_CASE("cholesky diagonal is clamped at 1e-8") {
  OptimizerHyperparams hp;
  hp.alpha0 = 10.0;
  OptimizerState opt(OptimizerKind::GD, 2, hp);
  Vector lambda0 = OptimizerState::pack(Vector::Zero(2),
                                        Matrix::Identity(2, 2));
  opt.set_lambda(lambda0);
  Vector g = Vector::Zero(opt.lambda().size());
  g(2) = 1.0;  // drives L(0,0) to -9.999...
  g(4) = 1.0;  // drives L(1,1); lambda layout is [m0, m1, L00, L10, L11]
  opt.step(g);
  Matrix l = opt.cholesky_factor();
  CHECK(l(0, 0) == 1e-8);
  CHECK(l(1, 1) == 1e-8);
  // Covariance stays positive semidefinite by construction.
  Matrix v = opt.covariance();
  CHECK(v(0, 0) >= 0.0);
}

TEST_CASE("chain rule to cholesky coordinates matches finite differences") {
  const int n = 3;
  CounterRng rng(4);
  Matrix l = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) l(i, j) = 0.3 * rng.next_normal();
    l(i, i) = 0.8 + rng.next_uniform();
  }
  Vector gm(n);
  Matrix gv(n, n);
  for (int i = 0; i < n; ++i) {
    gm(i) = rng.next_normal();
    for (int j = 0; j < n; ++j) gv(i, j) = rng.next_normal();
  }
  gv = 0.5 * (gv + gv.transpose()).eval();  // gradient of a symmetric loss

  // Loss surrogate: f(m, L) = gm . m + <gv, L L'>.
  Vector packed = chain_rule_to_cholesky(gm, gv, l);
  const double h = 1e-6;
  int pos = n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      Matrix lp = l, lm = l;
      lp(i, j) += h;
      lm(i, j) -= h;
      double fd = ((gv.array() * (lp * lp.transpose()).array()).sum() -
                   (gv.array() * (lm * lm.transpose()).array()).sum()) /
                  (2.0 * h);
      CHECK(packed(pos) == doctest::Approx(fd).epsilon(1e-5));
      ++pos;
    }
  }
  for (int i = 0; i < n; ++i) CHECK(packed(i) == gm(i));
}

TEST_CASE("step-size table presets") {
  auto sgd_sonar = baseline_preset("sgd/sonar", 165);
  REQUIRE(sgd_sonar.has_value());
  CHECK(sgd_sonar->kappa == 0.8);
  CHECK(sgd_sonar->alpha0 == doctest::Approx(1200.0 / 165.0));

  auto sgd_ion = baseline_preset("sgd/ionosphere", 280);
  REQUIRE(sgd_ion.has_value());
  CHECK(sgd_ion->kappa == 0.51);
  CHECK(sgd_ion->alpha0 == doctest::Approx(25.0 / 280.0));

  auto rms_ion = baseline_preset("rmsprop/ionosphere", 280);
  REQUIRE(rms_ion.has_value());
  CHECK(rms_ion->alpha0 == 0.04);
  CHECK(rms_ion->rho == 0.9999);

  auto ada_usps = baseline_preset("adadelta/usps", 884);
  REQUIRE(ada_usps.has_value());
  CHECK(ada_usps->rho == doctest::Approx(1.0 - 1e-12));

  auto adam_ion = baseline_preset("adam/ionosphere", 280);
  REQUIRE(adam_ion.has_value());
  CHECK(adam_ion->alpha0 == 0.25);
  CHECK(adam_ion->rho_mu == 0.9);
  CHECK(adam_ion->rho_s == 0.999);

  CHECK_FALSE(baseline_preset("adam/unknown", 10).has_value());
  CHECK_FALSE(baseline_preset("nope/sonar", 10).has_value());

  CHECK(pg_svi_preset_beta_times_n("sonar").value() == 0.2);
  CHECK(pg_svi_preset_beta_times_n("ionosphere").value() == 2.0);
  CHECK(pg_svi_preset_beta_times_n("usps").value() == 2.5);
  CHECK_FALSE(pg_svi_preset_beta_times_n("x").has_value());
}
