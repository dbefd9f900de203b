#include "proxvi/divergences.hpp"

#include <limits>

#include <cmath>

namespace proxvi {

namespace {

struct Precomp {
  CholeskyFactor chol;      // of V (first argument)
  CholeskyFactor chol_p;    // of V'
  Matrix v_inv;
  Matrix vp_inv;

  Precomp(const GaussianParams& l, const GaussianParams& lp)
      : chol(SymmetricMatrix(l.cov)),
        chol_p(SymmetricMatrix(lp.cov)),
        v_inv(chol.solve(Matrix(Matrix::Identity(l.dim(), l.dim())))),
        vp_inv(chol_p.solve(Matrix(Matrix::Identity(l.dim(), l.dim())))) {}
};

DivergenceResult kl_forward(const GaussianParams& l, const GaussianParams& lp,
                            const Precomp& pc) {
  const int d = l.dim();
  Vector dm = l.mean - lp.mean;
  double value = 0.5 * (pc.chol_p.log_det() - pc.chol.log_det() +
                        (pc.vp_inv * l.cov).trace() +
                        dm.dot(pc.vp_inv * dm) - d);
  DivergenceResult r;
  r.value = value;
  r.grad_mean = pc.vp_inv * dm;
  r.grad_cov = 0.5 * (pc.vp_inv - pc.v_inv);
  return r;
}

DivergenceResult kl_reverse(const GaussianParams& l, const GaussianParams& lp,
                            const Precomp& pc) {
  const int d = l.dim();
  Vector dm = l.mean - lp.mean;
  Vector u = pc.v_inv * dm;
  double value = 0.5 * (pc.chol.log_det() - pc.chol_p.log_det() +
                        (pc.v_inv * lp.cov).trace() + dm.dot(u) - d);
  DivergenceResult r;
  r.value = value;
  r.grad_mean = u;
  r.grad_cov =
      0.5 * (pc.v_inv - pc.v_inv * lp.cov * pc.v_inv - u * u.transpose());
  return r;
}

}  // namespace

Vector GaussianParams::flatten() const {
  const int d = dim();
  Vector out(d + d * d);
  out.head(d) = mean;
  out.tail(d * d) = Eigen::Map<const Vector>(cov.data(), d * d);
  return out;
}

Vector DivergenceResult::flatten_grad() const {
  const int d = static_cast<int>(grad_mean.size());
  Vector out(d + d * d);
  out.head(d) = grad_mean;
  out.tail(d * d) = Eigen::Map<const Vector>(grad_cov.data(), d * d);
  return out;
}

DivergenceResult divergence(const DivergenceSpec& spec,
                            const GaussianParams& lambda,
                            const GaussianParams& lambda_prime) {
  if (lambda.dim() != lambda_prime.dim()) {
    throw std::invalid_argument("divergence: dimension mismatch");
  }
  if (spec.kind == DivergenceKind::SquaredEuclidean) {
    DivergenceResult r;
    Vector dm = lambda.mean - lambda_prime.mean;
    Matrix dv = lambda.cov - lambda_prime.cov;
    r.value = 0.5 * (dm.squaredNorm() + dv.squaredNorm());
    r.grad_mean = dm;
    r.grad_cov = dv;
    return r;
  }
  Precomp pc(lambda, lambda_prime);
  switch (spec.kind) {
    case DivergenceKind::KlForward:
      return kl_forward(lambda, lambda_prime, pc);
    case DivergenceKind::KlReverse:
      return kl_reverse(lambda, lambda_prime, pc);
    case DivergenceKind::SymmetricKl: {
      DivergenceResult f = kl_forward(lambda, lambda_prime, pc);
      DivergenceResult b = kl_reverse(lambda, lambda_prime, pc);
      DivergenceResult r;
      r.value = f.value + b.value;
      r.grad_mean = f.grad_mean + b.grad_mean;
      r.grad_cov = f.grad_cov + b.grad_cov;
      return r;
    }
    default:
      throw std::logic_error("unknown divergence kind");
  }
}

double symmetric_kl_decomposition_check(const GaussianParams& lambda,
                                        const GaussianParams& lambda_prime) {
  const int d = lambda.dim();
  Precomp pc(lambda, lambda_prime);
  Vector dm = lambda.mean - lambda_prime.mean;
  // Direct symmetric-KL formula (log-determinants cancel).
  double sym = 0.5 * ((pc.vp_inv * lambda.cov).trace() +
                      (pc.v_inv * lambda_prime.cov).trace() - 2.0 * d +
                      dm.dot((pc.v_inv + pc.vp_inv) * dm));
  double fwd = kl_gaussian(lambda.mean, SymmetricMatrix(lambda.cov),
                           lambda_prime.mean, SymmetricMatrix(lambda_prime.cov));
  double rev = kl_gaussian(lambda_prime.mean, SymmetricMatrix(lambda_prime.cov),
                           lambda.mean, SymmetricMatrix(lambda.cov));
  return std::abs(sym - (fwd + rev));
}

double estimate_alpha(
    const DivergenceSpec& spec,
    const std::vector<std::pair<GaussianParams, GaussianParams>>& iterates) {
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& [l, lp] : iterates) {
    Vector diff = l.flatten() - lp.flatten();
    double norm2 = diff.squaredNorm();
    if (norm2 == 0.0) continue;
    DivergenceResult r = divergence(spec, l, lp);
    best = std::min(best, diff.dot(r.flatten_grad()) / norm2);
    any = true;
  }
  if (!any) {
    throw std::invalid_argument("estimate_alpha: all pairs identical");
  }
  return best;
}

}  // namespace proxvi
