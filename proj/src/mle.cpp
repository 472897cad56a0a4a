#include "rswitch/mle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rswitch/math.hpp"
#include "rswitch/rng.hpp"

namespace rswitch {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Problem {
  Family f = Family::Poisson;
  const Dataset* data = nullptr;
  int n_cov = 0;
  int n_outcomes = 0;
  int dim = 0;
  ModelSpec spec;  // single-state wrapper used for likelihood dispatch
};

// Optimizer vector -> state parameters, following the param_table slot order.
StateParams unpack(const Problem& pr, const VectorXd& th) {
  StateParams p;
  int pos = 0;
  if (pr.f == Family::Mnl) {
    p.beta.assign(static_cast<size_t>(pr.n_outcomes) * pr.n_cov, 0.0);
    for (int i = 1; i < pr.n_outcomes; ++i)
      for (int k = 0; k < pr.n_cov; ++k)
        p.beta[static_cast<size_t>(i - 1) * pr.n_cov + k] = th[pos++];
    return p;
  }
  p.beta.assign(pr.n_cov, 0.0);
  for (int k = 0; k < pr.n_cov; ++k) p.beta[k] = th[pos++];
  if (family_has_alpha(pr.f)) p.ln_alpha = th[pos++];
  if (family_has_tau(pr.f)) p.tau = th[pos++];
  if (family_has_gamma(pr.f)) {
    p.gamma.assign(pr.n_cov, 0.0);
    for (int k = 0; k < pr.n_cov; ++k) p.gamma[k] = th[pos++];
  }
  return p;
}

double loglik_at(const Problem& pr, const VectorXd& th) {
  const StateParams p = unpack(pr, th);
  const Dataset& d = *pr.data;
  double ll = 0.0;
  for (size_t i = 0; i < d.n_rows(); ++i)
    ll += log_obs_likelihood(pr.spec, 1, p, d.x_row(i), d.y[i]);
  return ll;
}

double negll_at(const Problem& pr, const VectorXd& th) { return -loglik_at(pr, th); }

bool has_analytic_grad(Family f) {
  return f == Family::Poisson || f == Family::NegBin || f == Family::Mnl;
}

// Gradient of the negative log-likelihood.
void grad_at(const Problem& pr, const VectorXd& th, VectorXd& g) {
  const Dataset& d = *pr.data;
  g.setZero(pr.dim);
  if (pr.f == Family::Poisson || pr.f == Family::NegBin) {
    const StateParams p = unpack(pr, th);
    const bool nb = pr.f == Family::NegBin;
    const double alpha = nb ? std::exp(*p.ln_alpha) : 0.0;
    const double r = nb ? 1.0 / alpha : 0.0;
    for (size_t i = 0; i < d.n_rows(); ++i) {
      const auto x = d.x_row(i);
      const double lam = rate(p.beta, x);
      const double y = static_cast<double>(d.y[i]);
      const double w = nb ? (y - lam) / (1.0 + alpha * lam) : (y - lam);
      for (int k = 0; k < pr.n_cov; ++k) g[k] -= w * x[k];
      if (nb) {
        const double dldr = digamma(y + r) - digamma(r) - std::log1p(alpha * lam) + 1.0 -
                            (r + y) / (r + lam);
        g[pr.n_cov] -= -r * dldr;  // chain rule through r = exp(-ln_alpha)
      }
    }
    return;
  }
  if (pr.f == Family::Mnl) {
    const StateParams p = unpack(pr, th);
    double eta[64], prob[64];
    for (size_t i = 0; i < d.n_rows(); ++i) {
      const auto x = d.x_row(i);
      double emax = 0.0;  // last block is zero
      for (int j = 0; j < pr.n_outcomes; ++j) {
        double e = 0.0;
        if (j + 1 < pr.n_outcomes)
          for (int k = 0; k < pr.n_cov; ++k)
            e += p.beta[static_cast<size_t>(j) * pr.n_cov + k] * x[k];
        eta[j] = e;
        emax = std::max(emax, e);
      }
      double z = 0.0;
      for (int j = 0; j < pr.n_outcomes; ++j) z += (prob[j] = std::exp(eta[j] - emax));
      for (int j = 0; j < pr.n_outcomes; ++j) prob[j] /= z;
      const int yi = static_cast<int>(d.y[i]);
      for (int j = 1; j < pr.n_outcomes; ++j) {
        const double coef = (yi == j ? 1.0 : 0.0) - prob[j - 1];
        for (int k = 0; k < pr.n_cov; ++k) g[(j - 1) * pr.n_cov + k] -= coef * x[k];
      }
    }
    return;
  }
  // Zero-inflated families: central differences on the log-likelihood.
  VectorXd tp = th;
  for (int j = 0; j < pr.dim; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(th[j]));
    tp[j] = th[j] + h;
    const double fp = negll_at(pr, tp);
    tp[j] = th[j] - h;
    const double fm = negll_at(pr, tp);
    tp[j] = th[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
}

struct BfgsOut {
  VectorXd x;
  double f = 0.0;
  VectorXd g;
  bool converged = false;
};

BfgsOut bfgs(const Problem& pr, VectorXd x0, int max_iter, double tol) {
  const int dim = pr.dim;
  BfgsOut out;
  out.x = std::move(x0);
  out.f = negll_at(pr, out.x);
  out.g.resize(dim);
  grad_at(pr, out.x, out.g);
  MatrixXd H = MatrixXd::Identity(dim, dim);
  VectorXd gn(dim);
  const double c1 = 1e-4;
  // Measure the gradient relative to the objective's own scale: summing n log
  // terms leaves rounding noise of order |f|*eps, so an absolute tolerance
  // tighter than that can never be met on large datasets.
  const auto scaled_tol = [tol](double fval) { return tol * std::max(1.0, std::abs(fval)); };
  for (int it = 0; it < max_iter; ++it) {
    if (out.g.lpNorm<Eigen::Infinity>() < scaled_tol(out.f)) {
      out.converged = true;
      return out;
    }
    VectorXd dir = -(H * out.g);
    double gd = out.g.dot(dir);
    bool steepest = false;
    if (!(gd < 0.0)) {  // curvature information went bad; restart from steepest descent
      H.setIdentity();
      dir = -out.g;
      gd = out.g.dot(dir);
      steepest = true;
      if (!(gd < 0.0)) break;
    }
    double step = 1.0, fn = std::numeric_limits<double>::infinity();
    VectorXd xn;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = out.x + step * dir;
      fn = negll_at(pr, xn);
      if (std::isfinite(fn) && fn <= out.f + c1 * step * gd) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      if (!steepest) {  // retry once along the raw gradient
        H.setIdentity();
        continue;
      }
      break;
    }
    grad_at(pr, xn, gn);
    const VectorXd s = xn - out.x, yv = gn - out.g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const MatrixXd A = MatrixXd::Identity(dim, dim) - rho * s * yv.transpose();
      H = A * H * A.transpose() + rho * s * s.transpose();
    } else {
      H.setIdentity();
    }
    out.x = xn;
    out.f = fn;
    out.g = gn;
  }
  out.converged = out.g.lpNorm<Eigen::Infinity>() < scaled_tol(out.f);
  return out;
}

// Observed information = Hessian of the negative log-likelihood. Families with
// analytic scores difference the gradient; zero-inflated ones difference the
// objective itself (differencing a numeric gradient would stack truncation
// error).
MatrixXd observed_information(const Problem& pr, const VectorXd& x) {
  const int dim = pr.dim;
  MatrixXd h(dim, dim);
  if (has_analytic_grad(pr.f)) {
    VectorXd gp(dim), gm(dim), tp = x;
    for (int j = 0; j < dim; ++j) {
      const double hs = 1e-5 * (1.0 + std::abs(x[j]));
      tp[j] = x[j] + hs;
      grad_at(pr, tp, gp);
      tp[j] = x[j] - hs;
      grad_at(pr, tp, gm);
      tp[j] = x[j];
      h.col(j) = (gp - gm) / (2.0 * hs);
    }
  } else {
    const double f0 = negll_at(pr, x);
    VectorXd tp = x;
    std::vector<double> hs(dim);
    for (int j = 0; j < dim; ++j) hs[j] = 1e-4 * (1.0 + std::abs(x[j]));
    for (int j = 0; j < dim; ++j) {
      tp[j] = x[j] + hs[j];
      const double fp = negll_at(pr, tp);
      tp[j] = x[j] - hs[j];
      const double fm = negll_at(pr, tp);
      tp[j] = x[j];
      h(j, j) = (fp - 2.0 * f0 + fm) / (hs[j] * hs[j]);
      for (int k = j + 1; k < dim; ++k) {
        double v = 0.0;
        for (int sj : {1, -1})
          for (int sk : {1, -1}) {
            tp[j] = x[j] + sj * hs[j];
            tp[k] = x[k] + sk * hs[k];
            v += sj * sk * negll_at(pr, tp);
          }
        tp[j] = x[j];
        tp[k] = x[k];
        h(j, k) = h(k, j) = v / (4.0 * hs[j] * hs[k]);
      }
    }
  }
  return 0.5 * (h + h.transpose());
}

VectorXd start_point(const Problem& pr) {
  const Dataset& d = *pr.data;
  VectorXd x0 = VectorXd::Zero(pr.dim);
  if (pr.f == Family::Mnl) {
    std::vector<double> cnt(pr.n_outcomes, 0.5);
    for (long yi : d.y) cnt[yi - 1] += 1.0;
    for (int i = 1; i < pr.n_outcomes; ++i)
      x0[(i - 1) * pr.n_cov] = std::log(cnt[i - 1] / cnt[pr.n_outcomes - 1]);
    return x0;
  }
  double mean = 0.0;
  for (long yi : d.y) mean += static_cast<double>(yi);
  mean /= std::max<size_t>(1, d.n_rows());
  x0[0] = std::log(std::max(mean, 0.05));
  if (family_has_alpha(pr.f)) {
    double var = 0.0;
    for (long yi : d.y) var += (yi - mean) * (yi - mean);
    var /= std::max<size_t>(1, d.n_rows());
    const double a0 = mean > 0.0 ? std::max((var - mean) / (mean * mean), 0.01) : 0.5;
    x0[pr.n_cov] = std::log(a0);
  }
  if (family_has_tau(pr.f)) x0[pr.n_cov + (family_has_alpha(pr.f) ? 1 : 0)] = 1.0;
  return x0;
}

}  // namespace

MleFit fit_mle(Family f, const Dataset& data, int n_outcomes, const MleOptions& opt) {
  if (f == Family::ZeroOnly) throw std::invalid_argument("fit_mle: zero_only has no parameters");
  if (data.n_rows() == 0) throw std::invalid_argument("fit_mle: empty dataset");
  if (f == Family::Mnl) {
    if (n_outcomes < 2) throw std::invalid_argument("fit_mle: mnl needs n_outcomes >= 2");
    for (long yi : data.y)
      if (yi < 1 || yi > n_outcomes) throw std::invalid_argument("fit_mle: outcome out of range");
  } else {
    for (long yi : data.y)
      if (yi < 0) throw std::invalid_argument("fit_mle: negative count");
  }

  Problem pr;
  pr.f = f;
  pr.data = &data;
  pr.n_cov = data.n_cov;
  pr.n_outcomes = n_outcomes;
  pr.spec = ModelSpec::single(f, data.n_cov, data.cov_names, {}, n_outcomes);
  pr.dim = pr.spec.n_free();

  const VectorXd base = start_point(pr);
  BfgsOut best = bfgs(pr, base, opt.max_iter, opt.grad_tol);
  if (family_has_tau(f) || family_has_gamma(f)) {
    Rng rng(opt.seed, 0x4d4c45u);  // jittered restarts; zero-inflated surfaces are multimodal
    for (int rs = 1; rs < std::max(1, opt.zi_restarts); ++rs) {
      VectorXd x0 = base;
      for (int j = 0; j < pr.dim; ++j) x0[j] += 0.5 * rng.normal();
      BfgsOut cand = bfgs(pr, x0, opt.max_iter, opt.grad_tol);
      if ((cand.converged && !best.converged) ||
          (cand.converged == best.converged && cand.f < best.f))
        best = cand;
    }
  }

  MleFit fit;
  fit.family = f;
  fit.names = pr.spec.free_names;
  fit.est.assign(best.x.data(), best.x.data() + pr.dim);
  fit.loglik = -best.f;
  fit.n_obs = static_cast<long>(data.n_rows());
  fit.n_params = pr.dim;
  fit.converged = best.converged;
  if (family_has_alpha(f)) {
    fit.on_boundary = best.x[pr.n_cov] < -8.0;
    // At the boundary the ln_alpha direction is flat; the score there never
    // reaches the tolerance even though the fit is done.
    if (fit.on_boundary && !fit.converged) {
      VectorXd g = best.g;
      g[pr.n_cov] = 0.0;
      fit.converged =
          g.lpNorm<Eigen::Infinity>() < 10.0 * opt.grad_tol * std::max(1.0, std::abs(best.f));
    }
  }

  const MatrixXd info = observed_information(pr, best.x);
  Eigen::FullPivLU<MatrixXd> lu(info);
  fit.cov.assign(static_cast<size_t>(pr.dim) * pr.dim, 0.0);
  fit.se.assign(pr.dim, 0.0);
  if (lu.isInvertible()) {
    const MatrixXd cov = lu.inverse();
    fit.se_ok = true;
    for (int i = 0; i < pr.dim; ++i) {
      for (int j = 0; j < pr.dim; ++j) fit.cov[static_cast<size_t>(i) * pr.dim + j] = cov(i, j);
      if (cov(i, i) >= 0.0)
        fit.se[i] = std::sqrt(cov(i, i));
      else
        fit.se_ok = false;  // saddle point; variances unusable
    }
  }

  auto [aic, bic] = aic_bic(fit.n_params, fit.loglik, fit.n_obs);
  fit.aic = aic;
  fit.bic = bic;
  return fit;
}

std::pair<double, double> aic_bic(int k, double loglik, long n) {
  return {2.0 * k - 2.0 * loglik, k * std::log(static_cast<double>(n)) - 2.0 * loglik};
}

std::vector<double> mle_score(Family f, const Dataset& data, std::span<const double> theta,
                              int n_outcomes) {
  if (!has_analytic_grad(f))
    throw std::invalid_argument("mle_score: family has no analytic score");
  Problem pr;
  pr.f = f;
  pr.data = &data;
  pr.n_cov = data.n_cov;
  pr.n_outcomes = n_outcomes;
  pr.spec = ModelSpec::single(f, data.n_cov, data.cov_names, {}, n_outcomes);
  pr.dim = pr.spec.n_free();
  if (static_cast<int>(theta.size()) != pr.dim)
    throw std::invalid_argument("mle_score: parameter size mismatch");
  VectorXd th(pr.dim), g(pr.dim);
  for (int j = 0; j < pr.dim; ++j) th[j] = theta[j];
  grad_at(pr, th, g);
  std::vector<double> score(pr.dim);
  for (int j = 0; j < pr.dim; ++j) score[j] = -g[j];  // grad_at differentiates the negative
  return score;
}

}  // namespace rswitch
