#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rswitch/dataset.hpp"
#include "rswitch/model.hpp"

namespace rswitch {

struct MleOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;   // infinity norm of the score
  int zi_restarts = 5;      // jittered restarts for zero-inflated fits
  uint64_t seed = 7;
};

struct MleFit {
  Family family = Family::Poisson;
  std::vector<std::string> names;
  std::vector<double> est;
  std::vector<double> se;
  std::vector<double> cov;  // row-major p x p, inverse observed information
  double loglik = 0.0;
  long n_obs = 0;
  int n_params = 0;
  bool converged = false;
  bool se_ok = false;        // false when the observed information is singular
  bool on_boundary = false;  // overdispersion pushed to the alpha -> 0 boundary
  double aic = 0.0, bic = 0.0;
};

// Single-state maximum likelihood for all count families and the multinomial
// logit. Parameter order matches param_table: beta, then ln_alpha, tau or
// gamma as the family requires.
MleFit fit_mle(Family f, const Dataset& data, int n_outcomes = 0, const MleOptions& opt = {});

// Analytic log-likelihood gradient at an arbitrary parameter point, in the
// same order as fit_mle estimates. Only the families with closed-form scores
// (poisson, negbin, mnl) are accepted; zero-inflated fits differentiate
// numerically and have no analytic score to expose.
std::vector<double> mle_score(Family f, const Dataset& data, std::span<const double> theta,
                              int n_outcomes = 0);

// {2k - 2*loglik, k*ln(n) - 2*loglik}.
std::pair<double, double> aic_bic(int k, double loglik, long n);

}  // namespace rswitch
