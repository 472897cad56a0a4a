#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rswitch/dataset.hpp"
#include "rswitch/model.hpp"
#include "rswitch/sampler.hpp"
#include "rswitch/switching.hpp"

namespace rswitch {

// The continuous parameter vector of one draw: free coefficients, then p01
// per free interval, then p10 per free interval.
int n_continuous(const ChainResult& c);
double continuous_at(const ChainResult& c, long g, int j);
std::vector<std::string> continuous_names(const ModelSpec& spec, const SwitchingLayout& layout);

struct ConvergenceReport {
  std::vector<double> psrf;  // per continuous parameter
  double mpsrf = 1.0;
  bool w_singular = false;   // within-chain covariance not positive definite
  long draws_used = 0;       // per chain (the shortest chain decides)
  int n_chains = 0;
};

// Potential scale reduction factors over >= 2 chains: with per-chain means
// m_c and covariances W_c, B = cov of means, W = mean of W_c,
// V = ((G-1)/G) W + ((M+1)/M) B; PSRF_j = sqrt(V_jj / W_jj) and
// MPSRF = sqrt((G-1)/G + ((M+1)/M) lambda_max(W^-1 B)).
ConvergenceReport psrf_mpsrf(std::span<const ChainResult> chains);

// Indices of chains kept for inference: aborted chains drop, then chains
// whose mean log-joint trails the best by more than delta drop (they sit on
// the wrong side of a label restriction or a minor mode).
std::vector<int> resolve_labels(std::span<const ChainResult> chains, double delta = 5.0);

// Quantile with linear interpolation on an ascending-sorted sample:
// h = (n-1) q, result = x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]).
double quantile_linear(std::span<const double> sorted, double q);

struct ParamSummary {
  std::string name;
  double mean = 0, sd = 0, median = 0, lo = 0, hi = 0;
};

struct PosteriorSummary {
  std::vector<ParamSummary> params;  // continuous vector order
  std::vector<double> state_prob;    // per auxiliary period, P(s = 1), pooled
  std::vector<double> state_sd;      // sqrt(p (1 - p))
  double mean_loglik = 0;
  long pooled_draws = 0;
  double level = 0.95;
};

PosteriorSummary summarize(std::span<const ChainResult> chains, std::span<const int> keep,
                           const ModelSpec& spec, const SwitchingLayout& layout,
                           double level = 0.95);

// Per-period posterior P(s = 1) and sqrt(p (1 - p)) pooled over kept chains.
std::pair<std::vector<double>, std::vector<double>> pooled_state_probs(
    std::span<const ChainResult> chains, std::span<const int> keep);

// Harmonic-mean estimate: log m = -(logsumexp(-loglik) - log G).
double log_marginal_likelihood(std::span<const double> loglik);

struct MargLikCi {
  double log_ml = 0;
  double lo = 0, hi = 0;
  long n_boot = 0;
  long subsample = 0;
};

// Bootstrap interval: n_boot harmonic-mean estimates over with-replacement
// subsamples of size ceil(G / subsample_div), central quantiles at `level`.
MargLikCi bootstrap_marglik_ci(std::span<const double> loglik, double level = 0.95,
                               long n_boot = 100000, long subsample_div = 100,
                               uint64_t seed = 2027);

// log BF(a over b) = log_ml_a - log_ml_b.
double log_bayes_factor(double log_ml_a, double log_ml_b);

// 2 * mean(-2 loglik) - (-2 loglik_at_point), the point being a posterior
// central value of the parameters.
double dic(std::span<const double> loglik, double loglik_at_point);

// Chi-square statistic against the stationary two-state mixture: for counts,
// sum (y - E)^2 / Var from per-state means/variances mixed with the governing
// interval's stationary probabilities; for the multinomial logit, sum over
// outcomes of (indicator - P)^2 / P with the mixed outcome probabilities.
double chisq_stat(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                  const SwitchingLayout& layout, std::span<const double> free_values,
                  const TransitionProbs& probs);

struct GofResult {
  double stat = 0;       // observed statistic
  double p_value = 0;    // (1 + #{replicate >= observed}) / (1 + R)
  long n_replicates = 0;
};

// Monte-Carlo goodness-of-fit: replicates keep the covariate design and
// regenerate states from the transition probabilities and responses from the
// fitted parameters.
GofResult gof_pvalue(const Dataset& data, const ModelSpec& spec, const SwitchingLayout& layout,
                     std::span<const double> free_values, const TransitionProbs& probs,
                     long n_replicates, uint64_t seed);

// Weighted Pearson correlation between a per-period series and the posterior
// state probabilities, weights w = min(1/sd, median over periods of 1/sd);
// sd = 0 entries take the median cap.
double weighted_state_correlation(std::span<const double> series,
                                  std::span<const double> state_prob,
                                  std::span<const double> state_sd);

}  // namespace rswitch
