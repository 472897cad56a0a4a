#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rswitch/dataset.hpp"
#include "rswitch/model.hpp"
#include "rswitch/switching.hpp"

namespace rswitch {

// One full sampler state: free coefficient values (table order), transition
// probabilities per free interval, and the auxiliary-time state vector.
struct ParamPoint {
  std::vector<double> free_coefs;
  TransitionProbs probs;
  std::vector<uint8_t> s;  // size T_tilde; empty for single-state specs
};

// Independent normal priors over free coefficients.
struct CoefPrior {
  std::vector<double> mu, sigma2;
};

// Beta(upsilon0, nu0) on p01 and Beta(upsilon1, nu1) on p10 per free interval.
struct TransitionPrior {
  std::vector<std::array<double, 4>> hyper;  // {upsilon0, nu0, upsilon1, nu1}
};

struct PriorSpec {
  CoefPrior coef;
  TransitionPrior trans;
};

// mu_k = value_k, Sigma_k = 10 * max(value_k^2, variance_k); a slot whose
// value and variance are both zero falls back to Sigma_k = 10.
CoefPrior derive_hyperparams(std::span<const double> values, std::span<const double> variances);

// Flat Beta(1,1) on every free interval.
TransitionPrior default_transition_prior(int n_free_intervals);

// Sum of the free coefficients' normal log-densities (full densities,
// constants included).
double log_coef_prior(const CoefPrior& prior, std::span<const double> free_vals);

// Beta log-densities plus the label indicator: a restricted layout returns
// the log-zero sentinel whenever p01 > p10 in any free interval.
double log_transition_prior(const TransitionPrior& prior, const TransitionProbs& probs,
                            const SwitchingLayout& layout);

// Coefficient prior + transition prior + log P(S | probs). Single-state
// specs have no transition or state terms.
double log_prior(const ParamPoint& theta, const ModelSpec& spec, const SwitchingLayout& layout,
                 const PriorSpec& prior);

// Sum over observations of the state-dispatched log-likelihood.
double log_likelihood(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                      const ParamPoint& theta);

double log_joint(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                 const SwitchingLayout& layout, const PriorSpec& prior, const ParamPoint& theta);

}  // namespace rswitch
