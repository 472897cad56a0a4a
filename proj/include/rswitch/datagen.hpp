#pragma once

#include <cstdint>
#include <vector>

#include "rswitch/dataset.hpp"
#include "rswitch/model.hpp"
#include "rswitch/priors.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/switching.hpp"

namespace rswitch {

// s_1 ~ Bernoulli(1/2); later states follow the interval-resolved Markov
// transitions, except that the first state after each t_minus cut is again
// Bernoulli(1/2).
std::vector<uint8_t> simulate_states(const SwitchingLayout& layout, const TransitionProbs& probs,
                                     Rng& rng);

// Draws responses in-place for every row of `design` given states and
// assembled parameters: counts from the state's count family (NB via
// gamma-Poisson mixing), outcomes from the multinomial logit.
void simulate_responses(Dataset& design, const PeriodIndex& pidx, const ModelSpec& spec,
                        const StateParams& p0, const StateParams& p1,
                        std::span<const uint8_t> s, Rng& rng);

struct SimRecipe {
  ModelSpec spec;
  SwitchingLayout layout;
  std::vector<double> free_values;
  TransitionProbs probs;
  Dataset design;  // y is overwritten
};

struct SimResult {
  Dataset data;
  std::vector<uint8_t> states;
};

SimResult simulate_dataset(const SimRecipe& recipe, Rng& rng);

// Design helper: one shared covariate row per period replicated n_per_period
// times (or per-row covariates when shared == false); covariate 0 is the
// constant, the rest standard normal draws.
Dataset make_normal_design(const SwitchingLayout& layout, std::span<const int> n_per_period,
                           int n_cov, bool shared_within_period, Rng& rng);

}  // namespace rswitch
