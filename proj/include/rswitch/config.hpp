#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rswitch/datagen.hpp"
#include "rswitch/dataset.hpp"
#include "rswitch/mle.hpp"
#include "rswitch/model.hpp"
#include "rswitch/priors.hpp"
#include "rswitch/sampler.hpp"
#include "rswitch/switching.hpp"

namespace rswitch {

// Parsed run configuration. Sections: model (families, restrictions), layout
// (switching structure), sampler, prior, analysis, and an optional truth
// section for simulation.
struct RunConfig {
  nlohmann::json raw;

  Family family0 = Family::ZeroOnly;
  Family family1 = Family::NegBin;
  bool single_state = false;
  int n_outcomes = 0;
  std::vector<std::pair<std::string, nlohmann::json>> restrictions;

  bool has_layout = false;
  LayoutKind kind = LayoutKind::Weekly;
  int T = 0, N = 1;
  std::vector<int> bounds, tie, t_minus;
  bool restricted = true;

  SamplerConfig sampler;

  bool prior_auto = true;
  std::map<std::string, double> prior_mu, prior_sigma2;
  std::vector<std::array<double, 4>> prior_transitions;

  double level = 0.95;
  double label_delta = 5.0;

  bool has_truth = false;
  std::map<std::string, double> truth_coefs;
  std::vector<double> truth_p01, truth_p10;
  int design_rows_per_period = 1;
  int design_n_cov = 1;
  bool design_shared = true;
  uint64_t design_seed = 42;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config_file(const std::string& path);

// fallback_T builds a default single-interval layout for single-state runs
// that omit the layout section (0 forbids the fallback).
SwitchingLayout layout_from_config(const RunConfig& c, int fallback_T = 0);

// Materializes the model over the dataset's covariates, resolving restriction
// names against the implied parameter table.
ModelSpec spec_from_config(const RunConfig& c, std::vector<std::string> cov_names);

// Coefficient priors centered on the single-state fit of the state-1 family
// when prior.auto_from_mle (the default); explicit mu/sigma2 entries override
// per parameter. Slots that the single-state fit lacks fall back to
// mean 0, variance 10.
PriorSpec prior_from_config(const RunConfig& c, const ModelSpec& spec,
                            const SwitchingLayout& layout, const Dataset& data,
                            MleFit* fit_out = nullptr);

// Simulation recipe realized from the truth section.
SimRecipe recipe_from_config(const RunConfig& c);

}  // namespace rswitch
