#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rswitch/dataset.hpp"
#include "rswitch/sampler.hpp"

namespace rswitch {

// Loads `t,n,y,<covariates...>` with a header line; a constant column named
// "const" is prepended automatically when the file has none. Errors carry
// `path:line:` positions.
Dataset load_dataset_csv(const std::string& path);

void save_dataset_csv(const std::string& path, const Dataset& data);

// FNV-1a 64 over the compact JSON dump; keys are serialized in sorted order,
// so semantically equal configs hash equally.
uint64_t config_hash(const nlohmann::json& config);

// Writes <prefix>.meta.json (config + hash + per-chain tuning info),
// <prefix>.chain<k>.csv (draw, loglik, logjoint, continuous parameters at
// full double precision) and <prefix>.chain<k>.states.bin (bit-packed state
// draws).
void persist_run(const std::string& prefix, const nlohmann::json& config, const RunResult& run,
                 std::span<const std::string> column_names);

struct LoadedRun {
  nlohmann::json config;
  uint64_t hash = 0;
  std::vector<std::string> column_names;
  RunResult run;
};

// Refuses on format-version mismatch or when the stored hash does not match
// the stored config (edited or mixed files).
LoadedRun load_run(const std::string& prefix);

}  // namespace rswitch
