#include "rswitch/config.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace rswitch {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok) fail("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  return j.at(key).get<T>();
}

void parse_model(const json& j, RunConfig& c) {
  check_keys(j, {"family0", "family1", "single_state", "n_outcomes", "restrictions"}, "model");
  c.single_state = get_or(j, "single_state", false);
  if (!j.contains("family1")) fail("model.family1 is required");
  c.family1 = family_from_name(j.at("family1").get<std::string>());
  if (c.single_state) {
    if (j.contains("family0")) fail("model.family0 has no meaning for a single-state model");
  } else {
    if (!j.contains("family0")) fail("model.family0 is required for a two-state model");
    c.family0 = family_from_name(j.at("family0").get<std::string>());
  }
  c.n_outcomes = get_or(j, "n_outcomes", 0);
  if (j.contains("restrictions")) {
    const json& r = j.at("restrictions");
    if (!r.is_object()) fail("model.restrictions must be an object");
    for (auto it = r.begin(); it != r.end(); ++it) c.restrictions.emplace_back(it.key(), it.value());
  }
}

void parse_layout(const json& j, RunConfig& c) {
  check_keys(j, {"kind", "T", "N", "bounds", "tie", "t_minus", "restricted"}, "layout");
  c.has_layout = true;
  const std::string kind = get_or<std::string>(j, "kind", "weekly");
  if (kind == "annual")
    c.kind = LayoutKind::Annual;
  else if (kind == "weekly")
    c.kind = LayoutKind::Weekly;
  else if (kind == "severity")
    c.kind = LayoutKind::Severity;
  else if (kind == "intervals")
    c.kind = LayoutKind::Intervals;
  else
    fail("layout.kind must be annual, weekly, severity or intervals");
  if (!j.contains("T")) fail("layout.T is required");
  c.T = j.at("T").get<int>();
  c.N = get_or(j, "N", 1);
  c.bounds = get_or(j, "bounds", std::vector<int>{});
  c.tie = get_or(j, "tie", std::vector<int>{});
  c.t_minus = get_or(j, "t_minus", std::vector<int>{});
  c.restricted = get_or(j, "restricted", true);
  if (c.kind == LayoutKind::Annual && !j.contains("N")) fail("layout.N is required for annual");
  if (c.kind == LayoutKind::Intervals && c.bounds.empty())
    fail("layout.bounds is required for intervals");
}

void parse_sampler(const json& j, RunConfig& c) {
  check_keys(j,
             {"draws", "burn_in", "thin", "chains", "tau_block", "target_accept", "tune_window",
              "tune_factor", "jump", "init_sigma", "seed", "max_init_retries",
              "verify_cache_every"},
             "sampler");
  SamplerConfig& s = c.sampler;
  s.draws = get_or<long>(j, "draws", s.draws);
  s.burn_in = get_or<long>(j, "burn_in", s.burn_in);
  s.thin = get_or(j, "thin", s.thin);
  s.n_chains = get_or(j, "chains", s.n_chains);
  s.tau_block = get_or(j, "tau_block", s.tau_block);
  s.target_accept = get_or(j, "target_accept", s.target_accept);
  s.tune_window = get_or(j, "tune_window", s.tune_window);
  s.tune_factor = get_or(j, "tune_factor", s.tune_factor);
  const std::string jump = get_or<std::string>(j, "jump", "normal");
  if (jump == "normal")
    s.jump = JumpShape::Normal;
  else if (jump == "cauchy")
    s.jump = JumpShape::Cauchy;
  else
    fail("sampler.jump must be normal or cauchy");
  s.init_sigma = get_or(j, "init_sigma", s.init_sigma);
  s.seed = get_or<uint64_t>(j, "seed", s.seed);
  s.max_init_retries = get_or<long>(j, "max_init_retries", s.max_init_retries);
  s.verify_cache_every = get_or(j, "verify_cache_every", s.verify_cache_every);
}

void parse_prior(const json& j, RunConfig& c) {
  check_keys(j, {"auto_from_mle", "mu", "sigma2", "transitions"}, "prior");
  c.prior_auto = get_or(j, "auto_from_mle", true);
  if (j.contains("mu"))
    for (auto it = j.at("mu").begin(); it != j.at("mu").end(); ++it)
      c.prior_mu[it.key()] = it.value().get<double>();
  if (j.contains("sigma2"))
    for (auto it = j.at("sigma2").begin(); it != j.at("sigma2").end(); ++it) {
      const double v = it.value().get<double>();
      if (v <= 0) fail("prior.sigma2 entries must be positive");
      c.prior_sigma2[it.key()] = v;
    }
  if (j.contains("transitions")) {
    for (const json& row : j.at("transitions")) {
      if (!row.is_array() || row.size() != 4) fail("prior.transitions rows are [u0, n0, u1, n1]");
      std::array<double, 4> h;
      for (int i = 0; i < 4; ++i) {
        h[i] = row[i].get<double>();
        if (h[i] <= 0) fail("prior.transitions entries must be positive");
      }
      c.prior_transitions.push_back(h);
    }
  }
}

void parse_truth(const json& j, RunConfig& c) {
  check_keys(j, {"coefs", "p01", "p10", "design"}, "truth");
  c.has_truth = true;
  if (!j.contains("coefs")) fail("truth.coefs is required");
  for (auto it = j.at("coefs").begin(); it != j.at("coefs").end(); ++it)
    c.truth_coefs[it.key()] = it.value().get<double>();
  c.truth_p01 = get_or(j, "p01", std::vector<double>{});
  c.truth_p10 = get_or(j, "p10", std::vector<double>{});
  if (!j.contains("design")) fail("truth.design is required");
  const json& d = j.at("design");
  check_keys(d, {"rows_per_period", "n_cov", "shared_within_period", "seed"}, "truth.design");
  c.design_rows_per_period = get_or(d, "rows_per_period", 1);
  c.design_n_cov = get_or(d, "n_cov", 1);
  c.design_shared = get_or(d, "shared_within_period", true);
  c.design_seed = get_or<uint64_t>(d, "seed", 42);
  if (c.design_rows_per_period < 1) fail("truth.design.rows_per_period must be >= 1");
  if (c.design_n_cov < 1) fail("truth.design.n_cov must be >= 1");
}

}  // namespace

RunConfig parse_config(const json& j) {
  if (!j.is_object()) fail("top level must be an object");
  check_keys(j, {"model", "layout", "sampler", "prior", "analysis", "truth"}, "config");
  RunConfig c;
  c.raw = j;
  if (!j.contains("model")) fail("model section is required");
  parse_model(j.at("model"), c);
  if (j.contains("layout")) parse_layout(j.at("layout"), c);
  if (j.contains("sampler")) parse_sampler(j.at("sampler"), c);
  if (j.contains("prior")) parse_prior(j.at("prior"), c);
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    check_keys(a, {"level", "label_delta"}, "analysis");
    c.level = get_or(a, "level", 0.95);
    c.label_delta = get_or(a, "label_delta", 5.0);
    if (c.level <= 0 || c.level >= 1) fail("analysis.level must be in (0, 1)");
    if (c.label_delta <= 0) fail("analysis.label_delta must be positive");
  }
  if (j.contains("truth")) parse_truth(j.at("truth"), c);
  if (!c.single_state && !c.has_layout) fail("layout section is required for a two-state model");
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return parse_config(j);
}

SwitchingLayout layout_from_config(const RunConfig& c, int fallback_T) {
  if (!c.has_layout) {
    if (c.single_state && fallback_T > 0) return SwitchingLayout::weekly(fallback_T);
    fail("layout section is required");
  }
  switch (c.kind) {
    case LayoutKind::Annual:
      return SwitchingLayout::annual(c.T, c.N);
    case LayoutKind::Weekly:
      return SwitchingLayout::weekly(c.T);
    case LayoutKind::Severity:
      return SwitchingLayout::severity(c.T);
    case LayoutKind::Intervals:
      return SwitchingLayout::intervals(c.T, c.bounds, c.tie, c.t_minus, c.restricted);
  }
  fail("unreachable layout kind");
}

ModelSpec spec_from_config(const RunConfig& c, std::vector<std::string> cov_names) {
  const int n_cov = static_cast<int>(cov_names.size());
  std::vector<ParamDesc> table;
  if (!c.single_state) {
    table = param_table(c.family0, 0, n_cov, cov_names, c.n_outcomes);
  }
  std::vector<ParamDesc> s1 = param_table(c.family1, 1, n_cov, cov_names, c.n_outcomes);
  table.insert(table.end(), s1.begin(), s1.end());
  std::unordered_map<std::string, int> slot_of;
  for (size_t i = 0; i < table.size(); ++i) slot_of[table[i].name] = static_cast<int>(i);

  std::vector<Restriction> restr(table.size());
  for (const auto& [name, val] : c.restrictions) {
    auto it = slot_of.find(name);
    if (it == slot_of.end()) fail("restriction on unknown parameter '" + name + "'");
    Restriction& r = restr[it->second];
    if (val.is_string()) {
      const std::string s = val.get<std::string>();
      if (s == "zero")
        r.kind = Restriction::Kind::Zero;
      else if (s == "minus_inf" || s == "minus_infinity")
        r.kind = Restriction::Kind::MinusInfinity;
      else if (s == "free")
        r.kind = Restriction::Kind::Free;
      else
        fail("restriction '" + name + "': unknown value '" + s + "'");
    } else if (val.is_object() && val.contains("tied") && val.size() == 1) {
      const std::string parent = val.at("tied").get<std::string>();
      auto pit = slot_of.find(parent);
      if (pit == slot_of.end()) fail("restriction '" + name + "': unknown parent '" + parent + "'");
      r.kind = Restriction::Kind::TiedTo;
      r.parent = pit->second;
    } else {
      fail("restriction '" + name + "': expected \"zero\", \"minus_inf\", \"free\" or {\"tied\": name}");
    }
  }
  if (c.single_state)
    return ModelSpec::single(c.family1, n_cov, std::move(cov_names), std::move(restr),
                             c.n_outcomes);
  return ModelSpec::make(c.family0, c.family1, n_cov, std::move(cov_names), std::move(restr),
                         c.n_outcomes);
}

PriorSpec prior_from_config(const RunConfig& c, const ModelSpec& spec,
                            const SwitchingLayout& layout, const Dataset& data, MleFit* fit_out) {
  const int nf = spec.n_free();
  std::vector<double> values(nf, 0.0), variances(nf, 0.0);
  if (c.prior_auto) {
    const MleFit fit = fit_mle(spec.family1, data, spec.n_outcomes);
    if (fit_out) *fit_out = fit;
    std::unordered_map<std::string, int> fit_slot;
    for (size_t k = 0; k < fit.names.size(); ++k) fit_slot[fit.names[k]] = static_cast<int>(k);
    for (int i = 0; i < nf; ++i) {
      std::string name = spec.free_names[i];
      if (name.rfind("s0.", 0) == 0) name = "s1." + name.substr(3);
      auto it = fit_slot.find(name);
      if (it == fit_slot.end()) continue;  // fallback mean 0, variance 10
      values[i] = fit.est[it->second];
      if (fit.se_ok) variances[i] = fit.cov[static_cast<size_t>(it->second) * fit.n_params + it->second];
    }
  }
  PriorSpec prior;
  prior.coef = derive_hyperparams(values, variances);
  for (const auto& [name, mu] : c.prior_mu) {
    bool found = false;
    for (int i = 0; i < nf; ++i)
      if (spec.free_names[i] == name) {
        prior.coef.mu[i] = mu;
        found = true;
      }
    if (!found) fail("prior.mu names unknown free parameter '" + name + "'");
  }
  for (const auto& [name, s2] : c.prior_sigma2) {
    bool found = false;
    for (int i = 0; i < nf; ++i)
      if (spec.free_names[i] == name) {
        prior.coef.sigma2[i] = s2;
        found = true;
      }
    if (!found) fail("prior.sigma2 names unknown free parameter '" + name + "'");
  }
  prior.trans = default_transition_prior(layout.n_free_intervals());
  if (!c.prior_transitions.empty()) {
    if (c.prior_transitions.size() != prior.trans.hyper.size())
      fail("prior.transitions must list one row per free interval");
    prior.trans.hyper = c.prior_transitions;
  }
  return prior;
}

SimRecipe recipe_from_config(const RunConfig& c) {
  if (!c.has_truth) fail("truth section is required to simulate");
  SimRecipe r;
  r.layout = layout_from_config(c, c.single_state ? c.T : 0);
  std::vector<std::string> cov_names{"const"};
  for (int k = 1; k < c.design_n_cov; ++k) cov_names.push_back("x" + std::to_string(k));
  r.spec = spec_from_config(c, cov_names);

  r.free_values.resize(r.spec.n_free());
  std::string missing;
  for (int i = 0; i < r.spec.n_free(); ++i) {
    auto it = c.truth_coefs.find(r.spec.free_names[i]);
    if (it == c.truth_coefs.end()) {
      missing += (missing.empty() ? "" : ", ") + r.spec.free_names[i];
      continue;
    }
    r.free_values[i] = it->second;
  }
  if (!missing.empty()) fail("truth.coefs is missing: " + missing);
  for (const auto& [name, value] : c.truth_coefs) {
    (void)value;
    bool known = false;
    for (const std::string& fn : r.spec.free_names)
      if (fn == name) known = true;
    if (!known) fail("truth.coefs names unknown free parameter '" + name + "'");
  }

  if (!r.spec.single_state) {
    const size_t nfi = static_cast<size_t>(r.layout.n_free_intervals());
    if (c.truth_p01.size() != nfi || c.truth_p10.size() != nfi)
      fail("truth.p01/p10 must list one value per free interval");
    r.probs.p01 = c.truth_p01;
    r.probs.p10 = c.truth_p10;
    for (size_t i = 0; i < nfi; ++i) {
      if (r.probs.p01[i] <= 0 || r.probs.p01[i] >= 1 || r.probs.p10[i] <= 0 || r.probs.p10[i] >= 1)
        fail("truth transition probabilities must lie in (0, 1)");
      if (r.layout.restricted && r.probs.p01[i] > r.probs.p10[i])
        fail("truth violates the p01 <= p10 restriction");
    }
  }

  const std::vector<int> counts(r.layout.T_tilde, c.design_rows_per_period);
  Rng rng(c.design_seed, 0xde51u);
  r.design = make_normal_design(r.layout, counts, c.design_n_cov, c.design_shared, rng);
  return r;
}

}  // namespace rswitch
