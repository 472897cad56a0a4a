#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rswitch/analysis.hpp"
#include "rswitch/config.hpp"
#include "rswitch/datagen.hpp"
#include "rswitch/io.hpp"
#include "rswitch/mle.hpp"
#include "rswitch/priors.hpp"
#include "rswitch/sampler.hpp"

namespace {

using namespace rswitch;

int max_period(const Dataset& d) {
  int m = 0;
  for (int t : d.t) m = std::max(m, t);
  return m;
}

void print_param_table(const std::vector<ParamSummary>& params) {
  std::printf("%-24s %12s %10s %12s %12s %12s\n", "parameter", "mean", "sd", "median", "lo", "hi");
  for (const ParamSummary& p : params)
    std::printf("%-24s %12.5f %10.5f %12.5f %12.5f %12.5f\n", p.name.c_str(), p.mean, p.sd,
                p.median, p.lo, p.hi);
}

std::vector<double> pooled_loglik(const RunResult& run, const std::vector<int>& keep) {
  std::vector<double> ll;
  for (int i : keep) ll.insert(ll.end(), run.chains[i].loglik.begin(), run.chains[i].loglik.end());
  return ll;
}

// Posterior means split into (free coefficients, transition probabilities).
std::pair<std::vector<double>, TransitionProbs> posterior_point(const PosteriorSummary& s,
                                                                int n_free, int n_fi) {
  std::vector<double> coefs(n_free);
  for (int k = 0; k < n_free; ++k) coefs[k] = s.params[k].mean;
  TransitionProbs probs;
  for (int r = 0; r < n_fi; ++r) {
    probs.p01.push_back(s.params[n_free + r].mean);
    probs.p10.push_back(s.params[n_free + n_fi + r].mean);
  }
  return {std::move(coefs), probs};
}

void report_run(const RunResult& run, const std::vector<int>& keep, const ModelSpec& spec,
                const SwitchingLayout& layout, const Dataset& data, double level) {
  std::printf("chains kept: %zu of %zu (", keep.size(), run.chains.size());
  for (size_t i = 0; i < keep.size(); ++i) std::printf("%s%d", i ? "," : "", keep[i]);
  std::printf(")\n");
  for (const ChainResult& c : run.chains) {
    if (c.aborted) {
      std::printf("chain %d aborted: %s\n", c.chain_id, c.abort_reason.c_str());
      continue;
    }
    double lo = 1.0, hi = 0.0;
    for (double a : c.accept_rate) {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    if (c.accept_rate.empty()) lo = hi = 0.0;
    std::printf("chain %d: %ld draws stored, acceptance %.3f..%.3f\n", c.chain_id, c.n_stored, lo,
                hi);
  }
  std::vector<ChainResult> kept;
  for (int i : keep) kept.push_back(run.chains[i]);
  if (kept.size() >= 2) {
    const ConvergenceReport conv = psrf_mpsrf(kept);
    double worst = 0.0;
    for (double v : conv.psrf) worst = std::max(worst, v);
    std::printf("convergence: worst PSRF %.4f, MPSRF %.4f%s\n", worst, conv.mpsrf,
                conv.w_singular ? " (within-chain covariance regularized)" : "");
  }
  const PosteriorSummary s = summarize(run.chains, keep, spec, layout, level);
  print_param_table(s.params);

  const std::vector<double> ll = pooled_loglik(run, keep);
  const double log_ml = log_marginal_likelihood(ll);
  auto [coefs, probs] = posterior_point(s, spec.n_free(), spec.single_state ? 0 : layout.n_free_intervals());
  ParamPoint point;
  point.free_coefs = coefs;
  point.probs = probs;
  if (!spec.single_state) {
    point.s.resize(layout.T_tilde);
    for (int t0 = 0; t0 < layout.T_tilde; ++t0) point.s[t0] = s.state_prob[t0] >= 0.5 ? 1 : 0;
  }
  const PeriodIndex pidx = group_by_period(data, layout);
  const double ll_point = log_likelihood(data, pidx, spec, point);
  std::printf("pooled draws: %ld   mean loglik: %.4f\n", s.pooled_draws, s.mean_loglik);
  std::printf("log marginal likelihood (harmonic mean): %.4f\n", log_ml);
  std::printf("DIC: %.4f\n", dic(ll, ll_point));
}

// Requires the config that produced a persisted run to match the one on disk.
void require_same_config(const LoadedRun& loaded, const RunConfig& cfg, const std::string& which) {
  if (config_hash(loaded.config) != config_hash(cfg.raw))
    throw std::runtime_error(which + ": run was produced by a different config (hash mismatch)");
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& states_path, uint64_t seed) {
  const RunConfig cfg = load_config_file(config_path);
  const SimRecipe recipe = recipe_from_config(cfg);
  Rng rng(seed, 0x51afull);
  const SimResult res = simulate_dataset(recipe, rng);
  save_dataset_csv(out_path, res.data);
  std::printf("wrote %zu rows over %d periods to %s\n", res.data.n_rows(),
              recipe.layout.T_tilde, out_path.c_str());
  if (!states_path.empty()) {
    std::ofstream f(states_path);
    if (!f) throw std::runtime_error(states_path + ": cannot open for writing");
    f << "t_tilde,s\n";
    for (size_t i = 0; i < res.states.size(); ++i) f << (i + 1) << ',' << int(res.states[i]) << '\n';
    std::printf("wrote true states to %s\n", states_path.c_str());
  }
  return 0;
}

int cmd_mle(const std::string& data_path, const std::string& family, int n_outcomes,
            long gof_replicates, uint64_t seed) {
  const Dataset data = load_dataset_csv(data_path);
  const Family f = family_from_name(family);
  const MleFit fit = fit_mle(f, data, n_outcomes);
  std::printf("%-24s %12s %10s\n", "parameter", "estimate", "se");
  for (int k = 0; k < fit.n_params; ++k)
    std::printf("%-24s %12.5f %10.5f\n", fit.names[k].c_str(), fit.est[k], fit.se[k]);
  std::printf("loglik: %.4f   AIC: %.4f   BIC: %.4f\n", fit.loglik, fit.aic, fit.bic);
  std::printf("converged: %s%s%s\n", fit.converged ? "yes" : "no",
              fit.on_boundary ? "   (dispersion at the alpha -> 0 boundary)" : "",
              fit.se_ok ? "" : "   (information matrix singular; no standard errors)");
  if (gof_replicates > 0) {
    const SwitchingLayout layout = SwitchingLayout::weekly(max_period(data));
    const ModelSpec spec = ModelSpec::single(f, data.n_cov, data.cov_names, {}, n_outcomes);
    const GofResult gof = gof_pvalue(data, spec, layout, fit.est, TransitionProbs{},
                                     gof_replicates, seed);
    std::printf("chi-square: %.4f   MC p-value: %.4f (%ld replicates)\n", gof.stat, gof.p_value,
                gof.n_replicates);
  }
  return fit.converged ? 0 : 1;
}

int cmd_fit(const std::string& config_path, const std::string& data_path,
            const std::string& out_prefix, int chains, long draws, int64_t seed, int threads,
            bool verbose) {
  const RunConfig parsed = load_config_file(config_path);
  RunConfig cfg = parsed;
  if (chains > 0) cfg.sampler.n_chains = chains;
  if (draws > 0) cfg.sampler.draws = draws;
  if (seed >= 0) cfg.sampler.seed = static_cast<uint64_t>(seed);
  const Dataset data = load_dataset_csv(data_path);
  const SwitchingLayout layout = layout_from_config(cfg, max_period(data));
  const ModelSpec spec = spec_from_config(cfg, data.cov_names);
  MleFit prior_fit;
  const PriorSpec prior = prior_from_config(cfg, spec, layout, data, &prior_fit);
  if (cfg.prior_auto)
    std::printf("prior centered on %s fit: loglik %.4f%s\n", family_name(spec.family1),
                prior_fit.loglik, prior_fit.converged ? "" : " (not converged)");
  ProgressFn progress;
  if (verbose) {
    const long every = std::max<long>(1, cfg.sampler.draws / 10);
    progress = [every](int chain, long sweep, double logjoint) {
      if (sweep % every == 0)
        std::fprintf(stderr, "chain %d: sweep %ld, log joint %.2f\n", chain, sweep, logjoint);
    };
  }
  const RunResult run = run_chains(data, spec, layout, prior, cfg.sampler, threads, progress);
  if (!out_prefix.empty())
    persist_run(out_prefix, cfg.raw, run, continuous_names(spec, layout));
  const std::vector<int> keep = resolve_labels(run.chains, cfg.label_delta);
  if (keep.empty()) {
    std::fprintf(stderr, "all chains aborted\n");
    return 1;
  }
  report_run(run, keep, spec, layout, data, cfg.level);
  if (!out_prefix.empty()) std::printf("run persisted under prefix %s\n", out_prefix.c_str());
  return 0;
}

int cmd_diagnose(const std::string& run_prefix, double delta) {
  const LoadedRun loaded = load_run(run_prefix);
  const RunResult& run = loaded.run;
  for (const ChainResult& c : run.chains) {
    double mean_lj = 0;
    for (double v : c.logjoint) mean_lj += v;
    if (c.n_stored > 0) mean_lj /= static_cast<double>(c.n_stored);
    int tuned = 0;
    for (uint8_t ok : c.tune_fit_ok) tuned += ok;
    std::printf("chain %d: %s, mean log joint %.3f, %d/%zu proposal fits\n", c.chain_id,
                c.aborted ? ("aborted: " + c.abort_reason).c_str() : "ok", mean_lj, tuned,
                c.tune_fit_ok.size());
  }
  const std::vector<int> keep = resolve_labels(run.chains, delta);
  std::printf("kept after label resolution (delta %.1f):", delta);
  for (int i : keep) std::printf(" %d", i);
  std::printf("\n");
  if (keep.size() < 2) {
    std::printf("need >= 2 kept chains for scale-reduction diagnostics\n");
    return keep.empty() ? 1 : 0;
  }
  std::vector<ChainResult> kept;
  for (int i : keep) kept.push_back(run.chains[i]);
  const ConvergenceReport conv = psrf_mpsrf(kept);
  std::printf("%-24s %10s\n", "parameter", "PSRF");
  for (size_t j = 0; j < conv.psrf.size(); ++j)
    std::printf("%-24s %10.5f\n", loaded.column_names[j].c_str(), conv.psrf[j]);
  std::printf("MPSRF: %.5f over %ld draws x %d chains%s\n", conv.mpsrf, conv.draws_used,
              conv.n_chains, conv.w_singular ? " (within-chain covariance regularized)" : "");
  return 0;
}

int cmd_marglik(const std::string& run_prefix, double delta, double level, long n_boot,
                long subsample_div, uint64_t seed) {
  const LoadedRun loaded = load_run(run_prefix);
  const std::vector<int> keep = resolve_labels(loaded.run.chains, delta);
  if (keep.empty()) throw std::runtime_error("no usable chains");
  const std::vector<double> ll = pooled_loglik(loaded.run, keep);
  const MargLikCi ci = bootstrap_marglik_ci(ll, level, n_boot, subsample_div, seed);
  std::printf("log marginal likelihood: %.4f\n", ci.log_ml);
  std::printf("%.0f%% bootstrap interval: [%.4f, %.4f] (%ld resamples of %ld draws)\n",
              level * 100, ci.lo, ci.hi, ci.n_boot, ci.subsample);
  return 0;
}

int cmd_compare(const std::string& prefix_a, const std::string& prefix_b, double delta) {
  const LoadedRun a = load_run(prefix_a), b = load_run(prefix_b);
  const std::vector<int> keep_a = resolve_labels(a.run.chains, delta);
  const std::vector<int> keep_b = resolve_labels(b.run.chains, delta);
  if (keep_a.empty() || keep_b.empty()) throw std::runtime_error("no usable chains in one run");
  const double ml_a = log_marginal_likelihood(pooled_loglik(a.run, keep_a));
  const double ml_b = log_marginal_likelihood(pooled_loglik(b.run, keep_b));
  const double bf = log_bayes_factor(ml_a, ml_b);
  std::printf("log ML A (%s): %.4f\n", prefix_a.c_str(), ml_a);
  std::printf("log ML B (%s): %.4f\n", prefix_b.c_str(), ml_b);
  std::printf("log Bayes factor (A over B): %.4f  -> favors %s\n", bf, bf >= 0 ? "A" : "B");
  return 0;
}

int cmd_states(const std::string& run_prefix, const std::string& out_path,
               const std::string& series_path, double delta) {
  const LoadedRun loaded = load_run(run_prefix);
  const std::vector<int> keep = resolve_labels(loaded.run.chains, delta);
  if (keep.empty()) throw std::runtime_error("no usable chains");
  if (loaded.run.chains[keep[0]].T_tilde == 0)
    throw std::runtime_error("single-state run has no state draws");
  const auto [prob, sd] = pooled_state_probs(loaded.run.chains, keep);
  const RunConfig cfg = parse_config(loaded.config);
  const SwitchingLayout layout = layout_from_config(cfg, static_cast<int>(prob.size()));
  std::ofstream* fp = nullptr;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error(out_path + ": cannot open for writing");
    fp = &file;
  }
  auto emit = [&](const std::string& line) {
    if (fp)
      *fp << line << '\n';
    else
      std::printf("%s\n", line.c_str());
  };
  emit("t_tilde,t,n,state_prob,state_sd");
  char buf[128];
  for (size_t i = 0; i < prob.size(); ++i) {
    const RealIndex real = layout.to_real(static_cast<int>(i + 1), 1);
    std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.6f,%.6f", i + 1, real.t, real.n, prob[i], sd[i]);
    emit(buf);
  }
  if (!series_path.empty()) {
    std::ifstream sf(series_path);
    if (!sf) throw std::runtime_error(series_path + ": cannot open");
    std::vector<double> series;
    double v;
    while (sf >> v) series.push_back(v);
    if (series.size() != prob.size())
      throw std::runtime_error(series_path + ": expected one value per auxiliary period");
    std::printf("weighted correlation with series: %.4f\n",
                weighted_state_correlation(series, prob, sd));
  }
  return 0;
}

int cmd_gof(const std::string& config_path, const std::string& data_path,
            const std::string& run_prefix, long replicates, double delta, uint64_t seed) {
  const RunConfig cfg = load_config_file(config_path);
  const Dataset data = load_dataset_csv(data_path);
  const LoadedRun loaded = load_run(run_prefix);
  require_same_config(loaded, cfg, run_prefix);
  const SwitchingLayout layout = layout_from_config(cfg, max_period(data));
  const ModelSpec spec = spec_from_config(cfg, data.cov_names);
  const std::vector<int> keep = resolve_labels(loaded.run.chains, delta);
  if (keep.empty()) throw std::runtime_error("no usable chains");
  const PosteriorSummary s = summarize(loaded.run.chains, keep, spec, layout, cfg.level);
  auto [coefs, probs] =
      posterior_point(s, spec.n_free(), spec.single_state ? 0 : layout.n_free_intervals());
  const GofResult gof = gof_pvalue(data, spec, layout, coefs, probs, replicates, seed);
  std::printf("chi-square: %.4f   MC p-value: %.4f (%ld replicates)\n", gof.stat, gof.p_value,
              gof.n_replicates);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov-switching count and multinomial regression via MCMC"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, run_prefix, prefix_b, states_path, series_path,
      family;
  int chains = 0, threads = 0, n_outcomes = 0;
  long draws = 0, replicates = 500, n_boot = 100000, subsample_div = 100;
  int64_t seed_override = -1;
  uint64_t seed = 1;
  double delta = 5.0, level = 0.95;
  bool verbose = false;

  CLI::App* sim = app.add_subcommand("simulate", "Draw a synthetic dataset from a truth section");
  sim->add_option("--config", config_path, "config with model, layout and truth")->required();
  sim->add_option("--out", out_path, "output dataset csv")->required();
  sim->add_option("--states-out", states_path, "write true states csv");
  sim->add_option("--seed", seed, "response seed");

  CLI::App* mle = app.add_subcommand("mle", "Single-state maximum likelihood fit");
  mle->add_option("--data", data_path, "dataset csv")->required();
  mle->add_option("--family", family, "poisson|negbin|zip_tau|zip_gamma|zinb_tau|zinb_gamma|mnl")
      ->required();
  mle->add_option("--n-outcomes", n_outcomes, "outcome count (mnl)");
  mle->add_option("--gof-replicates", replicates, "Monte-Carlo goodness-of-fit replicates")
      ->default_val(0);
  mle->add_option("--seed", seed, "goodness-of-fit seed");

  CLI::App* fit = app.add_subcommand("fit", "Run the MCMC sampler");
  fit->add_option("--config", config_path, "run config json")->required();
  fit->add_option("--data", data_path, "dataset csv")->required();
  fit->add_option("--out", out_path, "output prefix for persisted draws");
  fit->add_option("--chains", chains, "override sampler.chains");
  fit->add_option("--draws", draws, "override sampler.draws");
  fit->add_option("--seed", seed_override, "override sampler.seed");
  fit->add_option("--threads", threads, "worker threads (default RSWITCH_THREADS or all cores)");
  fit->add_flag("--verbose", verbose, "progress to stderr");

  CLI::App* diag = app.add_subcommand("diagnose", "Scale-reduction diagnostics for a saved run");
  diag->add_option("--run", run_prefix, "run prefix")->required();
  diag->add_option("--delta", delta, "label-resolution log-joint gap");

  CLI::App* ml = app.add_subcommand("marglik", "Harmonic-mean marginal likelihood with bootstrap CI");
  ml->add_option("--run", run_prefix, "run prefix")->required();
  ml->add_option("--delta", delta, "label-resolution log-joint gap");
  ml->add_option("--level", level, "interval level");
  ml->add_option("--boot", n_boot, "bootstrap resamples");
  ml->add_option("--subsample-div", subsample_div, "subsample divisor");
  ml->add_option("--seed", seed, "bootstrap seed");

  CLI::App* cmp = app.add_subcommand("compare", "Bayes factor between two saved runs");
  cmp->add_option("--run-a", run_prefix, "first run prefix")->required();
  cmp->add_option("--run-b", prefix_b, "second run prefix")->required();
  cmp->add_option("--delta", delta, "label-resolution log-joint gap");

  CLI::App* st = app.add_subcommand("states", "Posterior state probabilities per period");
  st->add_option("--run", run_prefix, "run prefix")->required();
  st->add_option("--out", out_path, "write csv instead of stdout");
  st->add_option("--series", series_path, "per-period series for weighted correlation");
  st->add_option("--delta", delta, "label-resolution log-joint gap");

  CLI::App* gof = app.add_subcommand("gof", "Monte-Carlo chi-square goodness of fit");
  gof->add_option("--config", config_path, "config that produced the run")->required();
  gof->add_option("--data", data_path, "dataset csv")->required();
  gof->add_option("--run", run_prefix, "run prefix")->required();
  gof->add_option("--replicates", replicates, "simulation replicates");
  gof->add_option("--delta", delta, "label-resolution log-joint gap");
  gof->add_option("--seed", seed, "replicate seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_path, states_path, seed);
    if (mle->parsed()) return cmd_mle(data_path, family, n_outcomes, replicates, seed);
    if (fit->parsed())
      return cmd_fit(config_path, data_path, out_path, chains, draws, seed_override, threads,
                     verbose);
    if (diag->parsed()) return cmd_diagnose(run_prefix, delta);
    if (ml->parsed()) return cmd_marglik(run_prefix, delta, level, n_boot, subsample_div, seed);
    if (cmp->parsed()) return cmd_compare(run_prefix, prefix_b, delta);
    if (st->parsed()) return cmd_states(run_prefix, out_path, series_path, delta);
    if (gof->parsed()) return cmd_gof(config_path, data_path, run_prefix, replicates, delta, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
