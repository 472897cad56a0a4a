#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rswitch/dataset.hpp"
#include "rswitch/math.hpp"
#include "rswitch/model.hpp"
#include "rswitch/priors.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/switching.hpp"

namespace rswitch {

enum class JumpShape { Normal, Cauchy };

struct SamplerConfig {
  long draws = 20000;   // total sweeps G
  long burn_in = -1;    // -1 means draws / 10
  int thin = 3;
  int n_chains = 8;
  int tau_block = 10;   // refuse > 20 (2^tau enumeration)
  double target_accept = 0.30;
  int tune_window = 50;
  double tune_factor = 1.25;
  JumpShape jump = JumpShape::Normal;
  double init_sigma = 0.25;
  uint64_t seed = 1;
  long max_init_retries = 100;
  int verify_cache_every = 0;  // shadow-recompute period in sweeps; 0 = off

  long burn() const { return burn_in >= 0 ? burn_in : draws / 10; }
  long n_stored() const { return (draws - burn()) / thin; }
  void validate() const;
};

// Symmetric-proposal Metropolis step on one scalar. log_post_diff(proposal)
// returns log pi(proposal) - log pi(current); sentinel or NaN rejects.
template <class F>
bool mh_step(double& value, double sigma, JumpShape shape, Rng& rng, F&& log_post_diff) {
  const double step = shape == JumpShape::Normal ? sigma * rng.normal() : rng.cauchy(sigma);
  const double proposal = value + step;
  const double lr = log_post_diff(proposal);
  bool accept = false;
  if (!is_log_zero(lr)) {
    if (lr >= 0.0)
      accept = true;
    else
      accept = std::log(rng.uniform01()) < lr;
  }
  if (accept) value = proposal;
  return accept;
}

// Per-coefficient proposal-scale adaptation: every `window` draws the scale
// is multiplied (rate above target) or divided (below) by `factor`; at the
// end of burn-in the acceptance curve is fit as rate = a * exp(-b * sigma)
// over the last two-thirds of windows and solved for the target rate.
class ScaleTuner {
 public:
  struct WindowObs {
    double sigma;
    double rate;
  };

  ScaleTuner(int n_coef, double init_sigma, double target, int window, double factor);

  double sigma(int k) const { return sigma_[k]; }
  int n_coef() const { return static_cast<int>(sigma_.size()); }
  void record(int k, bool accepted);
  void finish_burn_in();
  bool fit_ok(int k) const { return fit_ok_[k] != 0; }
  const std::vector<WindowObs>& history(int k) const { return hist_[k]; }

  // Weighted least squares of ln(rate) on sigma over observations with rate
  // in (0.01, 0.99), pooled by sigma rung; returns fallback unless the fit
  // has >= 2 distinct rungs, positive decay and a positive finite solution.
  static double solve_exponential(std::span<const WindowObs> obs, double target, double fallback,
                                  bool* ok = nullptr);

 private:
  std::vector<double> sigma_;
  std::vector<int> count_, accepted_;
  std::vector<std::vector<WindowObs>> hist_;
  std::vector<uint8_t> fit_ok_;
  double target_, factor_;
  int window_;
};

// Exact draw from Beta(a, b) restricted to [lo, hi]: piecewise-exponential
// envelope rejection from tangents to the log-density (log-concave for
// a, b >= 1), with bisection inversion of the regularized incomplete beta as
// fallback (shapes < 1, extreme-tail regions, or 1000 consecutive rejections).
double sample_beta_interval(double a, double b, double lo, double hi, Rng& rng);

struct TruncBound {
  bool is_upper;  // true: restrict to (0, value]; false: restrict to [value, 1)
  double value;
};

double sample_truncated_beta(double a, double b, TruncBound bound, Rng& rng);

// Conjugate per-interval updates: p01 ~ Beta(m01 + u0, m00 + n0) truncated
// above by the current p10, then p10 ~ Beta(m10 + u1, m11 + n1) truncated
// below by the new p01 (truncation only on restricted layouts).
void gibbs_update_transitions(TransitionProbs& probs, const TransitionCounts& counts,
                              const TransitionPrior& prior, const SwitchingLayout& layout,
                              Rng& rng);

// Exact block draw of s[t_start .. t_start+len-1] (1-based, len =
// min(tau_block, T~ - t_start + 1)) from its joint conditional: enumerates
// all 2^len' candidates (len' = positions not forced by a log-zero
// likelihood), summing cached per-period totals L0/L1 and the transition
// terms with origins t_start-1 .. t_start+len-1, normalized by log-sum-exp.
void gibbs_update_state_block(int t_start, std::vector<uint8_t>& s, std::span<const double> L0,
                              std::span<const double> L1, const TransitionProbs& probs,
                              const SwitchingLayout& layout, int tau_block, Rng& rng);

// Overdispersed draw: coefficients mu_k + 2*sqrt(Sigma_k)*z (clipped),
// transition probabilities uniform honoring the label restriction, states
// Bernoulli(1/2) except where one state's likelihood is log-zero; retries
// until the log-joint is finite.
ParamPoint init_theta(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                      const SwitchingLayout& layout, const PriorSpec& prior,
                      const SamplerConfig& cfg, Rng& rng);

struct ChainResult {
  int chain_id = 0;
  uint64_t seed = 0;
  long n_stored = 0;
  int n_free = 0;
  int n_free_intervals = 0;
  int T_tilde = 0;
  int state_words = 0;

  std::vector<double> coef;      // n_stored x n_free, row-major
  std::vector<double> p01, p10;  // n_stored x n_free_intervals
  std::vector<double> loglik, logjoint;
  std::vector<uint64_t> states;  // n_stored x state_words, bit-packed, LSB = period 1

  std::vector<double> accept_rate;  // per free coefficient, post-burn-in
  std::vector<double> tuned_sigma;
  std::vector<uint8_t> tune_fit_ok;
  bool aborted = false;
  std::string abort_reason;

  double coef_at(long g, int k) const { return coef[g * n_free + k]; }
  int state_at(long g, int t0) const {  // t0 is 0-based
    return static_cast<int>((states[g * state_words + (t0 >> 6)] >> (t0 & 63)) & 1u);
  }
};

struct RunResult {
  std::vector<ChainResult> chains;
};

using ProgressFn = std::function<void(int chain, long sweep, double logjoint)>;

// One sweep updates every free coefficient by Metropolis-Hastings, then the
// transition probabilities by conjugate Gibbs, then the states in exact
// blocks. On restricted layouts whose specification is symmetric under the
// interchange of the two state labels, burn-in sweeps additionally attempt a
// Metropolis label-swap (swap parameter blocks, complement S) so chains that
// settle on the wrong label setting escape to the dominant one before
// sampling starts.
ChainResult run_chain(int chain_id, const Dataset& data, const ModelSpec& spec,
                      const SwitchingLayout& layout, const PriorSpec& prior,
                      const SamplerConfig& cfg, const ProgressFn& progress = {});

// Runs n_chains chains on up to n_threads workers (0: RSWITCH_THREADS, else
// hardware concurrency). Results are bit-identical regardless of thread
// count: every chain owns the stream (seed, chain_id).
RunResult run_chains(const Dataset& data, const ModelSpec& spec, const SwitchingLayout& layout,
                     const PriorSpec& prior, const SamplerConfig& cfg, int n_threads = 0,
                     const ProgressFn& progress = {});

// Worker count: explicit argument, else RSWITCH_THREADS, else hardware
// concurrency, capped by the job count.
int resolve_thread_count(int n_threads, int n_jobs);

}  // namespace rswitch
