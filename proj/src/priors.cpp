#include "rswitch/priors.hpp"

#include <cmath>
#include <stdexcept>

#include "rswitch/math.hpp"

namespace rswitch {

CoefPrior derive_hyperparams(std::span<const double> values, std::span<const double> variances) {
  if (values.size() != variances.size())
    throw std::invalid_argument("derive_hyperparams: size mismatch");
  CoefPrior p;
  p.mu.assign(values.begin(), values.end());
  p.sigma2.resize(values.size());
  for (size_t k = 0; k < values.size(); ++k) {
    if (!(variances[k] >= 0.0))
      throw std::invalid_argument("derive_hyperparams: negative variance");
    const double s = 10.0 * std::max(values[k] * values[k], variances[k]);
    p.sigma2[k] = s > 0.0 ? s : 10.0;
  }
  return p;
}

TransitionPrior default_transition_prior(int n_free_intervals) {
  TransitionPrior p;
  p.hyper.assign(n_free_intervals, {1.0, 1.0, 1.0, 1.0});
  return p;
}

double log_coef_prior(const CoefPrior& prior, std::span<const double> free_vals) {
  if (prior.mu.size() != free_vals.size() || prior.sigma2.size() != free_vals.size())
    throw std::invalid_argument("log_coef_prior: size mismatch");
  double lp = 0.0;
  for (size_t k = 0; k < free_vals.size(); ++k) {
    const double d = free_vals[k] - prior.mu[k];
    lp += -0.5 * std::log(2.0 * 3.14159265358979323846 * prior.sigma2[k]) -
          0.5 * d * d / prior.sigma2[k];
  }
  return lp;
}

namespace {

double log_beta_pdf(double x, double a, double b) {
  if (!(x > 0.0 && x < 1.0)) return kLogZero;
  return log_gamma(a + b) - log_gamma(a) - log_gamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

}  // namespace

double log_transition_prior(const TransitionPrior& prior, const TransitionProbs& probs,
                            const SwitchingLayout& layout) {
  const int F = layout.n_free_intervals();
  if (static_cast<int>(prior.hyper.size()) != F ||
      static_cast<int>(probs.p01.size()) != F || static_cast<int>(probs.p10.size()) != F)
    throw std::invalid_argument("log_transition_prior: size mismatch");
  double lp = 0.0;
  for (int fi = 0; fi < F; ++fi) {
    if (layout.restricted && probs.p01[fi] > probs.p10[fi]) return kLogZero;
    const auto& h = prior.hyper[fi];
    lp += log_beta_pdf(probs.p01[fi], h[0], h[1]);
    lp += log_beta_pdf(probs.p10[fi], h[2], h[3]);
    if (is_log_zero(lp)) return kLogZero;
  }
  return lp;
}

double log_prior(const ParamPoint& theta, const ModelSpec& spec, const SwitchingLayout& layout,
                 const PriorSpec& prior) {
  double lp = log_coef_prior(prior.coef, theta.free_coefs);
  if (spec.single_state) return lp;
  lp += log_transition_prior(prior.trans, theta.probs, layout);
  if (is_log_zero(lp)) return kLogZero;
  lp += log_state_prior(theta.s, theta.probs, layout);
  return is_log_zero(lp) ? kLogZero : lp;
}

double log_likelihood(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                      const ParamPoint& theta) {
  auto [p0, p1] = assemble_params(spec, theta.free_coefs);
  double ll = 0.0;
  for (size_t i = 0; i < data.n_rows(); ++i) {
    const int state = spec.single_state ? 1 : theta.s[pidx.period_of_row[i] - 1];
    ll += log_obs_likelihood(spec, state, state == 0 ? p0 : p1, data.x_row(i), data.y[i]);
    if (is_log_zero(ll)) return kLogZero;
  }
  return ll;
}

double log_joint(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                 const SwitchingLayout& layout, const PriorSpec& prior, const ParamPoint& theta) {
  const double lp = log_prior(theta, spec, layout, prior);
  if (is_log_zero(lp)) return kLogZero;
  const double ll = log_likelihood(data, pidx, spec, theta);
  if (is_log_zero(ll)) return kLogZero;
  return lp + ll;
}

}  // namespace rswitch
