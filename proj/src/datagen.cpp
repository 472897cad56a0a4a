#include "rswitch/datagen.hpp"

#include <cmath>
#include <stdexcept>

#include "rswitch/math.hpp"

namespace rswitch {

std::vector<uint8_t> simulate_states(const SwitchingLayout& layout, const TransitionProbs& probs,
                                     Rng& rng) {
  std::vector<uint8_t> s(layout.T_tilde);
  s[0] = static_cast<uint8_t>(rng.bernoulli(0.5));
  for (int t = 1; t < layout.T_tilde; ++t) {  // transition (t -> t+1), 1-based origin t
    if (layout.in_t_minus[t]) {
      s[t] = static_cast<uint8_t>(rng.bernoulli(0.5));
      continue;
    }
    const int fi = layout.free_slot_of[layout.interval_of[t]];
    const double p = s[t - 1] == 0 ? probs.p01[fi] : 1.0 - probs.p10[fi];
    s[t] = static_cast<uint8_t>(rng.bernoulli(p));
  }
  return s;
}

namespace {

long draw_count(Family f, const StateParams& p, std::span<const double> x, Rng& rng) {
  switch (f) {
    case Family::ZeroOnly:
      return 0;
    case Family::Poisson:
      return rng.poisson(rate(p.beta, x));
    case Family::NegBin: {
      const double lambda = rate(p.beta, x);
      const double alpha = std::exp(*p.ln_alpha);
      if (alpha < 1e-12) return rng.poisson(lambda);
      const double r = 1.0 / alpha;
      return rng.poisson(rng.gamma(r) * alpha * lambda);  // gamma-Poisson mixture
    }
    case Family::ZipTau:
    case Family::ZipGamma:
    case Family::ZinbTau:
    case Family::ZinbGamma: {
      const double lambda = rate(p.beta, x);
      double z;
      if (family_has_tau(f)) {
        z = *p.tau * std::log(lambda);
      } else {
        z = 0.0;
        for (size_t k = 0; k < x.size(); ++k) z += p.gamma[k] * x[k];
      }
      if (rng.bernoulli(sigmoid(z))) return 0;
      if (family_has_alpha(f)) {
        const double alpha = std::exp(*p.ln_alpha);
        if (alpha < 1e-12) return rng.poisson(lambda);
        return rng.poisson(rng.gamma(1.0 / alpha) * alpha * lambda);
      }
      return rng.poisson(lambda);
    }
    case Family::Mnl:
      throw std::logic_error("draw_count: multinomial family");
  }
  throw std::logic_error("draw_count: unreachable");
}

long draw_outcome(const StateParams& p, std::span<const double> x, int n_outcomes, Rng& rng) {
  const size_t K = x.size();
  double etas[64], m = -1e308;
  for (int i = 0; i < n_outcomes; ++i) {
    double e = 0.0;
    for (size_t k = 0; k < K; ++k) e += p.beta[i * K + k] * x[k];
    etas[i] = e;
    if (e > m) m = e;
  }
  double total = 0.0;
  for (int i = 0; i < n_outcomes; ++i) {
    etas[i] = std::exp(etas[i] - m);
    total += etas[i];
  }
  double u = rng.uniform01() * total;
  for (int i = 0; i < n_outcomes; ++i) {
    u -= etas[i];
    if (u <= 0.0) return i + 1;
  }
  return n_outcomes;
}

}  // namespace

void simulate_responses(Dataset& design, const PeriodIndex& pidx, const ModelSpec& spec,
                        const StateParams& p0, const StateParams& p1,
                        std::span<const uint8_t> s, Rng& rng) {
  for (size_t i = 0; i < design.n_rows(); ++i) {
    const int state = spec.single_state ? 1 : s[pidx.period_of_row[i] - 1];
    const StateParams& p = state == 0 ? p0 : p1;
    const Family f = state == 0 ? spec.family0 : spec.family1;
    design.y[i] = f == Family::Mnl ? draw_outcome(p, design.x_row(i), spec.n_outcomes, rng)
                                   : draw_count(f, p, design.x_row(i), rng);
  }
}

SimResult simulate_dataset(const SimRecipe& recipe, Rng& rng) {
  SimResult out;
  out.data = recipe.design;
  auto [p0, p1] = assemble_params(recipe.spec, recipe.free_values);
  out.states = recipe.spec.single_state
                   ? std::vector<uint8_t>{}
                   : simulate_states(recipe.layout, recipe.probs, rng);
  const PeriodIndex pidx = group_by_period(out.data, recipe.layout);
  simulate_responses(out.data, pidx, recipe.spec, p0, p1, out.states, rng);
  return out;
}

Dataset make_normal_design(const SwitchingLayout& layout, std::span<const int> n_per_period,
                           int n_cov, bool shared_within_period, Rng& rng) {
  if (n_per_period.size() != static_cast<size_t>(layout.T_tilde))
    throw std::invalid_argument("make_normal_design: per-period counts size mismatch");
  Dataset d;
  d.n_cov = n_cov;
  d.cov_names.push_back("const");
  for (int k = 1; k < n_cov; ++k) d.cov_names.push_back("x" + std::to_string(k));
  std::vector<double> row(n_cov, 1.0);
  for (int tt = 1; tt <= layout.T_tilde; ++tt) {
    const RealIndex real = layout.to_real(tt, 1);
    for (int k = 1; k < n_cov; ++k) row[k] = rng.normal();
    for (int j = 0; j < n_per_period[tt - 1]; ++j) {
      if (!shared_within_period)
        for (int k = 1; k < n_cov; ++k) row[k] = rng.normal();
      d.t.push_back(real.t);
      // Identity layouts put replicate j in unit j+1; the annual layout pins
      // every auxiliary period to one (t, n) cell.
      d.n.push_back(layout.kind == LayoutKind::Annual ? real.n : j + 1);
      d.y.push_back(0);
      d.X.insert(d.X.end(), row.begin(), row.end());
    }
  }
  return d;
}

}  // namespace rswitch
