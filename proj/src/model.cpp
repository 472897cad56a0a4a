#include "rswitch/model.hpp"

#include <cmath>
#include <stdexcept>

#include "rswitch/math.hpp"

namespace rswitch {

bool is_count_family(Family f) { return f != Family::Mnl; }

bool family_has_alpha(Family f) {
  return f == Family::NegBin || f == Family::ZinbTau || f == Family::ZinbGamma;
}

bool family_has_tau(Family f) { return f == Family::ZipTau || f == Family::ZinbTau; }

bool family_has_gamma(Family f) { return f == Family::ZipGamma || f == Family::ZinbGamma; }

const char* family_name(Family f) {
  switch (f) {
    case Family::Poisson: return "poisson";
    case Family::NegBin: return "negbin";
    case Family::ZipTau: return "zip_tau";
    case Family::ZipGamma: return "zip_gamma";
    case Family::ZinbTau: return "zinb_tau";
    case Family::ZinbGamma: return "zinb_gamma";
    case Family::Mnl: return "mnl";
    case Family::ZeroOnly: return "zero_only";
  }
  return "?";
}

Family family_from_name(const std::string& s) {
  if (s == "poisson") return Family::Poisson;
  if (s == "negbin") return Family::NegBin;
  if (s == "zip_tau") return Family::ZipTau;
  if (s == "zip_gamma") return Family::ZipGamma;
  if (s == "zinb_tau") return Family::ZinbTau;
  if (s == "zinb_gamma") return Family::ZinbGamma;
  if (s == "mnl") return Family::Mnl;
  if (s == "zero_only") return Family::ZeroOnly;
  throw std::invalid_argument("unknown family: " + s);
}

std::vector<ParamDesc> param_table(Family f, int state, int n_cov,
                                   std::span<const std::string> cov_names, int n_outcomes) {
  if (n_cov <= 0) throw std::invalid_argument("param_table: n_cov must be positive");
  if (static_cast<int>(cov_names.size()) != n_cov)
    throw std::invalid_argument("param_table: cov_names size mismatch");
  std::vector<ParamDesc> out;
  const std::string pre = "s" + std::to_string(state) + ".";
  if (f == Family::ZeroOnly) return out;
  if (f == Family::Mnl) {
    if (n_outcomes < 2 || n_outcomes > 64)
      throw std::invalid_argument("param_table: mnl needs 2 <= n_outcomes <= 64");
    for (int i = 1; i < n_outcomes; ++i)  // last outcome's block pinned to zero
      for (int k = 0; k < n_cov; ++k)
        out.push_back({state, Role::Beta, i, k,
                       pre + "beta." + std::to_string(i) + "." + cov_names[k]});
    return out;
  }
  for (int k = 0; k < n_cov; ++k)
    out.push_back({state, Role::Beta, 0, k, pre + "beta." + cov_names[k]});
  if (family_has_alpha(f)) out.push_back({state, Role::LnAlpha, 0, 0, pre + "ln_alpha"});
  if (family_has_tau(f)) out.push_back({state, Role::Tau, 0, 0, pre + "tau"});
  if (family_has_gamma(f))
    for (int k = 0; k < n_cov; ++k)
      out.push_back({state, Role::Gamma, 0, k, pre + "gamma." + cov_names[k]});
  return out;
}

namespace {

void index_free_slots(ModelSpec& s) {
  const size_t n = s.table.size();
  if (s.restrictions.empty()) s.restrictions.assign(n, Restriction{});
  if (s.restrictions.size() != n)
    throw std::invalid_argument("ModelSpec: restriction table length must equal parameter count");
  s.free_of_slot.assign(n, -1);
  s.slot_of_free.clear();
  s.free_names.clear();
  for (size_t i = 0; i < n; ++i) {
    const Restriction& r = s.restrictions[i];
    switch (r.kind) {
      case Restriction::Kind::Free:
        s.free_of_slot[i] = static_cast<int>(s.slot_of_free.size());
        s.slot_of_free.push_back(static_cast<int>(i));
        s.free_names.push_back(s.table[i].name);
        break;
      case Restriction::Kind::Zero:
        break;
      case Restriction::Kind::TiedTo:
        if (r.parent < 0 || r.parent >= static_cast<int>(n))
          throw std::invalid_argument("ModelSpec: tied parent out of range");
        if (r.parent == static_cast<int>(i))
          throw std::invalid_argument("ModelSpec: parameter tied to itself");
        if (s.restrictions[r.parent].kind != Restriction::Kind::Free)
          throw std::invalid_argument("ModelSpec: tied parent must be Free");
        break;
      case Restriction::Kind::MinusInfinity:
        throw std::invalid_argument(
            "ModelSpec: MinusInfinity is only legal on the state-0 intercept of a count family");
    }
  }
  if (s.slot_of_free.empty())
    throw std::invalid_argument("ModelSpec: no free parameters");
}

}  // namespace

ModelSpec ModelSpec::make(Family f0, Family f1, int n_cov, std::vector<std::string> cov_names,
                          std::vector<Restriction> restr, int n_outcomes) {
  if (f0 == Family::Mnl || f1 == Family::Mnl) {
    if (f0 != f1)
      throw std::invalid_argument("ModelSpec: mnl requires both states multinomial");
  }
  if (f1 == Family::ZeroOnly)
    throw std::invalid_argument("ModelSpec: state 1 cannot be zero-only");

  auto t0 = param_table(f0, 0, n_cov, cov_names, n_outcomes);
  auto t1 = param_table(f1, 1, n_cov, cov_names, n_outcomes);

  // A MinusInfinity state-0 intercept means state 0 generates only zeros:
  // exp(-inf + ...) = 0 regardless of other coefficients. Normalize the spec
  // to a structural ZeroOnly state and drop all state-0 slots.
  if (!restr.empty() && f0 != Family::ZeroOnly) {
    const size_t full = t0.size() + t1.size();
    if (restr.size() != full)
      throw std::invalid_argument("ModelSpec: restriction table length must equal parameter count");
    bool minus_inf = false;
    for (size_t i = 0; i < t0.size(); ++i) {
      if (restr[i].kind == Restriction::Kind::MinusInfinity) {
        if (!(t0[i].role == Role::Beta && t0[i].cov == 0 && is_count_family(f0) &&
              f0 != Family::ZeroOnly))
          throw std::invalid_argument(
              "ModelSpec: MinusInfinity is only legal on the state-0 intercept of a count family");
        minus_inf = true;
      }
    }
    if (minus_inf) {
      const int drop = static_cast<int>(t0.size());
      std::vector<Restriction> trimmed(restr.begin() + drop, restr.end());
      for (auto& r : trimmed) {
        if (r.kind == Restriction::Kind::TiedTo) {
          if (r.parent < drop)
            throw std::invalid_argument("ModelSpec: tie into a removed zero-only state");
          r.parent -= drop;
        }
      }
      return make(Family::ZeroOnly, f1, n_cov, std::move(cov_names), std::move(trimmed),
                  n_outcomes);
    }
  }

  ModelSpec s;
  s.family0 = f0;
  s.family1 = f1;
  s.n_cov = n_cov;
  s.n_outcomes = n_outcomes;
  s.cov_names = std::move(cov_names);
  s.state0_slots = static_cast<int>(t0.size());
  s.table = std::move(t0);
  s.table.insert(s.table.end(), t1.begin(), t1.end());
  s.restrictions = std::move(restr);
  index_free_slots(s);
  return s;
}

ModelSpec ModelSpec::single(Family f, int n_cov, std::vector<std::string> cov_names,
                            std::vector<Restriction> restr, int n_outcomes) {
  if (f == Family::ZeroOnly)
    throw std::invalid_argument("ModelSpec: a single-state model cannot be zero-only");
  ModelSpec s;
  s.family0 = f;
  s.family1 = f;
  s.single_state = true;
  s.n_cov = n_cov;
  s.n_outcomes = n_outcomes;
  s.cov_names = std::move(cov_names);
  s.state0_slots = 0;
  s.table = param_table(f, 1, n_cov, s.cov_names, n_outcomes);
  s.restrictions = std::move(restr);
  index_free_slots(s);
  return s;
}

double rate(std::span<const double> beta, std::span<const double> x) {
  if (beta.size() != x.size()) throw std::invalid_argument("rate: dimension mismatch");
  double eta = 0.0;
  for (size_t k = 0; k < x.size(); ++k) eta += beta[k] * x[k];
  if (eta > 700.0) eta = 700.0;  // keep the likelihood finite; effectively log-zero anyway
  return std::exp(eta);
}

double log_poisson(double lambda, long a) {
  if (a < 0 || !(lambda >= 0.0)) throw std::domain_error("log_poisson: bad arguments");
  if (lambda == 0.0) return a == 0 ? 0.0 : kLogZero;
  return a * std::log(lambda) - lambda - log_factorial(a);
}

double log_negbin(double lambda, double ln_alpha, long a) {
  if (a < 0 || !(lambda >= 0.0)) throw std::domain_error("log_negbin: bad arguments");
  if (lambda == 0.0) return a == 0 ? 0.0 : kLogZero;
  const double alpha = std::exp(ln_alpha);
  if (alpha < 1e-12) return log_poisson(lambda, a);  // continuous limit
  const double r = 1.0 / alpha;
  // log Gamma(a + r) - log Gamma(r) as an exact finite sum: avoids the
  // catastrophic cancellation of two huge lgammas when alpha is tiny.
  double gterm = 0.0;
  if (a <= 4096) {
    for (long j = 0; j < a; ++j) gterm += std::log(r + j);
  } else {
    gterm = log_gamma(a + r) - log_gamma(r);
  }
  const double l1p = std::log1p(alpha * lambda);
  return gterm - log_factorial(a) - (r + a) * l1p + a * (ln_alpha + std::log(lambda));
}

double log_zero_inflated(Family f, const StateParams& p, std::span<const double> x, long a) {
  if (!(f == Family::ZipTau || f == Family::ZipGamma || f == Family::ZinbTau ||
        f == Family::ZinbGamma))
    throw std::invalid_argument("log_zero_inflated: not a zero-inflated family");
  const double lambda = rate(p.beta, x);
  if (lambda == 0.0) return a == 0 ? 0.0 : kLogZero;
  double z;  // logit of the zero-inflation mass q
  if (family_has_tau(f)) {
    if (!p.tau) throw std::invalid_argument("log_zero_inflated: missing tau");
    z = *p.tau * std::log(lambda);
  } else {
    if (p.gamma.size() != x.size()) throw std::invalid_argument("log_zero_inflated: bad gamma");
    z = 0.0;
    for (size_t k = 0; k < x.size(); ++k) z += p.gamma[k] * x[k];
  }
  const bool nb = family_has_alpha(f);
  if (nb && !p.ln_alpha) throw std::invalid_argument("log_zero_inflated: missing ln_alpha");
  const double log_base =
      nb ? log_negbin(lambda, *p.ln_alpha, a) : log_poisson(lambda, a);
  if (a == 0) return log_sum_exp(log_sigmoid(z), log_sigmoid(-z) + log_base);
  return log_sigmoid(-z) + log_base;
}

double log_mnl(const StateParams& p, std::span<const double> x, int outcome, int n_outcomes) {
  if (outcome < 1 || outcome > n_outcomes)
    throw std::domain_error("log_mnl: outcome out of range");
  const size_t K = x.size();
  if (p.beta.size() != static_cast<size_t>(n_outcomes) * K)
    throw std::invalid_argument("log_mnl: beta size mismatch");
  double m = -1e308, target = 0.0;
  double etas[64];
  if (n_outcomes > 64) throw std::invalid_argument("log_mnl: too many outcomes");
  for (int i = 0; i < n_outcomes; ++i) {
    double e = 0.0;
    for (size_t k = 0; k < K; ++k) e += p.beta[i * K + k] * x[k];
    etas[i] = e;
    if (e > m) m = e;
    if (i + 1 == outcome) target = e;
  }
  double s = 0.0;
  for (int i = 0; i < n_outcomes; ++i) s += std::exp(etas[i] - m);
  return target - m - std::log(s);
}

double log_obs_likelihood(const ModelSpec& spec, int state, const StateParams& p,
                          std::span<const double> x, long y) {
  if (spec.single_state && state != 1)
    throw std::invalid_argument("log_obs_likelihood: single-state spec has only state 1");
  const Family f = state == 0 ? spec.family0 : spec.family1;
  switch (f) {
    case Family::ZeroOnly:
      return y == 0 ? 0.0 : kLogZero;
    case Family::Poisson:
      return log_poisson(rate(p.beta, x), y);
    case Family::NegBin:
      if (!p.ln_alpha) throw std::invalid_argument("log_obs_likelihood: missing ln_alpha");
      return log_negbin(rate(p.beta, x), *p.ln_alpha, y);
    case Family::ZipTau:
    case Family::ZipGamma:
    case Family::ZinbTau:
    case Family::ZinbGamma:
      return log_zero_inflated(f, p, x, y);
    case Family::Mnl:
      return log_mnl(p, x, static_cast<int>(y), spec.n_outcomes);
  }
  throw std::logic_error("log_obs_likelihood: unreachable");
}

namespace {

StateParams init_state_params(Family f, int n_cov, int n_outcomes) {
  StateParams p;
  if (f == Family::ZeroOnly) return p;
  if (f == Family::Mnl) {
    p.beta.assign(static_cast<size_t>(n_outcomes) * n_cov, 0.0);
    return p;
  }
  p.beta.assign(n_cov, 0.0);
  if (family_has_alpha(f)) p.ln_alpha = 0.0;
  if (family_has_tau(f)) p.tau = 0.0;
  if (family_has_gamma(f)) p.gamma.assign(n_cov, 0.0);
  return p;
}

}  // namespace

void set_param(StateParams& p, const ParamDesc& d, int n_cov, double v) {
  switch (d.role) {
    case Role::Beta:
      p.beta[static_cast<size_t>(d.outcome == 0 ? 0 : d.outcome - 1) * n_cov + d.cov] = v;
      break;
    case Role::LnAlpha: p.ln_alpha = v; break;
    case Role::Tau: p.tau = v; break;
    case Role::Gamma: p.gamma[d.cov] = v; break;
  }
}

std::pair<StateParams, StateParams> assemble_params(const ModelSpec& spec,
                                                    std::span<const double> free_values) {
  if (free_values.size() != static_cast<size_t>(spec.n_free()))
    throw std::invalid_argument("assemble_params: free value count mismatch");
  StateParams p0 = init_state_params(spec.single_state ? Family::ZeroOnly : spec.family0,
                                     spec.n_cov, spec.n_outcomes);
  StateParams p1 = init_state_params(spec.family1, spec.n_cov, spec.n_outcomes);
  // Mnl beta blocks for outcomes 1..I-1 live at offsets (outcome-1)*n_cov; the
  // zero block of outcome I occupies the tail. Count-family betas use outcome 0.
  auto slot_value = [&](size_t i) -> double {
    const Restriction& r = spec.restrictions[i];
    switch (r.kind) {
      case Restriction::Kind::Free: return free_values[spec.free_of_slot[i]];
      case Restriction::Kind::Zero: return 0.0;
      case Restriction::Kind::TiedTo: return free_values[spec.free_of_slot[r.parent]];
      default: throw std::logic_error("assemble_params: invalid restriction");
    }
  };
  for (size_t i = 0; i < spec.table.size(); ++i) {
    const ParamDesc& d = spec.table[i];
    set_param(d.state == 0 ? p0 : p1, d, spec.n_cov, slot_value(i));
  }
  return {std::move(p0), std::move(p1)};
}

}  // namespace rswitch
