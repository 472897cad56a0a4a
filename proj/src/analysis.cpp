#include "rswitch/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "rswitch/datagen.hpp"
#include "rswitch/math.hpp"
#include "rswitch/priors.hpp"
#include "rswitch/rng.hpp"

namespace rswitch {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kTinyVar = 1e-300;

}  // namespace

int n_continuous(const ChainResult& c) { return c.n_free + 2 * c.n_free_intervals; }

double continuous_at(const ChainResult& c, long g, int j) {
  if (j < c.n_free) return c.coef[g * c.n_free + j];
  j -= c.n_free;
  if (j < c.n_free_intervals) return c.p01[g * c.n_free_intervals + j];
  j -= c.n_free_intervals;
  return c.p10[g * c.n_free_intervals + j];
}

std::vector<std::string> continuous_names(const ModelSpec& spec, const SwitchingLayout& layout) {
  std::vector<std::string> names = spec.free_names;
  if (!spec.single_state) {
    for (int r : layout.free_intervals) names.push_back("p01." + std::to_string(r));
    for (int r : layout.free_intervals) names.push_back("p10." + std::to_string(r));
  }
  return names;
}

ConvergenceReport psrf_mpsrf(std::span<const ChainResult> chains) {
  const int M = static_cast<int>(chains.size());
  if (M < 2) throw std::invalid_argument("psrf_mpsrf: needs at least two chains");
  const int d = n_continuous(chains[0]);
  long G = chains[0].n_stored;
  for (const ChainResult& c : chains) {
    if (n_continuous(c) != d) throw std::invalid_argument("psrf_mpsrf: chain dimension mismatch");
    G = std::min(G, c.n_stored);
  }
  if (G < 2) throw std::invalid_argument("psrf_mpsrf: needs at least two draws per chain");

  MatrixXd means = MatrixXd::Zero(M, d);
  MatrixXd W = MatrixXd::Zero(d, d);
  VectorXd v(d);
  for (int m = 0; m < M; ++m) {
    for (long g = 0; g < G; ++g)
      for (int j = 0; j < d; ++j) means(m, j) += continuous_at(chains[m], g, j);
    means.row(m) /= static_cast<double>(G);
    MatrixXd cm = MatrixXd::Zero(d, d);
    for (long g = 0; g < G; ++g) {
      for (int j = 0; j < d; ++j) v[j] = continuous_at(chains[m], g, j) - means(m, j);
      cm.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
    W += MatrixXd(cm.selfadjointView<Eigen::Lower>()) / static_cast<double>(G - 1);
  }
  W /= static_cast<double>(M);
  const VectorXd grand = means.colwise().mean();
  MatrixXd B = MatrixXd::Zero(d, d);
  for (int m = 0; m < M; ++m) {
    const VectorXd dm = means.row(m).transpose() - grand;
    B += dm * dm.transpose();
  }
  B /= static_cast<double>(M - 1);

  ConvergenceReport rep;
  rep.n_chains = M;
  rep.draws_used = G;
  const double cg = static_cast<double>(G - 1) / G;
  const double cb = static_cast<double>(M + 1) / M;
  rep.psrf.resize(d);
  for (int j = 0; j < d; ++j) {
    if (W(j, j) < kTinyVar)
      rep.psrf[j] = B(j, j) < kTinyVar ? 1.0 : std::numeric_limits<double>::infinity();
    else
      rep.psrf[j] = std::sqrt((cg * W(j, j) + cb * B(j, j)) / W(j, j));
  }

  Eigen::LLT<MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) {
    rep.w_singular = true;
    MatrixXd Wr = W + (1e-10 * std::max(W.trace() / d, 1e-30)) * MatrixXd::Identity(d, d);
    llt.compute(Wr);
  }
  if (llt.info() == Eigen::Success) {
    const MatrixXd L = llt.matrixL();
    MatrixXd C = L.triangularView<Eigen::Lower>().solve(B);
    C = L.triangularView<Eigen::Lower>().solve(MatrixXd(C.transpose()));
    C = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
    rep.mpsrf = std::sqrt(cg + cb * std::max(0.0, es.eigenvalues().maxCoeff()));
  } else {
    rep.w_singular = true;
    rep.mpsrf = *std::max_element(rep.psrf.begin(), rep.psrf.end());
  }
  return rep;
}

std::vector<int> resolve_labels(std::span<const ChainResult> chains, double delta) {
  std::vector<double> mean_lj(chains.size(), -std::numeric_limits<double>::infinity());
  double best = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < chains.size(); ++i) {
    const ChainResult& c = chains[i];
    if (c.aborted || c.n_stored == 0) continue;
    double s = 0;
    for (double lj : c.logjoint) s += lj;
    mean_lj[i] = s / static_cast<double>(c.n_stored);
    best = std::max(best, mean_lj[i]);
  }
  std::vector<int> keep;
  for (size_t i = 0; i < chains.size(); ++i)
    if (mean_lj[i] >= best - delta) keep.push_back(static_cast<int>(i));
  return keep;
}

double quantile_linear(std::span<const double> sorted, double q) {
  const size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("quantile_linear: empty sample");
  if (n == 1) return sorted[0];
  q = std::clamp(q, 0.0, 1.0);
  const double h = static_cast<double>(n - 1) * q;
  const size_t lo = static_cast<size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

PosteriorSummary summarize(std::span<const ChainResult> chains, std::span<const int> keep,
                           const ModelSpec& spec, const SwitchingLayout& layout, double level) {
  if (keep.empty()) throw std::invalid_argument("summarize: no chains kept");
  if (level <= 0.0 || level >= 1.0) throw std::invalid_argument("summarize: level in (0,1)");
  PosteriorSummary out;
  out.level = level;
  const std::vector<std::string> names = continuous_names(spec, layout);
  const int d = static_cast<int>(names.size());
  long total = 0;
  for (int i : keep) total += chains[i].n_stored;
  if (total == 0) throw std::invalid_argument("summarize: kept chains hold no draws");
  out.pooled_draws = total;

  std::vector<double> buf(total);
  const double q_lo = (1.0 - level) / 2.0, q_hi = 1.0 - q_lo;
  out.params.resize(d);
  for (int j = 0; j < d; ++j) {
    long pos = 0;
    double mean = 0;
    for (int i : keep) {
      const ChainResult& c = chains[i];
      for (long g = 0; g < c.n_stored; ++g) {
        const double x = continuous_at(c, g, j);
        buf[pos++] = x;
        mean += x;
      }
    }
    mean /= static_cast<double>(total);
    double ss = 0;
    for (double x : buf) ss += (x - mean) * (x - mean);
    std::sort(buf.begin(), buf.end());
    ParamSummary& p = out.params[j];
    p.name = names[j];
    p.mean = mean;
    p.sd = total > 1 ? std::sqrt(ss / static_cast<double>(total - 1)) : 0.0;
    p.median = quantile_linear(buf, 0.5);
    p.lo = quantile_linear(buf, q_lo);
    p.hi = quantile_linear(buf, q_hi);
  }

  if (!spec.single_state) std::tie(out.state_prob, out.state_sd) = pooled_state_probs(chains, keep);

  double ml = 0;
  for (int i : keep)
    for (double ll : chains[i].loglik) ml += ll;
  out.mean_loglik = ml / static_cast<double>(total);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> pooled_state_probs(
    std::span<const ChainResult> chains, std::span<const int> keep) {
  if (keep.empty()) throw std::invalid_argument("pooled_state_probs: no chains kept");
  const int T = chains[keep[0]].T_tilde;
  long total = 0;
  std::vector<double> prob(T, 0.0), sd(T);
  for (int i : keep) {
    const ChainResult& c = chains[i];
    if (c.T_tilde != T) throw std::invalid_argument("pooled_state_probs: period count mismatch");
    total += c.n_stored;
    for (long g = 0; g < c.n_stored; ++g)
      for (int t0 = 0; t0 < T; ++t0) prob[t0] += c.state_at(g, t0);
  }
  if (total == 0) throw std::invalid_argument("pooled_state_probs: kept chains hold no draws");
  for (int t0 = 0; t0 < T; ++t0) {
    prob[t0] /= static_cast<double>(total);
    sd[t0] = std::sqrt(std::max(0.0, prob[t0] * (1.0 - prob[t0])));
  }
  return {std::move(prob), std::move(sd)};
}

double log_marginal_likelihood(std::span<const double> loglik) {
  const size_t n = loglik.size();
  if (n == 0) throw std::invalid_argument("log_marginal_likelihood: empty sample");
  double mx = -std::numeric_limits<double>::infinity();
  for (double ll : loglik) mx = std::max(mx, -ll);
  double s = 0;
  for (double ll : loglik) s += std::exp(-ll - mx);
  return -(mx + std::log(s) - std::log(static_cast<double>(n)));
}

MargLikCi bootstrap_marglik_ci(std::span<const double> loglik, double level, long n_boot,
                               long subsample_div, uint64_t seed) {
  const long G = static_cast<long>(loglik.size());
  if (G == 0) throw std::invalid_argument("bootstrap_marglik_ci: empty sample");
  if (n_boot < 2 || subsample_div < 1)
    throw std::invalid_argument("bootstrap_marglik_ci: bad bootstrap shape");
  MargLikCi out;
  out.log_ml = log_marginal_likelihood(loglik);
  out.n_boot = n_boot;
  out.subsample = (G + subsample_div - 1) / subsample_div;
  Rng rng(seed, 0xB007ull);
  std::vector<double> sub(out.subsample), boots(n_boot);
  for (long b = 0; b < n_boot; ++b) {
    for (long i = 0; i < out.subsample; ++i)
      sub[i] = loglik[static_cast<size_t>(rng.next_u64() % static_cast<uint64_t>(G))];
    boots[b] = log_marginal_likelihood(sub);
  }
  std::sort(boots.begin(), boots.end());
  const double q = (1.0 - level) / 2.0;
  out.lo = quantile_linear(boots, q);
  out.hi = quantile_linear(boots, 1.0 - q);
  return out;
}

double log_bayes_factor(double log_ml_a, double log_ml_b) { return log_ml_a - log_ml_b; }

double dic(std::span<const double> loglik, double loglik_at_point) {
  if (loglik.empty()) throw std::invalid_argument("dic: empty sample");
  double m = 0;
  for (double ll : loglik) m += ll;
  m /= static_cast<double>(loglik.size());
  return -4.0 * m + 2.0 * loglik_at_point;
}

namespace {

// First two moments of one state's response distribution at covariates x.
void state_moments(Family f, const StateParams& p, std::span<const double> x, double& mean,
                   double& var) {
  switch (f) {
    case Family::ZeroOnly:
      mean = var = 0.0;
      return;
    case Family::Poisson: {
      const double lam = rate(p.beta, x);
      mean = lam;
      var = lam;
      return;
    }
    case Family::NegBin: {
      const double lam = rate(p.beta, x);
      const double alpha = std::exp(*p.ln_alpha);
      mean = lam;
      var = lam * (1.0 + alpha * lam);
      return;
    }
    case Family::ZipTau:
    case Family::ZipGamma:
    case Family::ZinbTau:
    case Family::ZinbGamma: {
      const double lam = rate(p.beta, x);
      double z;
      if (family_has_tau(f)) {
        z = *p.tau * std::log(lam);
      } else {
        z = 0.0;
        for (size_t k = 0; k < x.size(); ++k) z += p.gamma[k] * x[k];
      }
      const double q = sigmoid(z);  // structural-zero weight
      const double alpha = family_has_alpha(f) ? std::exp(*p.ln_alpha) : 0.0;
      mean = (1.0 - q) * lam;
      var = (1.0 - q) * lam * (1.0 + alpha * lam) + q * (1.0 - q) * lam * lam;
      return;
    }
    case Family::Mnl:
      throw std::logic_error("state_moments: mnl has no count moments");
  }
  throw std::logic_error("state_moments: unknown family");
}

}  // namespace

double chisq_stat(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                  const SwitchingLayout& layout, std::span<const double> free_values,
                  const TransitionProbs& probs) {
  const auto [p0, p1] = assemble_params(spec, free_values);
  double stat = 0.0;
  for (size_t i = 0; i < data.n_rows(); ++i) {
    const auto x = data.x_row(i);
    double pb0 = 0.0, pb1 = 1.0;
    if (!spec.single_state) {
      const int r = layout.interval_of[pidx.period_of_row[i]];
      const int fi = layout.free_slot_of[r];
      std::tie(pb0, pb1) = stationary_probs(probs.p01[fi], probs.p10[fi]);
    }
    if (spec.family1 == Family::Mnl) {
      const int I = spec.n_outcomes;
      for (int o = 1; o <= I; ++o) {
        double prob = pb1 * std::exp(log_mnl(p1, x, o, I));
        if (!spec.single_state) prob += pb0 * std::exp(log_mnl(p0, x, o, I));
        const double d = (data.y[i] == o ? 1.0 : 0.0) - prob;
        stat += prob > 0.0 ? d * d / prob : (std::abs(d) < 1e-12 ? 0.0 : 1e12);
      }
    } else {
      double m0 = 0.0, v0 = 0.0, m1 = 0.0, v1 = 0.0;
      if (!spec.single_state) state_moments(spec.family0, p0, x, m0, v0);
      state_moments(spec.family1, p1, x, m1, v1);
      const double e = pb0 * m0 + pb1 * m1;
      const double var = pb0 * v0 + pb1 * v1 + pb0 * pb1 * (m1 - m0) * (m1 - m0);
      const double d = static_cast<double>(data.y[i]) - e;
      stat += var > 0.0 ? d * d / var : (std::abs(d) < 1e-12 ? 0.0 : 1e12);
    }
  }
  return stat;
}

GofResult gof_pvalue(const Dataset& data, const ModelSpec& spec, const SwitchingLayout& layout,
                     std::span<const double> free_values, const TransitionProbs& probs,
                     long n_replicates, uint64_t seed) {
  if (n_replicates < 1) throw std::invalid_argument("gof_pvalue: needs replicates");
  const PeriodIndex pidx = group_by_period(data, layout);
  GofResult out;
  out.n_replicates = n_replicates;
  out.stat = chisq_stat(data, pidx, spec, layout, free_values, probs);

  const auto [p0, p1] = assemble_params(spec, free_values);
  Dataset rep = data;  // keeps the covariate design; y is regenerated
  long exceed = 0;
  for (long r = 0; r < n_replicates; ++r) {
    Rng rng(seed, 0x60F0000ull + static_cast<uint64_t>(r));
    std::vector<uint8_t> s;
    if (spec.single_state)
      s.assign(layout.T_tilde, 1);
    else
      s = simulate_states(layout, probs, rng);
    simulate_responses(rep, pidx, spec, p0, p1, s, rng);
    if (chisq_stat(rep, pidx, spec, layout, free_values, probs) >= out.stat) ++exceed;
  }
  out.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + n_replicates);
  return out;
}

double weighted_state_correlation(std::span<const double> series,
                                  std::span<const double> state_prob,
                                  std::span<const double> state_sd) {
  const size_t n = series.size();
  if (n < 2 || state_prob.size() != n || state_sd.size() != n)
    throw std::invalid_argument("weighted_state_correlation: size mismatch");
  std::vector<double> inv;
  inv.reserve(n);
  for (double sd : state_sd)
    if (sd > 0.0) inv.push_back(1.0 / sd);
  double med = 1.0;
  if (!inv.empty()) {
    std::sort(inv.begin(), inv.end());
    med = quantile_linear(inv, 0.5);
  }
  double sw = 0, mz = 0, mp = 0;
  std::vector<double> w(n);
  for (size_t t = 0; t < n; ++t) {
    w[t] = state_sd[t] > 0.0 ? std::min(1.0 / state_sd[t], med) : med;
    sw += w[t];
    mz += w[t] * series[t];
    mp += w[t] * state_prob[t];
  }
  mz /= sw;
  mp /= sw;
  double czp = 0, czz = 0, cpp = 0;
  for (size_t t = 0; t < n; ++t) {
    const double dz = series[t] - mz, dp = state_prob[t] - mp;
    czp += w[t] * dz * dp;
    czz += w[t] * dz * dz;
    cpp += w[t] * dp * dp;
  }
  if (czz <= 0.0 || cpp <= 0.0) return 0.0;
  return czp / std::sqrt(czz * cpp);
}

}  // namespace rswitch
