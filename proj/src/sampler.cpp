#include "rswitch/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <thread>

namespace rswitch {

void SamplerConfig::validate() const {
  if (draws < 1) throw std::invalid_argument("sampler: draws must be >= 1");
  if (burn() < 0 || burn() >= draws) throw std::invalid_argument("sampler: burn-in out of range");
  if (thin < 1) throw std::invalid_argument("sampler: thin must be >= 1");
  if (n_chains < 1) throw std::invalid_argument("sampler: need >= 1 chain");
  if (tau_block < 1 || tau_block > 20)
    throw std::invalid_argument("sampler: tau_block must be in [1, 20] (2^tau enumeration)");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("sampler: target_accept must be in (0, 1)");
  if (tune_window < 1) throw std::invalid_argument("sampler: tune_window must be >= 1");
  if (!(tune_factor > 1.0)) throw std::invalid_argument("sampler: tune_factor must be > 1");
  if (!(init_sigma > 0.0)) throw std::invalid_argument("sampler: init_sigma must be > 0");
}

// ---------------------------------------------------------------------------
// Proposal-scale tuning.

ScaleTuner::ScaleTuner(int n_coef, double init_sigma, double target, int window, double factor)
    : sigma_(n_coef, init_sigma),
      count_(n_coef, 0),
      accepted_(n_coef, 0),
      hist_(n_coef),
      fit_ok_(n_coef, 0),
      target_(target),
      factor_(factor),
      window_(window) {}

void ScaleTuner::record(int k, bool accepted) {
  ++count_[k];
  if (accepted) ++accepted_[k];
  if (count_[k] < window_) return;
  const double rate = static_cast<double>(accepted_[k]) / window_;
  hist_[k].push_back({sigma_[k], rate});
  if (rate > target_)
    sigma_[k] *= factor_;
  else if (rate < target_)
    sigma_[k] /= factor_;
  count_[k] = 0;
  accepted_[k] = 0;
}

double ScaleTuner::solve_exponential(std::span<const WindowObs> obs, double target,
                                     double fallback, bool* ok) {
  if (ok) *ok = false;
  // Pool windows per sigma rung; rungs are exact doubles from the *,/ ladder.
  std::map<double, std::pair<double, int>> rungs;
  for (const WindowObs& o : obs) {
    if (!(o.rate > 0.01 && o.rate < 0.99)) continue;
    auto& [sum, cnt] = rungs[o.sigma];
    sum += o.rate;
    ++cnt;
  }
  if (rungs.size() < 2) return fallback;
  // Weighted least squares of ln(mean rate) on sigma.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [sig, sc] : rungs) {
    const double w = sc.second;
    const double y = std::log(sc.first / sc.second);
    sw += w;
    sx += w * sig;
    sy += w * y;
    sxx += w * sig * sig;
    sxy += w * sig * y;
  }
  const double det = sw * sxx - sx * sx;
  if (!(std::fabs(det) > 1e-12)) return fallback;
  const double slope = (sw * sxy - sx * sy) / det;  // = -b
  const double inter = (sxx * sy - sx * sxy) / det; // = ln a
  const double bcoef = -slope;
  if (!(bcoef > 0.0)) return fallback;
  const double sigma_star = (inter - std::log(target)) / bcoef;
  if (!(sigma_star > 0.0) || !std::isfinite(sigma_star)) return fallback;
  if (ok) *ok = true;
  return sigma_star;
}

void ScaleTuner::finish_burn_in() {
  for (int k = 0; k < n_coef(); ++k) {
    const auto& h = hist_[k];
    const size_t from = h.size() / 3;  // keep the last two-thirds of windows
    const std::span<const WindowObs> tail{h.data() + from, h.size() - from};
    bool ok = false;
    sigma_[k] = solve_exponential(tail, target_, sigma_[k], &ok);
    fit_ok_[k] = ok ? 1 : 0;
  }
}

// ---------------------------------------------------------------------------
// Truncated Beta draws.

namespace {

double beta_inversion_draw(double a, double b, double flo, double fhi, Rng& rng) {
  const double u = flo + (fhi - flo) * rng.uniform01();
  double x = inc_beta_inv(a, b, u);
  return std::min(std::max(x, 1e-15), 1.0 - 1e-15);
}

}  // namespace

double sample_beta_interval(double a, double b, double lo, double hi, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::domain_error("sample_beta_interval: shapes must be positive");
  if (!(lo >= 0.0 && hi <= 1.0 && lo < hi))
    throw std::domain_error("sample_beta_interval: need 0 <= lo < hi <= 1");
  if (a == 1.0 && b == 1.0) return rng.uniform(lo, hi);

  const double flo = inc_beta(a, b, lo), fhi = inc_beta(a, b, hi);
  // Shapes below 1 break log-concavity; vanishing region mass defeats the
  // quantile spacing. Both go straight to CDF inversion.
  if (a < 1.0 || b < 1.0 || !(fhi - flo > 1e-13))
    return beta_inversion_draw(a, b, flo, fhi, rng);

  // Touch points: region-mass quantiles of the untruncated Beta plus the
  // in-region density mode.
  double pts[5];
  int npts = 0;
  for (double q : {0.125, 0.375, 0.625, 0.875})
    pts[npts++] = inc_beta_inv(a, b, flo + q * (fhi - flo));
  double mode;
  if (a > 1.0 && b > 1.0)
    mode = (a - 1.0) / (a + b - 2.0);
  else if (a == 1.0)
    mode = lo;  // density decreasing (b > 1)
  else
    mode = hi;  // density increasing (b == 1, a > 1)
  pts[npts++] = std::min(std::max(mode, lo), hi);
  std::sort(pts, pts + npts);

  double t[5], lf[5], sl[5];
  int k = 0;
  for (int i = 0; i < npts; ++i) {
    const double x = pts[i];
    if (!(x > 0.0 && x < 1.0)) continue;          // endpoint singularities
    if (k > 0 && !(x > t[k - 1] + 1e-12)) continue;  // dedupe
    t[k] = x;
    lf[k] = (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
    sl[k] = (a - 1.0) / x - (b - 1.0) / (1.0 - x);
    ++k;
  }
  if (k == 0) return beta_inversion_draw(a, b, flo, fhi, rng);

  // Segment boundaries: tangents of a concave function intersect in order.
  double X[6];
  X[0] = lo;
  for (int i = 0; i + 1 < k; ++i) {
    const double num = (lf[i + 1] - sl[i + 1] * t[i + 1]) - (lf[i] - sl[i] * t[i]);
    double x = num / (sl[i] - sl[i + 1]);
    x = std::min(std::max(x, X[i]), hi);
    X[i + 1] = x;
  }
  X[k] = hi;

  // Log-mass of each piecewise-exponential segment.
  double lm[5], wmax = -1e308;
  for (int i = 0; i < k; ++i) {
    const double u = X[i], v = X[i + 1];
    if (!(v > u)) {
      lm[i] = -1e308;
      continue;
    }
    const double s = sl[i];
    const double base = lf[i] + s * (u - t[i]);
    const double sd = s * (v - u);
    double tail;
    if (std::fabs(sd) < 1e-12)
      tail = std::log(v - u);
    else
      tail = std::log(std::expm1(sd) / s);
    lm[i] = base + tail;
    wmax = std::max(wmax, lm[i]);
  }
  double wsum = 0.0, w[5];
  for (int i = 0; i < k; ++i) {
    w[i] = std::exp(lm[i] - wmax);
    wsum += w[i];
  }

  for (int rejections = 0; rejections < 1000; ++rejections) {
    double u = rng.uniform01() * wsum;
    int seg = 0;
    while (seg + 1 < k && u > w[seg]) {
      u -= w[seg];
      ++seg;
    }
    const double s = sl[seg];
    const double du = X[seg + 1] - X[seg];
    const double uu = rng.uniform01();
    double x;
    if (std::fabs(s * du) < 1e-12)
      x = X[seg] + uu * du;
    else
      x = X[seg] + std::log1p(uu * std::expm1(s * du)) / s;
    if (!(x > 0.0 && x < 1.0)) continue;
    const double lfx = (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
    const double env = lf[seg] + s * (x - t[seg]);
    if (std::log(rng.uniform01()) < lfx - env)
      return std::min(std::max(x, std::max(lo, 1e-15)), std::min(hi, 1.0 - 1e-15));
  }
  return beta_inversion_draw(a, b, flo, fhi, rng);
}

double sample_truncated_beta(double a, double b, TruncBound bound, Rng& rng) {
  if (!(bound.value > 0.0 && bound.value < 1.0))
    throw std::domain_error("sample_truncated_beta: bound must be inside (0, 1)");
  if (bound.is_upper) return sample_beta_interval(a, b, 0.0, bound.value, rng);
  return sample_beta_interval(a, b, bound.value, 1.0, rng);
}

void gibbs_update_transitions(TransitionProbs& probs, const TransitionCounts& counts,
                              const TransitionPrior& prior, const SwitchingLayout& layout,
                              Rng& rng) {
  const int F = layout.n_free_intervals();
  for (int fi = 0; fi < F; ++fi) {
    const auto& h = prior.hyper[fi];
    const double a01 = counts.m01(fi) + h[0], b01 = counts.m00(fi) + h[1];
    const double a10 = counts.m10(fi) + h[2], b10 = counts.m11(fi) + h[3];
    if (layout.restricted) {
      // p01 truncated above by the current p10, then p10 truncated below by
      // the fresh p01: keeps the pair inside the identified region exactly.
      probs.p01[fi] = sample_beta_interval(a01, b01, 0.0, probs.p10[fi], rng);
      probs.p10[fi] = sample_beta_interval(a10, b10, probs.p01[fi], 1.0, rng);
    } else {
      probs.p01[fi] = std::min(std::max(rng.beta(a01, b01), 1e-15), 1.0 - 1e-15);
      probs.p10[fi] = std::min(std::max(rng.beta(a10, b10), 1e-15), 1.0 - 1e-15);
    }
  }
}

// ---------------------------------------------------------------------------
// Exact block draw of the state sub-vector.

void gibbs_update_state_block(int t_start, std::vector<uint8_t>& s, std::span<const double> L0,
                              std::span<const double> L1, const TransitionProbs& probs,
                              const SwitchingLayout& layout, int tau_block, Rng& rng) {
  const int T = layout.T_tilde;
  if (t_start < 1 || t_start > T)
    throw std::out_of_range("gibbs_update_state_block: t_start out of range");
  const int len = std::min(tau_block, T - t_start + 1);
  if (len > 20) throw std::invalid_argument("gibbs_update_state_block: block longer than 20");

  // Forced positions: a log-zero likelihood pins the state; both log-zero is
  // degenerate and keeps the current value.
  uint8_t blk[20];
  int free_pos[20], F = 0;
  for (int j = 0; j < len; ++j) {
    const int idx = t_start - 1 + j;
    const bool z0 = is_log_zero(L0[idx]), z1 = is_log_zero(L1[idx]);
    if (z0 && z1)
      blk[j] = s[idx];
    else if (z0)
      blk[j] = 1;
    else if (z1)
      blk[j] = 0;
    else
      free_pos[F++] = j;
  }

  // Transition origins touching the block, with interval-resolved log-probs.
  const int p_lo = std::max(1, t_start - 1);
  const int p_hi = std::min(T - 1, t_start + len - 1);
  int n_tr = 0;
  int tr_p[22];
  double tr_tab[22][2][2];
  for (int p = p_lo; p <= p_hi; ++p) {
    if (layout.in_t_minus[p]) continue;
    const int fi = layout.free_slot_of[layout.interval_of[p]];
    const double p01 = probs.p01[fi], p10 = probs.p10[fi];
    tr_p[n_tr] = p;
    tr_tab[n_tr][0][0] = std::log1p(-p01);
    tr_tab[n_tr][0][1] = std::log(p01);
    tr_tab[n_tr][1][0] = std::log(p10);
    tr_tab[n_tr][1][1] = std::log1p(-p10);
    ++n_tr;
  }

  const long n_cand = 1L << F;
  thread_local std::vector<double> lp;
  lp.resize(n_cand);
  double maxlp = -1e308;
  for (long c = 0; c < n_cand; ++c) {
    for (int f = 0; f < F; ++f) blk[free_pos[f]] = static_cast<uint8_t>((c >> f) & 1);
    double v = 0.0;
    for (int j = 0; j < len; ++j) {
      const int idx = t_start - 1 + j;
      v += blk[j] ? L1[idx] : L0[idx];
    }
    for (int m = 0; m < n_tr; ++m) {
      const int p = tr_p[m], q = p + 1;  // transition origin and destination periods
      const int a = (p >= t_start && p < t_start + len) ? blk[p - t_start] : s[p - 1];
      const int b = (q >= t_start && q < t_start + len) ? blk[q - t_start] : s[q - 1];
      v += tr_tab[m][a][b];
    }
    lp[c] = v;
    if (v > maxlp) maxlp = v;
  }

  double total = 0.0;
  for (long c = 0; c < n_cand; ++c) total += std::exp(lp[c] - maxlp);
  double u = rng.uniform01() * total;
  long pick = n_cand - 1;
  for (long c = 0; c < n_cand; ++c) {
    u -= std::exp(lp[c] - maxlp);
    if (u <= 0.0) {
      pick = c;
      break;
    }
  }
  for (int f = 0; f < F; ++f) blk[free_pos[f]] = static_cast<uint8_t>((pick >> f) & 1);
  for (int j = 0; j < len; ++j) s[t_start - 1 + j] = blk[j];
}

// ---------------------------------------------------------------------------
// Initial point.

ParamPoint init_theta(const Dataset& data, const PeriodIndex& pidx, const ModelSpec& spec,
                      const SwitchingLayout& layout, const PriorSpec& prior,
                      const SamplerConfig& cfg, Rng& rng) {
  const int nf = spec.n_free();
  if (static_cast<int>(prior.coef.mu.size()) != nf)
    throw std::invalid_argument("init_theta: prior size mismatch");
  for (long attempt = 0; attempt < cfg.max_init_retries; ++attempt) {
    ParamPoint theta;
    theta.free_coefs.resize(nf);
    for (int k = 0; k < nf; ++k) {
      const double sd = std::sqrt(prior.coef.sigma2[k]);
      double v = prior.coef.mu[k] + 2.0 * sd * rng.normal();
      v = std::min(std::max(v, prior.coef.mu[k] - 6.0 * sd), prior.coef.mu[k] + 6.0 * sd);
      theta.free_coefs[k] = v;
    }
    if (!spec.single_state) {
      const int F = layout.n_free_intervals();
      theta.probs.p01.resize(F);
      theta.probs.p10.resize(F);
      for (int fi = 0; fi < F; ++fi) {
        const double u1 = rng.uniform01(), u2 = rng.uniform01();
        if (layout.restricted) {
          theta.probs.p01[fi] = std::min(u1, u2);
          theta.probs.p10[fi] = std::max(u1, u2);
        } else {
          theta.probs.p01[fi] = u1;
          theta.probs.p10[fi] = u2;
        }
      }
      auto [p0, p1] = assemble_params(spec, theta.free_coefs);
      theta.s.resize(layout.T_tilde);
      bool degenerate = false;
      for (int tt = 1; tt <= layout.T_tilde && !degenerate; ++tt) {
        double l0 = 0.0, l1 = 0.0;
        for (int row : pidx.rows_of(tt)) {
          l0 += log_obs_likelihood(spec, 0, p0, data.x_row(row), data.y[row]);
          l1 += log_obs_likelihood(spec, 1, p1, data.x_row(row), data.y[row]);
        }
        const bool z0 = is_log_zero(l0), z1 = is_log_zero(l1);
        if (z0 && z1)
          degenerate = true;
        else if (z0)
          theta.s[tt - 1] = 1;
        else if (z1)
          theta.s[tt - 1] = 0;
        else
          theta.s[tt - 1] = static_cast<uint8_t>(rng.bernoulli(0.5));
      }
      if (degenerate) continue;
    }
    const double lj = log_joint(data, pidx, spec, layout, prior, theta);
    if (std::isfinite(lj) && !is_log_zero(lj)) return theta;
  }
  throw std::runtime_error("init_theta: no finite starting point after max_init_retries");
}

// ---------------------------------------------------------------------------
// Chain runner: grouped sufficient statistics and per-period caches.

namespace {

struct NbTab {
  double r = 0.0, ln_alpha = 0.0, alpha = 0.0;
  std::vector<double> c;  // c[y] = lgamma(y + r) - lgamma(r), cumulative logs

  void build(double lna, long max_y) {
    ln_alpha = lna;
    alpha = std::exp(lna);
    r = 1.0 / alpha;
    c.resize(max_y + 1);
    c[0] = 0.0;
    for (long y = 1; y <= max_y; ++y) c[y] = c[y - 1] + std::log(r + (y - 1));
  }
};

struct Group {
  const double* x = nullptr;  // covariate row
  int n = 0;                  // observations in the group
  long sum_y = 0;
  double lf_sum = 0.0;        // sum log(y!)
  int h_off = 0, h_len = 0;   // histogram slice: (value, multiplicity)
};

// Free-index permutation realizing the interchange of the two state labels,
// or empty when that interchange is not a symmetry of the specification
// (single state, different families, or restrictions that do not mirror).
std::vector<int> label_swap_permutation(const ModelSpec& spec) {
  if (spec.single_state || spec.family0 != spec.family1) return {};
  const int half = spec.state0_slots;
  if (static_cast<int>(spec.table.size()) != 2 * half) return {};
  const auto mirror = [half](int slot) { return slot < half ? slot + half : slot - half; };
  std::vector<int> perm(spec.n_free(), -1);
  for (int i = 0; i < 2 * half; ++i) {
    const Restriction& a = spec.restrictions[i];
    const Restriction& b = spec.restrictions[mirror(i)];
    switch (a.kind) {
      case Restriction::Kind::Free:
        if (b.kind == Restriction::Kind::Free)
          perm[spec.free_of_slot[i]] = spec.free_of_slot[mirror(i)];
        else if (b.kind == Restriction::Kind::TiedTo && b.parent == i)
          perm[spec.free_of_slot[i]] = spec.free_of_slot[i];  // shared across states
        else
          return {};
        break;
      case Restriction::Kind::Zero:
        if (b.kind != Restriction::Kind::Zero) return {};
        break;
      case Restriction::Kind::TiedTo:
        if (b.kind == Restriction::Kind::Free && a.parent == mirror(i)) break;
        if (b.kind == Restriction::Kind::TiedTo && b.parent == mirror(a.parent)) break;
        return {};
      case Restriction::Kind::MinusInfinity:
        return {};
    }
  }
  for (int p : perm)
    if (p < 0) return {};
  return perm;
}

class ChainRunner {
 public:
  ChainRunner(int chain_id, const Dataset& data, const ModelSpec& spec,
              const SwitchingLayout& layout, const PriorSpec& prior, const SamplerConfig& cfg)
      : data_(data),
        spec_(spec),
        layout_(layout),
        prior_(prior),
        cfg_(cfg),
        pidx_(group_by_period(data, layout)),
        chain_id_(chain_id),
        rng_(cfg.seed, static_cast<uint64_t>(chain_id)) {
    T_ = layout.T_tilde;
    K_ = spec.n_cov;
    max_y_ = data.max_y();
    if (data.n_cov != K_) throw std::invalid_argument("sampler: covariate count mismatch");
    if (spec.family1 == Family::Mnl)
      for (long y : data.y)
        if (y < 1 || y > spec.n_outcomes)
          throw std::invalid_argument("sampler: outcome outside 1..n_outcomes");
    build_groups();
    build_deps();
    if (layout.restricted) swap_perm_ = label_swap_permutation(spec);
  }

  ChainResult run(const ProgressFn& progress);

 private:
  const Dataset& data_;
  const ModelSpec& spec_;
  const SwitchingLayout& layout_;
  const PriorSpec& prior_;
  const SamplerConfig& cfg_;
  PeriodIndex pidx_;
  int chain_id_, T_, K_;
  long max_y_;
  Rng rng_;

  std::vector<int> g_off_;  // T_+1 offsets into groups_
  std::vector<Group> groups_;
  std::vector<std::pair<long, int>> hist_;

  struct Dep {
    std::vector<int> slots;
    int state_mask = 0;
    bool alpha0 = false, alpha1 = false;
  };
  std::vector<Dep> deps_;
  std::vector<int> swap_perm_;  // label-interchange move; empty when inapplicable

  // Current point and caches.
  std::vector<double> free_;
  TransitionProbs probs_;
  std::vector<uint8_t> s_;
  StateParams sp_[2];
  NbTab nb_[2];
  std::vector<double> L_[2];
  std::vector<double> scratch_[2];

  Family family_of(int state) const { return state == 0 ? spec_.family0 : spec_.family1; }
  bool in_state(int t0, int a) const { return spec_.single_state ? a == 1 : s_[t0] == a; }

  void build_groups();
  void build_deps();
  void adopt(const ParamPoint& theta);
  double period_loglik(int state, int t0, const StateParams& sp, const NbTab& nb) const;
  void refresh_state(int state, const StateParams& sp, const NbTab& nb,
                     const std::vector<double>* keep_in_state);
  bool update_coef(int k, double sigma);
  void try_label_swap();
  double current_loglik() const;
  void verify_caches() const;
};

void ChainRunner::build_groups() {
  g_off_.assign(T_ + 1, 0);
  for (int tt = 1; tt <= T_; ++tt) {
    const auto rows = pidx_.rows_of(tt);
    // Bucket rows sharing an identical covariate row.
    std::vector<int> reps;
    std::vector<std::vector<int>> members;
    for (int row : rows) {
      const double* x = data_.x_row(row).data();
      int found = -1;
      for (size_t gi = 0; gi < reps.size(); ++gi) {
        const double* rx = data_.x_row(reps[gi]).data();
        bool same = true;
        for (int k = 0; k < K_; ++k)
          if (rx[k] != x[k]) {
            same = false;
            break;
          }
        if (same) {
          found = static_cast<int>(gi);
          break;
        }
      }
      if (found < 0) {
        reps.push_back(row);
        members.push_back({row});
      } else {
        members[found].push_back(row);
      }
    }
    for (size_t gi = 0; gi < reps.size(); ++gi) {
      Group g;
      g.x = data_.x_row(reps[gi]).data();
      g.n = static_cast<int>(members[gi].size());
      g.h_off = static_cast<int>(hist_.size());
      std::map<long, int> h;
      for (int row : members[gi]) {
        const long y = data_.y[row];
        g.sum_y += y;
        g.lf_sum += log_factorial(y);
        ++h[y];
      }
      for (const auto& [y, m] : h) hist_.emplace_back(y, m);
      g.h_len = static_cast<int>(hist_.size()) - g.h_off;
      groups_.push_back(g);
    }
    g_off_[tt] = static_cast<int>(groups_.size());
  }
}

void ChainRunner::build_deps() {
  const int nf = spec_.n_free();
  deps_.resize(nf);
  for (int k = 0; k < nf; ++k) deps_[k].slots.push_back(spec_.slot_of_free[k]);
  for (size_t i = 0; i < spec_.restrictions.size(); ++i) {
    const Restriction& r = spec_.restrictions[i];
    if (r.kind == Restriction::Kind::TiedTo)
      deps_[spec_.free_of_slot[r.parent]].slots.push_back(static_cast<int>(i));
  }
  for (int k = 0; k < nf; ++k) {
    for (int slot : deps_[k].slots) {
      const ParamDesc& d = spec_.table[slot];
      deps_[k].state_mask |= d.state == 0 ? 1 : 2;
      if (d.role == Role::LnAlpha) (d.state == 0 ? deps_[k].alpha0 : deps_[k].alpha1) = true;
    }
  }
}

double ChainRunner::period_loglik(int state, int t0, const StateParams& sp,
                                  const NbTab& nb) const {
  const Family fam = family_of(state);
  double acc = 0.0;
  for (int gi = g_off_[t0]; gi < g_off_[t0 + 1]; ++gi) {
    const Group& g = groups_[gi];
    switch (fam) {
      case Family::ZeroOnly:
        if (g.sum_y > 0) return kLogZero;
        break;
      case Family::Poisson: {
        double eta = 0.0;
        for (int k = 0; k < K_; ++k) eta += sp.beta[k] * g.x[k];
        if (eta > 700.0) eta = 700.0;
        acc += g.sum_y * eta - g.n * std::exp(eta) - g.lf_sum;
        break;
      }
      case Family::NegBin: {
        double eta = 0.0;
        for (int k = 0; k < K_; ++k) eta += sp.beta[k] * g.x[k];
        if (eta > 700.0) eta = 700.0;
        const double lam = std::exp(eta);
        double ch = 0.0;
        for (int hh = g.h_off; hh < g.h_off + g.h_len; ++hh)
          ch += hist_[hh].second * nb.c[hist_[hh].first];
        acc += ch + g.sum_y * (nb.ln_alpha + eta) -
               (g.n * nb.r + g.sum_y) * std::log1p(nb.alpha * lam) - g.lf_sum;
        break;
      }
      case Family::Mnl: {
        double etas[64], m = -1e308;
        for (int i = 0; i < spec_.n_outcomes; ++i) {
          double e = 0.0;
          for (int k = 0; k < K_; ++k) e += sp.beta[i * K_ + k] * g.x[k];
          etas[i] = e;
          if (e > m) m = e;
        }
        double se = 0.0;
        for (int i = 0; i < spec_.n_outcomes; ++i) se += std::exp(etas[i] - m);
        const double lse = m + std::log(se);
        for (int hh = g.h_off; hh < g.h_off + g.h_len; ++hh)
          acc += hist_[hh].second * etas[hist_[hh].first - 1];
        acc -= g.n * lse;
        break;
      }
      default: {  // zero-inflated families: reference kernel per distinct count
        const std::span<const double> x{g.x, static_cast<size_t>(K_)};
        for (int hh = g.h_off; hh < g.h_off + g.h_len; ++hh)
          acc += hist_[hh].second * log_zero_inflated(fam, sp, x, hist_[hh].first);
        break;
      }
    }
    if (is_log_zero(acc)) return kLogZero;
  }
  return acc;
}

void ChainRunner::refresh_state(int state, const StateParams& sp, const NbTab& nb,
                                const std::vector<double>* keep_in_state) {
  for (int t0 = 0; t0 < T_; ++t0) {
    if (keep_in_state && in_state(t0, state))
      L_[state][t0] = (*keep_in_state)[t0];
    else
      L_[state][t0] = period_loglik(state, t0, sp, nb);
  }
}

void ChainRunner::adopt(const ParamPoint& theta) {
  free_ = theta.free_coefs;
  probs_ = theta.probs;
  s_ = theta.s;
  auto [p0, p1] = assemble_params(spec_, free_);
  sp_[0] = std::move(p0);
  sp_[1] = std::move(p1);
  for (int a : {0, 1}) {
    if (family_has_alpha(family_of(a)) && sp_[a].ln_alpha)
      nb_[a].build(*sp_[a].ln_alpha, max_y_);
    L_[a].assign(T_, 0.0);
    scratch_[a].assign(T_, 0.0);
  }
  if (spec_.single_state)
    refresh_state(1, sp_[1], nb_[1], nullptr);
  else
    for (int a : {0, 1}) refresh_state(a, sp_[a], nb_[a], nullptr);
}

bool ChainRunner::update_coef(int k, double sigma) {
  const Dep& dep = deps_[k];
  StateParams cand_sp[2];
  NbTab cand_nb[2];
  const double mu = prior_.coef.mu[k], s2 = prior_.coef.sigma2[k];
  const double cur = free_[k];

  const bool accepted = mh_step(free_[k], sigma, cfg_.jump, rng_, [&](double vp) {
    double delta = -0.5 * (vp - mu) * (vp - mu) / s2 + 0.5 * (cur - mu) * (cur - mu) / s2;
    for (int a : {0, 1}) {
      if (!(dep.state_mask & (1 << a))) continue;
      cand_sp[a] = sp_[a];
      for (int slot : dep.slots)
        if (spec_.table[slot].state == a) set_param(cand_sp[a], spec_.table[slot], K_, vp);
      const bool alpha_changed = a == 0 ? dep.alpha0 : dep.alpha1;
      const NbTab* nb = &nb_[a];
      if (alpha_changed) {
        cand_nb[a].build(*cand_sp[a].ln_alpha, max_y_);
        nb = &cand_nb[a];
      }
      for (int t0 = 0; t0 < T_; ++t0) {
        if (!in_state(t0, a)) continue;
        const double lp = period_loglik(a, t0, cand_sp[a], *nb);
        scratch_[a][t0] = lp;
        if (is_log_zero(lp)) return kLogZero;
        delta += lp - L_[a][t0];
      }
    }
    return delta;
  });

  if (accepted) {
    for (int a : {0, 1}) {
      if (!(dep.state_mask & (1 << a))) continue;
      sp_[a] = std::move(cand_sp[a]);
      if (a == 0 ? dep.alpha0 : dep.alpha1) nb_[a] = std::move(cand_nb[a]);
      refresh_state(a, sp_[a], nb_[a], &scratch_[a]);
    }
  }
  return accepted;
}

void ChainRunner::try_label_swap() {
  // Metropolis move on the label-interchange symmetry: swap the two states'
  // parameter blocks and complement S, leaving the transition probabilities
  // in place. The observation likelihood is invariant under the interchange,
  // so the ratio involves no data pass; only the state prior and the (possibly
  // asymmetric) coefficient prior enter. A chain settled on the wrong label
  // setting escapes within a few sweeps, while from the dominant setting the
  // move is almost never accepted.
  std::vector<double> cand(free_.size());
  for (size_t k = 0; k < free_.size(); ++k) cand[k] = free_[swap_perm_[k]];
  std::vector<uint8_t> sbar(s_.size());
  for (size_t t = 0; t < s_.size(); ++t) sbar[t] = static_cast<uint8_t>(1 - s_[t]);
  const double delta = log_coef_prior(prior_.coef, cand) - log_coef_prior(prior_.coef, free_) +
                       log_state_prior(sbar, probs_, layout_) -
                       log_state_prior(s_, probs_, layout_);
  const double u = rng_.uniform01();
  if (!(std::log(u) < delta)) return;
  free_ = std::move(cand);
  s_ = std::move(sbar);
  std::swap(sp_[0], sp_[1]);
  std::swap(nb_[0], nb_[1]);
  std::swap(L_[0], L_[1]);
}

double ChainRunner::current_loglik() const {
  double ll = 0.0;
  for (int t0 = 0; t0 < T_; ++t0) {
    const double v = spec_.single_state ? L_[1][t0] : L_[s_[t0]][t0];
    if (is_log_zero(v)) return kLogZero;
    ll += v;
  }
  return ll;
}

void ChainRunner::verify_caches() const {
  auto [p0, p1] = assemble_params(spec_, free_);
  for (int a : {0, 1}) {
    if (spec_.single_state && a == 0) continue;
    const StateParams& sp = a == 0 ? p0 : p1;
    for (int tt = 1; tt <= T_; ++tt) {
      double ref = 0.0;
      for (int row : pidx_.rows_of(tt))
        ref += log_obs_likelihood(spec_, a, sp, data_.x_row(row), data_.y[row]);
      const double got = L_[a][tt - 1];
      const bool both_zero = is_log_zero(ref) && is_log_zero(got);
      if (!both_zero && std::fabs(ref - got) > 1e-6 * (1.0 + std::fabs(ref)))
        throw std::logic_error("sampler cache mismatch: state " + std::to_string(a) +
                               " period " + std::to_string(tt) + " cached " +
                               std::to_string(got) + " reference " + std::to_string(ref));
    }
  }
}

ChainResult ChainRunner::run(const ProgressFn& progress) {
  ChainResult res;
  res.chain_id = chain_id_;
  res.seed = cfg_.seed;
  res.n_free = spec_.n_free();
  res.n_free_intervals = spec_.single_state ? 0 : layout_.n_free_intervals();
  res.T_tilde = spec_.single_state ? 0 : T_;
  res.state_words = spec_.single_state ? 0 : (T_ + 63) / 64;
  res.tuned_sigma.assign(res.n_free, cfg_.init_sigma);
  res.tune_fit_ok.assign(res.n_free, 1);
  res.accept_rate.assign(res.n_free, 0.0);

  const long G = cfg_.draws, Gbi = cfg_.burn();
  const long capacity = cfg_.n_stored();
  res.coef.reserve(capacity * res.n_free);
  res.p01.reserve(capacity * res.n_free_intervals);
  res.p10.reserve(capacity * res.n_free_intervals);
  res.loglik.reserve(capacity);
  res.logjoint.reserve(capacity);
  res.states.reserve(capacity * res.state_words);

  ParamPoint theta = init_theta(data_, pidx_, spec_, layout_, prior_, cfg_, rng_);
  adopt(theta);

  ScaleTuner tuner(res.n_free, cfg_.init_sigma, cfg_.target_accept, cfg_.tune_window,
                   cfg_.tune_factor);
  std::vector<long> post_accepts(res.n_free, 0);

  for (long g = 1; g <= G; ++g) {
    for (int k = 0; k < res.n_free; ++k) {
      const bool acc = update_coef(k, tuner.sigma(k));
      if (g <= Gbi)
        tuner.record(k, acc);
      else if (acc)
        ++post_accepts[k];
    }
    if (g == Gbi && Gbi > 0) tuner.finish_burn_in();

    if (!spec_.single_state) {
      const TransitionCounts counts = count_transitions(s_, layout_);
      gibbs_update_transitions(probs_, counts, prior_.trans, layout_, rng_);
      for (int t0 = 1; t0 <= T_; t0 += cfg_.tau_block)
        gibbs_update_state_block(t0, s_, L_[0], L_[1], probs_, layout_, cfg_.tau_block, rng_);
      if (g <= Gbi && !swap_perm_.empty()) try_label_swap();
    }

    if (cfg_.verify_cache_every > 0 && g % cfg_.verify_cache_every == 0) verify_caches();

    if (g > Gbi && (g - Gbi) % cfg_.thin == 0) {
      const double ll = current_loglik();
      double lj = ll + log_coef_prior(prior_.coef, free_);
      if (!spec_.single_state) {
        lj += log_transition_prior(prior_.trans, probs_, layout_);
        lj += log_state_prior(s_, probs_, layout_);
      }
      if (is_log_zero(ll) || !std::isfinite(lj)) {
        res.aborted = true;
        res.abort_reason = "non-finite log-joint at sweep " + std::to_string(g);
        break;
      }
      res.coef.insert(res.coef.end(), free_.begin(), free_.end());
      res.p01.insert(res.p01.end(), probs_.p01.begin(), probs_.p01.end());
      res.p10.insert(res.p10.end(), probs_.p10.begin(), probs_.p10.end());
      res.loglik.push_back(ll);
      res.logjoint.push_back(lj);
      for (int w = 0; w < res.state_words; ++w) {
        uint64_t word = 0;
        for (int bit = 0; bit < 64; ++bit) {
          const int t0 = w * 64 + bit;
          if (t0 < T_ && s_[t0]) word |= 1ULL << bit;
        }
        res.states.push_back(word);
      }
      ++res.n_stored;
      if (progress) progress(chain_id_, g, lj);
    }
  }

  for (int k = 0; k < res.n_free; ++k) {
    res.tuned_sigma[k] = tuner.sigma(k);
    res.tune_fit_ok[k] = Gbi > 0 ? (tuner.fit_ok(k) ? 1 : 0) : 1;
    res.accept_rate[k] = G > Gbi ? static_cast<double>(post_accepts[k]) / (G - Gbi) : 0.0;
  }
  return res;
}

}  // namespace

ChainResult run_chain(int chain_id, const Dataset& data, const ModelSpec& spec,
                      const SwitchingLayout& layout, const PriorSpec& prior,
                      const SamplerConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  ChainRunner runner(chain_id, data, spec, layout, prior, cfg);
  return runner.run(progress);
}

int resolve_thread_count(int n_threads, int n_jobs) {
  if (n_threads <= 0) {
    if (const char* env = std::getenv("RSWITCH_THREADS")) n_threads = std::atoi(env);
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads <= 0) n_threads = 1;
  }
  return std::max(1, std::min(n_threads, n_jobs));
}

RunResult run_chains(const Dataset& data, const ModelSpec& spec, const SwitchingLayout& layout,
                     const PriorSpec& prior, const SamplerConfig& cfg, int n_threads,
                     const ProgressFn& progress) {
  cfg.validate();
  RunResult out;
  out.chains.resize(cfg.n_chains);
  const int workers = resolve_thread_count(n_threads, cfg.n_chains);
  if (workers == 1) {
    for (int c = 0; c < cfg.n_chains; ++c)
      out.chains[c] = run_chain(c, data, spec, layout, prior, cfg, progress);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          const int c = next.fetch_add(1);
          if (c >= cfg.n_chains) return;
          out.chains[c] = run_chain(c, data, spec, layout, prior, cfg, progress);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace rswitch
