#include "rswitch/switching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rswitch/math.hpp"

namespace rswitch {

namespace {

void finalize(SwitchingLayout& L) {
  const int R = L.n_intervals();
  if (L.T_tilde < 1) throw std::invalid_argument("layout: T_tilde must be >= 1");
  if (static_cast<int>(L.bounds.size()) != R + 1 || R < 1)
    throw std::invalid_argument("layout: need R >= 1 intervals with R+1 bounds");
  if (L.bounds.front() != 1 || L.bounds.back() != L.T_tilde + 1)
    throw std::invalid_argument("layout: bounds must start at 1 and end at T_tilde + 1");
  for (int r = 0; r < R; ++r)
    if (L.bounds[r + 1] <= L.bounds[r])
      throw std::invalid_argument("layout: bounds must be strictly increasing");
  for (int r = 0; r < R; ++r) {
    if (L.tie[r] < 0 || L.tie[r] >= R) throw std::invalid_argument("layout: tie out of range");
    if (L.tie[L.tie[r]] != L.tie[r])
      throw std::invalid_argument("layout: tie must point at a self-governed interval");
  }
  if (static_cast<int>(L.in_t_minus.size()) != L.T_tilde + 1)
    throw std::invalid_argument("layout: t_minus mask size mismatch");
  if (L.in_t_minus[L.T_tilde])
    throw std::invalid_argument("layout: t_minus must lie strictly inside [1, T_tilde)");

  L.interval_of.assign(L.T_tilde + 1, 0);
  for (int r = 0; r < R; ++r)
    for (int t = L.bounds[r]; t < L.bounds[r + 1]; ++t) L.interval_of[t] = r;

  L.free_intervals.clear();
  L.free_slot_of.assign(R, -1);
  for (int r = 0; r < R; ++r)
    if (L.tie[r] == r) {
      L.free_slot_of[r] = static_cast<int>(L.free_intervals.size());
      L.free_intervals.push_back(r);
    }
  for (int r = 0; r < R; ++r) L.free_slot_of[r] = L.free_slot_of[L.tie[r]];
}

}  // namespace

int SwitchingLayout::t_minus_count() const {
  int c = 0;
  for (int t = 1; t < T_tilde; ++t) c += in_t_minus[t] ? 1 : 0;
  return c;
}

AuxIndex SwitchingLayout::to_aux(int t, int n) const {
  if (kind == LayoutKind::Annual) {
    if (t < 1 || t > T_real || n < 1 || n > N_real)
      throw std::out_of_range("layout: real index out of range");
    return {t + (n - 1) * T_real, 1};
  }
  if (t < 1 || t > T_tilde) throw std::out_of_range("layout: real index out of range");
  return {t, n};
}

RealIndex SwitchingLayout::to_real(int t_tilde, int n_tilde) const {
  if (t_tilde < 1 || t_tilde > T_tilde) throw std::out_of_range("layout: aux index out of range");
  if (kind == LayoutKind::Annual) {
    if (n_tilde != 1) throw std::out_of_range("layout: annual aux has n_tilde = 1");
    return {(t_tilde - 1) % T_real + 1, (t_tilde - 1) / T_real + 1};
  }
  return {t_tilde, n_tilde};
}

SwitchingLayout SwitchingLayout::annual(int T, int N) {
  if (T < 1 || N < 1) throw std::invalid_argument("layout: annual needs T, N >= 1");
  SwitchingLayout L;
  L.kind = LayoutKind::Annual;
  L.T_tilde = T * N;
  L.T_real = T;
  L.N_real = N;
  L.bounds.resize(N + 1);
  for (int r = 0; r <= N; ++r) L.bounds[r] = 1 + r * T;
  L.tie.assign(N, 0);
  L.in_t_minus.assign(L.T_tilde + 1, 0);
  for (int n = 1; n < N; ++n) L.in_t_minus[n * T] = 1;
  L.restricted = false;
  finalize(L);
  return L;
}

SwitchingLayout SwitchingLayout::weekly(int T) {
  SwitchingLayout L;
  L.kind = LayoutKind::Weekly;
  L.T_tilde = T;
  L.T_real = T;
  L.bounds = {1, T + 1};
  L.tie = {0};
  L.in_t_minus.assign(T + 1, 0);
  L.restricted = true;
  finalize(L);
  return L;
}

SwitchingLayout SwitchingLayout::severity(int T) {
  SwitchingLayout L = weekly(T);
  L.kind = LayoutKind::Severity;
  return L;
}

SwitchingLayout SwitchingLayout::intervals(int T_tilde, std::vector<int> bounds,
                                           std::vector<int> tie, std::vector<int> t_minus,
                                           bool restricted) {
  SwitchingLayout L;
  L.kind = LayoutKind::Intervals;
  L.T_tilde = T_tilde;
  L.T_real = T_tilde;
  L.bounds = std::move(bounds);
  L.tie = std::move(tie);
  L.in_t_minus.assign(T_tilde + 1, 0);
  for (int t : t_minus) {
    if (t < 1 || t >= T_tilde)
      throw std::invalid_argument("layout: t_minus must lie strictly inside [1, T_tilde)");
    L.in_t_minus[t] = 1;
  }
  L.restricted = restricted;
  finalize(L);
  return L;
}

TransitionCounts count_transitions(std::span<const uint8_t> s, const SwitchingLayout& layout) {
  if (s.size() != static_cast<size_t>(layout.T_tilde))
    throw std::invalid_argument("count_transitions: state vector length mismatch");
  TransitionCounts c;
  c.m.assign(layout.n_free_intervals(), {0, 0, 0, 0});
  for (int t = 1; t < layout.T_tilde; ++t) {  // transition t -> t+1, 1-based origin
    if (layout.in_t_minus[t]) continue;
    const int fi = layout.free_slot_of[layout.interval_of[t]];
    const int a = s[t - 1], b = s[t];
    ++c.m[fi][2 * a + b];
  }
  return c;
}

std::pair<double, double> stationary_probs(double p01, double p10) {
  if (!(p01 >= 0.0) || !(p10 >= 0.0) || p01 + p10 <= 0.0)
    throw std::domain_error("stationary_probs: need p01 + p10 > 0");
  const double d = p01 + p10;
  return {p10 / d, p01 / d};
}

namespace {

// count * log(p) with the 0 * log(0) = 0 convention.
double xlogp(long count, double p) {
  if (count == 0) return 0.0;
  if (p <= 0.0) return kLogZero;
  return count * std::log(p);
}

}  // namespace

double log_state_prior(const TransitionCounts& counts, const TransitionProbs& probs,
                       const SwitchingLayout& layout) {
  const int F = layout.n_free_intervals();
  if (static_cast<int>(probs.p01.size()) != F || static_cast<int>(probs.p10.size()) != F)
    throw std::invalid_argument("log_state_prior: probs size mismatch");
  double lp = 0.0;
  for (int fi = 0; fi < F; ++fi) {
    const double p01 = probs.p01[fi], p10 = probs.p10[fi];
    if (!(p01 > 0.0 && p01 < 1.0 && p10 > 0.0 && p10 < 1.0)) {
      // Degenerate probabilities are legal only if no transition needs them.
      const double t = xlogp(counts.m01(fi), p01) + xlogp(counts.m00(fi), 1.0 - p01) +
                       xlogp(counts.m10(fi), p10) + xlogp(counts.m11(fi), 1.0 - p10);
      if (is_log_zero(t)) return kLogZero;
      lp += t;
      continue;
    }
    lp += counts.m01(fi) * std::log(p01) + counts.m00(fi) * std::log1p(-p01) +
          counts.m10(fi) * std::log(p10) + counts.m11(fi) * std::log1p(-p10);
  }
  // The initial state and the first state after each cut carry P = 1/2.
  lp += (1 + layout.t_minus_count()) * std::log(0.5);
  return lp;
}

double log_state_prior(std::span<const uint8_t> s, const TransitionProbs& probs,
                       const SwitchingLayout& layout) {
  return log_state_prior(count_transitions(s, layout), probs, layout);
}

}  // namespace rswitch
