#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace rswitch {

enum class LayoutKind { Annual, Weekly, Severity, Intervals };

struct AuxIndex { int t_tilde; int n_tilde; };   // both 1-based
struct RealIndex { int t; int n; };

// Auxiliary-time representation of the switching structure. Real indices
// (t, n) map bijectively onto auxiliary periods 1..T_tilde. Transitions
// t~ -> t~+1 at t~ in t_minus are excluded from counts and prior; each
// transition is governed by the interval containing its origin t~, and tied
// intervals pool their counts into the governing interval.
struct SwitchingLayout {
  LayoutKind kind = LayoutKind::Weekly;
  int T_tilde = 0;
  int T_real = 0;   // periods per segment (annual), else T_tilde
  int N_real = 1;   // segments (annual), else 1
  std::vector<int> bounds;       // 1-based interval starts, size R+1, first 1, last T_tilde+1
  std::vector<int> tie;          // size R, tie[r] = governing interval, tie[tie[r]] == tie[r]
  std::vector<uint8_t> in_t_minus;  // size T_tilde+1, indexed by t~; [0] unused
  bool restricted = false;       // label identification p01 <= p10

  // Derived.
  std::vector<int> interval_of;     // size T_tilde+1, 1-based t~ -> interval r
  std::vector<int> free_intervals;  // interval ids r with tie[r] == r
  std::vector<int> free_slot_of;    // size R: r -> index of tie[r] in free_intervals

  int n_intervals() const { return static_cast<int>(tie.size()); }
  int n_free_intervals() const { return static_cast<int>(free_intervals.size()); }
  int t_minus_count() const;

  AuxIndex to_aux(int t, int n) const;
  RealIndex to_real(int t_tilde, int n_tilde) const;

  // Annual layout over N segments of T periods each: t~ = t + (n-1)T, the
  // segment seams nT are in t_minus, one interval per segment, all tied, no
  // label restriction (state 0 is structurally zero-only).
  static SwitchingLayout annual(int T, int N);
  // Single-interval identity layouts with the p01 <= p10 restriction.
  static SwitchingLayout weekly(int T);
  static SwitchingLayout severity(int T);
  // General interval layout with explicit boundaries, ties and cut points.
  static SwitchingLayout intervals(int T_tilde, std::vector<int> bounds, std::vector<int> tie,
                                   std::vector<int> t_minus, bool restricted);
};

// m[r][2a+b] counts transitions a -> b governed by free interval r (indexed
// as in layout.free_intervals); tied intervals accumulate into their parent.
struct TransitionCounts {
  std::vector<std::array<long, 4>> m;
  long m00(int fi) const { return m[fi][0]; }
  long m01(int fi) const { return m[fi][1]; }
  long m10(int fi) const { return m[fi][2]; }
  long m11(int fi) const { return m[fi][3]; }
};

TransitionCounts count_transitions(std::span<const uint8_t> s, const SwitchingLayout& layout);

// One (p01, p10) pair per free interval.
struct TransitionProbs {
  std::vector<double> p01, p10;
};

// (pbar0, pbar1) = (p10, p01) / (p01 + p10).
std::pair<double, double> stationary_probs(double p01, double p10);

// log P(S | transition probabilities): sum over free intervals of
// m01 ln p01 + m00 ln(1-p01) + m10 ln p10 + m11 ln(1-p10), plus ln(1/2) for
// the initial state and for each first state after a t_minus cut.
double log_state_prior(std::span<const uint8_t> s, const TransitionProbs& probs,
                       const SwitchingLayout& layout);
double log_state_prior(const TransitionCounts& counts, const TransitionProbs& probs,
                       const SwitchingLayout& layout);

}  // namespace rswitch
