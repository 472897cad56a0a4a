#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "rswitch/datagen.hpp"
#include "rswitch/dataset.hpp"
#include "rswitch/model.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/switching.hpp"

using namespace rswitch;

TEST_CASE("state simulation is deterministic in the seed") {
  const auto layout = SwitchingLayout::weekly(500);
  const TransitionProbs probs{{0.15}, {0.35}};
  Rng a(99, 7), b(99, 7), c(99, 8);
  const auto sa = simulate_states(layout, probs, a);
  const auto sb = simulate_states(layout, probs, b);
  const auto sc = simulate_states(layout, probs, c);
  CHECK(sa == sb);
  CHECK(sa != sc);
  CHECK(sa.size() == 500);
  for (uint8_t s : sa) CHECK((s == 0 || s == 1));
}

TEST_CASE("transition frequencies match the generating probabilities") {
  const auto layout = SwitchingLayout::weekly(60000);
  const TransitionProbs probs{{0.2}, {0.4}};
  Rng rng(2024, 11);
  const auto s = simulate_states(layout, probs, rng);
  const auto counts = count_transitions(s, layout);
  const double from0 = static_cast<double>(counts.m00(0) + counts.m01(0));
  const double from1 = static_cast<double>(counts.m10(0) + counts.m11(0));
  const double f01 = counts.m01(0) / from0;
  const double f10 = counts.m10(0) / from1;
  CHECK(std::abs(f01 - 0.2) < 4 * std::sqrt(0.2 * 0.8 / from0));
  CHECK(std::abs(f10 - 0.4) < 4 * std::sqrt(0.4 * 0.6 / from1));
  // long-run occupancy of state 1 equals the stationary probability
  const auto [pb0, pb1] = stationary_probs(0.2, 0.4);
  double occ = 0;
  for (uint8_t v : s) occ += v;
  occ /= static_cast<double>(s.size());
  CHECK(std::abs(occ - pb1) < 0.01);
  CHECK(pb1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("each segment restarts from a fair coin") {
  // Nearly-absorbing chain: without the restart, period T+1 would almost
  // surely keep the previous state; with it, state 1 shows up half the time.
  const auto layout = SwitchingLayout::annual(4, 2);  // seam after period 4
  const TransitionProbs probs{{0.01}, {0.01}};        // one free interval (units tied)
  Rng rng(5, 5);
  int hits = 0, agree = 0;
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    const auto s = simulate_states(layout, probs, rng);
    REQUIRE(s.size() == 8);
    hits += s[4];                    // first period of the second unit
    agree += (s[4] == s[3]) ? 1 : 0;
  }
  const double frac = static_cast<double>(hits) / reps;
  CHECK(std::abs(frac - 0.5) < 4 * std::sqrt(0.25 / reps));
  // independence across the seam: agreement should also be ~1/2, not ~0.99
  CHECK(std::abs(agree / static_cast<double>(reps) - 0.5) < 0.04);
}

namespace {

Dataset const_design(int t_tilde, int rows_per_period) {
  Dataset d;
  d.cov_names = {"const"};
  d.n_cov = 1;
  for (int t = 1; t <= t_tilde; ++t)
    for (int j = 0; j < rows_per_period; ++j) {
      d.t.push_back(t);
      d.n.push_back(1);
      d.y.push_back(0);
      d.X.push_back(1.0);
    }
  return d;
}

}  // namespace

TEST_CASE("responses honour the state-specific poisson means") {
  const int T = 2000, J = 4;
  Dataset d = const_design(T, J);
  const PeriodIndex pidx = group_by_period(d, SwitchingLayout::weekly(T));
  const ModelSpec spec = ModelSpec::make(Family::Poisson, Family::Poisson, 1, {"const"}, {});
  const auto [p0, p1] = assemble_params(spec, std::vector<double>{0.0, 1.0});  // rates 1 and e
  std::vector<uint8_t> s(T);
  for (int t = 0; t < T; ++t) s[t] = static_cast<uint8_t>(t % 2);
  Rng rng(31, 1);
  simulate_responses(d, pidx, spec, p0, p1, s, rng);
  double sum0 = 0, sum1 = 0;
  long n0 = 0, n1 = 0;
  for (size_t i = 0; i < d.n_rows(); ++i) {
    if (s[d.t[i] - 1] == 0) {
      sum0 += d.y[i];
      ++n0;
    } else {
      sum1 += d.y[i];
      ++n1;
    }
  }
  REQUIRE(n0 == T / 2 * J);
  const double e = std::exp(1.0);
  CHECK(std::abs(sum0 / n0 - 1.0) < 4 * std::sqrt(1.0 / n0));
  CHECK(std::abs(sum1 / n1 - e) < 4 * std::sqrt(e / n1));
}

TEST_CASE("negative binomial responses show the right overdispersion") {
  const int T = 3000, J = 5;
  Dataset d = const_design(T, J);
  const PeriodIndex pidx = group_by_period(d, SwitchingLayout::weekly(T));
  const ModelSpec spec = ModelSpec::make(Family::NegBin, Family::NegBin, 1, {"const"}, {});
  // both states identical so every row contributes: lambda = 2, alpha = 0.5
  const double lam = 2.0, alpha = 0.5;
  const auto [p0, p1] =
      assemble_params(spec, std::vector<double>{std::log(lam), std::log(alpha),
                                                std::log(lam), std::log(alpha)});
  std::vector<uint8_t> s(T, 1);
  Rng rng(32, 2);
  simulate_responses(d, pidx, spec, p0, p1, s, rng);
  double sum = 0;
  for (long y : d.y) sum += y;
  const double n = static_cast<double>(d.n_rows());
  const double mean = sum / n;
  double ss = 0;
  for (long y : d.y) ss += (y - mean) * (y - mean);
  const double var = ss / (n - 1);
  const double true_var = lam * (1 + alpha * lam);  // 4
  CHECK(std::abs(mean - lam) < 4 * std::sqrt(true_var / n));
  CHECK(std::abs(var - true_var) < 0.25);
}

TEST_CASE("zero-only state produces structural zeros") {
  const int T = 50, J = 3;
  Dataset d = const_design(T, J);
  const PeriodIndex pidx = group_by_period(d, SwitchingLayout::weekly(T));
  // state-0 intercept pinned to minus infinity => state 0 emits only zeros
  std::vector<Restriction> restr(2);  // slots: s0.beta.const, s1.beta.const
  restr[0].kind = Restriction::Kind::MinusInfinity;
  const ModelSpec spec = ModelSpec::make(Family::Poisson, Family::Poisson, 1, {"const"}, restr);
  CHECK(spec.family0 == Family::ZeroOnly);
  const auto [p0, p1] = assemble_params(spec, std::vector<double>{2.0});  // state-1 rate e^2
  std::vector<uint8_t> s(T);
  for (int t = 0; t < T; ++t) s[t] = static_cast<uint8_t>(t < T / 2 ? 0 : 1);
  Rng rng(33, 3);
  simulate_responses(d, pidx, spec, p0, p1, s, rng);
  long nonzero_in_0 = 0, positives_in_1 = 0;
  for (size_t i = 0; i < d.n_rows(); ++i) {
    if (s[d.t[i] - 1] == 0 && d.y[i] != 0) ++nonzero_in_0;
    if (s[d.t[i] - 1] == 1 && d.y[i] > 0) ++positives_in_1;
  }
  CHECK(nonzero_in_0 == 0);
  CHECK(positives_in_1 > 0);
}

TEST_CASE("zero inflation adds mass at zero in the flagged state only") {
  const int T = 4000, J = 2;
  Dataset d = const_design(T, J);
  const PeriodIndex pidx = group_by_period(d, SwitchingLayout::weekly(T));
  const ModelSpec spec = ModelSpec::make(Family::Poisson, Family::ZipGamma, 1, {"const"}, {});
  // state0 Poisson(e), state1 zero-inflated Poisson(e) with q = sigmoid(0) = 1/2
  const auto [p0, p1] = assemble_params(spec, std::vector<double>{1.0, 1.0, 0.0});
  std::vector<uint8_t> s(T);
  for (int t = 0; t < T; ++t) s[t] = static_cast<uint8_t>(t % 2);
  Rng rng(34, 4);
  simulate_responses(d, pidx, spec, p0, p1, s, rng);
  long zeros0 = 0, zeros1 = 0, n0 = 0, n1 = 0;
  for (size_t i = 0; i < d.n_rows(); ++i) {
    const bool zero = d.y[i] == 0;
    if (s[d.t[i] - 1] == 0) {
      ++n0;
      zeros0 += zero;
    } else {
      ++n1;
      zeros1 += zero;
    }
  }
  const double pz = std::exp(-std::exp(1.0));  // Poisson mass at zero ~ 0.0659
  const double f0 = zeros0 / static_cast<double>(n0);
  const double f1 = zeros1 / static_cast<double>(n1);
  CHECK(std::abs(f0 - pz) < 4 * std::sqrt(pz * (1 - pz) / n0));
  const double target = 0.5 + 0.5 * pz;
  CHECK(std::abs(f1 - target) < 4 * std::sqrt(target * (1 - target) / n1));
}

TEST_CASE("multinomial responses match the softmax shares") {
  const int T = 5000, J = 2;
  Dataset d = const_design(T, J);
  const PeriodIndex pidx = group_by_period(d, SwitchingLayout::weekly(T));
  const ModelSpec spec =
      ModelSpec::make(Family::Mnl, Family::Mnl, 1, {"const"}, {}, 3);
  // state 1 everywhere; intercepts (ln2, ln1) => shares (2, 1, 1)/4
  const auto [p0, p1] =
      assemble_params(spec, std::vector<double>{0.0, 0.0, std::log(2.0), 0.0});
  std::vector<uint8_t> s(T, 1);
  Rng rng(35, 5);
  simulate_responses(d, pidx, spec, p0, p1, s, rng);
  long c1 = 0, c2 = 0, c3 = 0;
  for (long y : d.y) {
    REQUIRE((y >= 1 && y <= 3));
    c1 += y == 1;
    c2 += y == 2;
    c3 += y == 3;
  }
  const double n = static_cast<double>(d.n_rows());
  CHECK(std::abs(c1 / n - 0.5) < 4 * std::sqrt(0.25 / n));
  CHECK(std::abs(c2 / n - 0.25) < 4 * std::sqrt(0.1875 / n));
  CHECK(std::abs(c3 / n - 0.25) < 4 * std::sqrt(0.1875 / n));
}

TEST_CASE("normal design layout: shared rows, constant column, annual units") {
  const auto layout = SwitchingLayout::annual(3, 2);  // T_tilde = 6
  const std::vector<int> per_period{2, 2, 2, 3, 3, 3};
  Rng rng(36, 6);
  const Dataset d = make_normal_design(layout, per_period, 3, true, rng);
  REQUIRE(d.n_rows() == 15);
  REQUIRE(d.n_cov == 3);
  CHECK(d.cov_names[0] == "const");
  CHECK(d.cov_names[1] == "x1");
  CHECK(d.cov_names[2] == "x2");
  for (size_t i = 0; i < d.n_rows(); ++i) CHECK(d.X[i * 3] == 1.0);
  // rows within a period share covariates when shared_within_period is set
  const PeriodIndex pidx = group_by_period(d, layout);
  for (int t = 1; t <= 6; ++t) {
    const auto rows = pidx.rows_of(t);
    REQUIRE(rows.size() == static_cast<size_t>(per_period[t - 1]));
    for (size_t k = 1; k < rows.size(); ++k)
      for (int c = 0; c < 3; ++c)
        CHECK(d.X[static_cast<size_t>(rows[k]) * 3 + c] ==
              d.X[static_cast<size_t>(rows[0]) * 3 + c]);
    // annual layouts pin every row of the period to its real (t, n) cell
    const RealIndex real = layout.to_real(t, 1);
    for (int r : rows) {
      CHECK(d.t[r] == real.t);
      CHECK(d.n[r] == real.n);
    }
  }

  Rng rng2(36, 7);
  const Dataset d2 = make_normal_design(layout, per_period, 3, false, rng2);
  // unshared: the two rows of period 1 differ in x1
  const PeriodIndex pidx2 = group_by_period(d2, layout);
  const auto r0 = pidx2.rows_of(1);
  CHECK(d2.X[static_cast<size_t>(r0[0]) * 3 + 1] != d2.X[static_cast<size_t>(r0[1]) * 3 + 1]);
}

TEST_CASE("full dataset simulation is reproducible and self-consistent") {
  SimRecipe rec;
  rec.layout = SwitchingLayout::weekly(40);
  rec.spec = ModelSpec::make(Family::Poisson, Family::NegBin, 2, {"const", "x1"}, {});
  rec.free_values = {0.2, 0.1, 1.0, 0.3, std::log(0.6)};
  rec.probs = TransitionProbs{{0.1}, {0.3}};
  {
    Rng drng(77, 1);
    const std::vector<int> per(40, 3);
    rec.design = make_normal_design(rec.layout, per, 2, true, drng);
  }
  Rng r1(88, 2), r2(88, 2);
  const SimResult a = simulate_dataset(rec, r1);
  const SimResult b = simulate_dataset(rec, r2);
  CHECK(a.states == b.states);
  CHECK(a.data.y == b.data.y);
  CHECK(a.data.X == b.data.X);
  REQUIRE(a.states.size() == 40);
  REQUIRE(a.data.n_rows() == 120);
  // design covariates are passed through untouched
  CHECK(a.data.X == rec.design.X);
  CHECK(a.data.t == rec.design.t);
}
