#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rswitch/math.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/switching.hpp"

using namespace rswitch;

TEST_CASE("annual layout index mapping and seams") {
  const SwitchingLayout lay = SwitchingLayout::annual(5, 3);
  CHECK(lay.T_tilde == 15);
  CHECK(lay.to_aux(3, 2).t_tilde == 8);  // t + (n-1) T
  CHECK(lay.to_aux(1, 1).t_tilde == 1);
  CHECK(lay.to_aux(5, 3).t_tilde == 15);
  for (int tt = 1; tt <= 15; ++tt) {
    const RealIndex r = lay.to_real(tt, 1);
    CHECK(lay.to_aux(r.t, r.n).t_tilde == tt);
  }
  // segment seams 5 and 10 are cut; 15 is the last period, not a seam
  CHECK(lay.in_t_minus[5]);
  CHECK(lay.in_t_minus[10]);
  CHECK_FALSE(lay.in_t_minus[15]);
  CHECK(lay.t_minus_count() == 2);
  CHECK_FALSE(lay.restricted);
  // one interval per segment, all tied to the first
  CHECK(lay.n_intervals() == 3);
  CHECK(lay.n_free_intervals() == 1);
  CHECK(lay.free_intervals == std::vector<int>{0});
}

TEST_CASE("identity layouts") {
  for (const SwitchingLayout& lay : {SwitchingLayout::weekly(7), SwitchingLayout::severity(7)}) {
    CHECK(lay.T_tilde == 7);
    CHECK(lay.restricted);
    CHECK(lay.n_intervals() == 1);
    CHECK(lay.n_free_intervals() == 1);
    CHECK(lay.t_minus_count() == 0);
    CHECK(lay.to_aux(4, 1).t_tilde == 4);
    CHECK(lay.to_real(4, 1).t == 4);
    for (int tt = 1; tt <= 7; ++tt) CHECK(lay.interval_of[tt] == 0);
  }
}

TEST_CASE("seasonal interval layout resolves periods to intervals") {
  const std::vector<int> bounds{1, 14, 45, 67, 97, 119, 149, 171, 201, 223, 254, 261};
  const std::vector<int> tie{0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  const SwitchingLayout lay = SwitchingLayout::intervals(260, bounds, tie, {}, true);
  CHECK(lay.n_intervals() == 11);
  CHECK(lay.n_free_intervals() == 2);
  CHECK(lay.free_intervals == std::vector<int>{0, 1});
  CHECK(lay.interval_of[1] == 0);
  CHECK(lay.interval_of[13] == 0);
  CHECK(lay.interval_of[14] == 1);
  CHECK(lay.interval_of[44] == 1);
  CHECK(lay.interval_of[45] == 2);
  CHECK(lay.interval_of[254] == 10);
  CHECK(lay.interval_of[260] == 10);
  CHECK(lay.free_slot_of[0] == 0);
  CHECK(lay.free_slot_of[1] == 1);
  CHECK(lay.free_slot_of[2] == 0);  // tied back to the first free interval
  CHECK(lay.free_slot_of[9] == 1);
}

TEST_CASE("layout validation") {
  CHECK_THROWS(SwitchingLayout::annual(0, 3));
  CHECK_THROWS(SwitchingLayout::weekly(0));
  // bounds must start at 1, end at T+1, strictly increase
  CHECK_THROWS(SwitchingLayout::intervals(10, {2, 11}, {0}, {}, true));
  CHECK_THROWS(SwitchingLayout::intervals(10, {1, 10}, {0}, {}, true));
  CHECK_THROWS(SwitchingLayout::intervals(10, {1, 5, 5, 11}, {0, 0, 0}, {}, true));
  // tie must point at a free interval (idempotent)
  CHECK_THROWS(SwitchingLayout::intervals(10, {1, 4, 7, 11}, {1, 2, 2}, {}, true));
  // cut points strictly inside [1, T)
  CHECK_THROWS(SwitchingLayout::intervals(10, {1, 11}, {0}, {0}, true));
  CHECK_THROWS(SwitchingLayout::intervals(10, {1, 11}, {0}, {10}, true));
  CHECK_NOTHROW(SwitchingLayout::intervals(10, {1, 11}, {0}, {9}, true));
}

TEST_CASE("transition counts on the worked five-period path") {
  const SwitchingLayout lay = SwitchingLayout::weekly(5);
  const std::vector<uint8_t> s{0, 0, 1, 1, 0};
  const TransitionCounts c = count_transitions(s, lay);
  REQUIRE(c.m.size() == 1);
  CHECK(c.m00(0) == 1);
  CHECK(c.m01(0) == 1);
  CHECK(c.m11(0) == 1);
  CHECK(c.m10(0) == 1);
}

TEST_CASE("cut points drop their origin transitions") {
  const SwitchingLayout lay = SwitchingLayout::annual(2, 2);
  const std::vector<uint8_t> s{0, 1, 0, 0};
  const TransitionCounts c = count_transitions(s, lay);
  CHECK(c.m01(0) == 1);  // 1 -> 2
  CHECK(c.m00(0) == 1);  // 3 -> 4; the seam transition 2 -> 3 is excluded
  CHECK(c.m10(0) == 0);
  CHECK(c.m11(0) == 0);
}

TEST_CASE("interval-resolved counting against a direct loop") {
  const SwitchingLayout lay =
      SwitchingLayout::intervals(12, {1, 5, 9, 13}, {0, 1, 0}, {6}, false);
  Rng rng(99, 1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<uint8_t> s(12);
    for (auto& b : s) b = static_cast<uint8_t>(rng.bernoulli(0.5));
    const TransitionCounts got = count_transitions(s, lay);
    long ref[2][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}};
    for (int tt = 1; tt < 12; ++tt) {
      if (lay.in_t_minus[tt]) continue;
      const int fi = lay.free_slot_of[lay.interval_of[tt]];
      ++ref[fi][2 * s[tt - 1] + s[tt]];
    }
    for (int fi = 0; fi < 2; ++fi)
      for (int k = 0; k < 4; ++k) CHECK(got.m[fi][k] == ref[fi][k]);
  }
}

TEST_CASE("tying all intervals equals the single-interval layout") {
  const SwitchingLayout tied =
      SwitchingLayout::intervals(10, {1, 6, 11}, {0, 0}, {}, true);
  const SwitchingLayout plain = SwitchingLayout::weekly(10);
  Rng rng(7, 2);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<uint8_t> s(10);
    for (auto& b : s) b = static_cast<uint8_t>(rng.bernoulli(0.4));
    const TransitionCounts a = count_transitions(s, tied);
    const TransitionCounts b = count_transitions(s, plain);
    REQUIRE(a.m.size() == 1);
    for (int k = 0; k < 4; ++k) CHECK(a.m[0][k] == b.m[0][k]);
    TransitionProbs probs;
    probs.p01 = {0.21};
    probs.p10 = {0.52};
    CHECK(log_state_prior(s, probs, tied) ==
          doctest::Approx(log_state_prior(s, probs, plain)).epsilon(1e-14));
  }
}

TEST_CASE("stationary probabilities") {
  const auto [p0, p1] = stationary_probs(0.2, 0.3);
  CHECK(p0 == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p1 == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("state prior hand value on the worked path") {
  const SwitchingLayout lay = SwitchingLayout::weekly(5);
  const std::vector<uint8_t> s{0, 0, 1, 1, 0};
  TransitionProbs probs;
  probs.p01 = {0.2};
  probs.p10 = {0.3};
  const double expect =
      std::log(0.2) + std::log(0.8) + std::log(0.3) + std::log(0.7) + std::log(0.5);
  CHECK(log_state_prior(s, probs, lay) == doctest::Approx(expect).epsilon(1e-14));
  const TransitionCounts c = count_transitions(s, lay);
  CHECK(log_state_prior(c, probs, lay) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("state prior cut constant counts every segment head") {
  const SwitchingLayout lay = SwitchingLayout::annual(2, 2);
  const std::vector<uint8_t> s{0, 1, 0, 0};
  TransitionProbs probs;
  probs.p01 = {0.25};
  probs.p10 = {0.5};
  // m01 = 1, m00 = 1, two Bernoulli(1/2) heads
  const double expect = std::log(0.25) + std::log(0.75) + 2 * std::log(0.5);
  CHECK(log_state_prior(s, probs, lay) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("state prior honors the zero-probability convention") {
  const SwitchingLayout lay = SwitchingLayout::weekly(4);
  TransitionProbs stuck;
  stuck.p01 = {0.0};
  stuck.p10 = {0.4};
  // no 0 -> 1 move observed: 0 * log 0 = 0
  const std::vector<uint8_t> all0{0, 0, 0, 0};
  CHECK(log_state_prior(all0, stuck, lay) ==
        doctest::Approx(3 * std::log(1.0) + std::log(0.5)).epsilon(1e-14));
  // a 0 -> 1 move with p01 = 0 is impossible
  const std::vector<uint8_t> moves{0, 1, 1, 1};
  CHECK(is_log_zero(log_state_prior(moves, stuck, lay)));
}

TEST_CASE("label swap symmetry of the state prior") {
  const SwitchingLayout lay =
      SwitchingLayout::intervals(14, {1, 8, 15}, {0, 1}, {4}, false);
  Rng rng(31, 4);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<uint8_t> s(14), flip(14);
    for (int i = 0; i < 14; ++i) {
      s[i] = static_cast<uint8_t>(rng.bernoulli(0.5));
      flip[i] = static_cast<uint8_t>(1 - s[i]);
    }
    TransitionProbs probs, swapped;
    probs.p01 = {0.1, 0.33};
    probs.p10 = {0.47, 0.2};
    swapped.p01 = probs.p10;
    swapped.p10 = probs.p01;
    CHECK(log_state_prior(s, probs, lay) ==
          doctest::Approx(log_state_prior(flip, swapped, lay)).epsilon(1e-13));
  }
}
