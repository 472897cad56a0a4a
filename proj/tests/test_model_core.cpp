#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rswitch/math.hpp"
#include "rswitch/model.hpp"

using namespace rswitch;

namespace {

// Brute-force log Gamma(y + r) - log Gamma(r) for the dispersion tests.
double gterm_ref(double r, long y) {
  double s = 0;
  for (long j = 0; j < y; ++j) s += std::log(r + j);
  return s;
}

StateParams count_params(std::vector<double> beta) {
  StateParams p;
  p.beta = std::move(beta);
  return p;
}

}  // namespace

TEST_CASE("log_sum_exp basics and sentinel") {
  CHECK(log_sum_exp(std::log(2.0), std::log(3.0)) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  CHECK(log_sum_exp(kLogZero, std::log(3.0)) == doctest::Approx(std::log(3.0)));
  CHECK(is_log_zero(log_sum_exp(kLogZero, kLogZero)));
  CHECK(log_sum_exp(1000.0, 1000.0) == doctest::Approx(1000.0 + std::log(2.0)));
  std::vector<double> v{0.0, std::log(2.0), kLogZero};
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("log_gamma matches lgamma over a wide grid") {
  for (double x : {0.07, 0.5, 0.61, 1.0, 1.5, 2.0, 3.7, 4.0, 11.25, 19.99, 20.0, 57.3, 170.0,
                   171.0, 200.5, 1234.5, 4096.0, 1e6}) {
    const double ref = std::lgamma(x);
    const double got = log_gamma(x);
    if (ref == 0.0)
      CHECK(std::abs(got) < 1e-12);
    else
      CHECK(std::abs(got - ref) / std::abs(ref) < 1e-12);
  }
  CHECK(log_gamma(1.0) == 0.0);
  CHECK(log_gamma(2.0) == 0.0);
  CHECK(log_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-15));
}

TEST_CASE("log_factorial exact against running sum") {
  double s = 0;
  for (long a = 1; a <= 300; ++a) {
    s += std::log(static_cast<double>(a));
    CHECK(log_factorial(a) == doctest::Approx(s).epsilon(1e-13));
  }
  CHECK(log_factorial(0) == 0.0);
}

TEST_CASE("digamma against finite difference of log_gamma") {
  for (double x : {0.3, 1.0, 2.5, 7.0, 42.0, 500.0}) {
    const double h = 1e-6 * std::max(1.0, x);
    const double ref = (log_gamma(x + h) - log_gamma(x - h)) / (2 * h);
    CHECK(digamma(x) == doctest::Approx(ref).epsilon(1e-7));
  }
  // digamma(1) = -euler_gamma
  CHECK(digamma(1.0) == doctest::Approx(-0.57721566490153286).epsilon(1e-12));
}

TEST_CASE("sigmoid identities") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(log_sigmoid(0.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  for (double z : {-40.0, -3.0, 0.7, 35.0}) {
    CHECK(sigmoid(z) + sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(log_sigmoid(z) == doctest::Approx(std::log(sigmoid(z))).epsilon(1e-12));
  }
  CHECK(std::isfinite(log_sigmoid(-750.0)));
  CHECK(log_sigmoid(-750.0) == doctest::Approx(-750.0).epsilon(1e-12));
}

TEST_CASE("poisson likelihood worked value and normalization") {
  CHECK(log_poisson(2.0, 3) == doctest::Approx(-1.7123).epsilon(1e-4));
  CHECK(log_poisson(2.0, 3) ==
        doctest::Approx(3 * std::log(2.0) - 2.0 - std::log(6.0)).epsilon(1e-14));
  for (double lam : {0.3, 1.0, 7.5, 40.0}) {
    double sum = 0;
    for (long a = 0; a < 400; ++a) sum += std::exp(log_poisson(lam, a));
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(log_poisson(0.0, 0) == 0.0);
  CHECK(is_log_zero(log_poisson(0.0, 2)));
}

TEST_CASE("negative binomial worked values, normalization, poisson limit") {
  CHECK(log_negbin(1.0, std::log(1.0), 0) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
  CHECK(log_negbin(2.0, std::log(0.5), 1) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  for (double lam : {0.5, 3.0, 25.0})
    for (double alpha : {0.1, 0.5, 2.0}) {
      double sum = 0;
      for (long a = 0; a < 3000; ++a) sum += std::exp(log_negbin(lam, std::log(alpha), a));
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
  // Against the direct gamma-function form.
  for (double lam : {0.7, 4.0})
    for (double alpha : {0.3, 1.5})
      for (long a : {0L, 1L, 2L, 17L, 400L}) {
        const double r = 1.0 / alpha;
        const double ref = gterm_ref(r, a) - log_factorial(a) -
                           (r + a) * std::log1p(alpha * lam) +
                           a * (std::log(alpha) + std::log(lam));
        CHECK(log_negbin(lam, std::log(alpha), a) == doctest::Approx(ref).epsilon(1e-12));
      }
  // Vanishing overdispersion converges to the Poisson kernel (the exact gap
  // scales like alpha * ((a - lambda)^2 + a) / 2).
  for (double lam : {0.5, 2.0, 30.0})
    for (long a : {0L, 1L, 5L, 60L})
      CHECK(std::abs(log_negbin(lam, std::log(1e-10), a) - log_poisson(lam, a)) < 1e-6);
  // Far below the cutoff the two coincide to full precision.
  CHECK(std::abs(log_negbin(3.0, std::log(1e-13), 4) - log_poisson(3.0, 4)) < 1e-9);
}

TEST_CASE("zero-inflated mass splits") {
  // gamma form at gamma'x = 0 halves the base mass for positive counts
  StateParams p = count_params({std::log(2.0)});
  p.gamma = {0.0};
  const std::vector<double> x{1.0};
  const double base3 = log_poisson(2.0, 3);
  CHECK(log_zero_inflated(Family::ZipGamma, p, x, 3) ==
        doctest::Approx(base3 - std::log(2.0)).epsilon(1e-14));
  CHECK(log_zero_inflated(Family::ZipGamma, p, x, 0) ==
        doctest::Approx(std::log(0.5 + 0.5 * std::exp(log_poisson(2.0, 0)))).epsilon(1e-14));

  // tau form: z = tau * log(lambda)
  StateParams q = count_params({std::log(2.0)});
  q.tau = 1.5;
  const double z = 1.5 * std::log(2.0);
  CHECK(log_zero_inflated(Family::ZipTau, q, x, 2) ==
        doctest::Approx(log_sigmoid(-z) + log_poisson(2.0, 2)).epsilon(1e-14));

  // normalization for all four forms
  for (Family f : {Family::ZipTau, Family::ZipGamma, Family::ZinbTau, Family::ZinbGamma}) {
    StateParams pp = count_params({std::log(3.0), 0.4});
    if (family_has_alpha(f)) pp.ln_alpha = std::log(0.6);
    if (family_has_tau(f)) pp.tau = -0.8;
    if (family_has_gamma(f)) pp.gamma = {0.3, -0.2};
    const std::vector<double> xx{1.0, 0.5};
    double sum = 0;
    for (long a = 0; a < 2000; ++a) sum += std::exp(log_zero_inflated(f, pp, xx, a));
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("multinomial logit worked value, normalization, zero last block") {
  // three outcomes, intercept-only: eta = (log 2, 0, 0) -> P(1) = 1/2
  StateParams p;
  p.beta.assign(3, 0.0);
  p.beta[0] = std::log(2.0);
  const std::vector<double> x{1.0};
  CHECK(log_mnl(p, x, 1, 3) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
  CHECK(log_mnl(p, x, 2, 3) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(log_mnl(p, x, 3, 3) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  double sum = 0;
  for (int i = 1; i <= 3; ++i) sum += std::exp(log_mnl(p, x, i, 3));
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));

  // two covariates, four outcomes
  StateParams q;
  q.beta = {0.5, -1.0, 0.2, 0.3, -0.7, 0.9, 0.0, 0.0};
  const std::vector<double> xx{1.0, 2.0};
  double etas[4] = {0.5 - 2.0, 0.2 + 0.6, -0.7 + 1.8, 0.0};
  double denom = 0;
  for (double e : etas) denom += std::exp(e);
  for (int i = 1; i <= 4; ++i)
    CHECK(log_mnl(q, xx, i, 4) == doctest::Approx(etas[i - 1] - std::log(denom)).epsilon(1e-13));
}

TEST_CASE("rate clamps the linear predictor") {
  const std::vector<double> x{1.0};
  const std::vector<double> mid{2.0}, high{900.0}, low{-900.0};
  CHECK(rate(mid, x) == doctest::Approx(std::exp(2.0)));
  CHECK(rate(high, x) == doctest::Approx(std::exp(700.0)));
  CHECK(rate(low, x) == doctest::Approx(std::exp(-700.0)));
}

TEST_CASE("family names round trip") {
  for (Family f : {Family::Poisson, Family::NegBin, Family::ZipTau, Family::ZipGamma,
                   Family::ZinbTau, Family::ZinbGamma, Family::Mnl, Family::ZeroOnly})
    CHECK(family_from_name(family_name(f)) == f);
  CHECK_THROWS(family_from_name("negative_binomial"));
}

TEST_CASE("param_table order and names") {
  const std::vector<std::string> names{"const", "ramps"};
  auto t = param_table(Family::ZinbGamma, 0, 2, names, 0);
  REQUIRE(t.size() == 5);  // beta pair, ln_alpha, gamma pair
  CHECK(t[0].name == "s0.beta.const");
  CHECK(t[1].name == "s0.beta.ramps");
  CHECK(t[2].name == "s0.ln_alpha");
  CHECK(t[3].name == "s0.gamma.const");
  CHECK(t[4].name == "s0.gamma.ramps");

  auto z = param_table(Family::ZinbTau, 1, 1, std::vector<std::string>{"const"}, 0);
  REQUIRE(z.size() == 3);
  CHECK(z[0].name == "s1.beta.const");
  CHECK(z[1].name == "s1.ln_alpha");
  CHECK(z[2].name == "s1.tau");

  auto m = param_table(Family::Mnl, 1, 2, names, 3);
  REQUIRE(m.size() == 4);  // outcomes 1..2 get blocks; the last is pinned
  CHECK(m[0].name == "s1.beta.1.const");
  CHECK(m[3].name == "s1.beta.2.ramps");
  CHECK(param_table(Family::ZeroOnly, 0, 2, names, 0).empty());
}

TEST_CASE("assemble_params applies zero and tie restrictions") {
  // three slots: s1.beta.{a,b,c}; c tied to a
  std::vector<std::string> names{"a", "b", "c"};
  std::vector<Restriction> restr(3);
  restr[2].kind = Restriction::Kind::TiedTo;
  restr[2].parent = 0;
  ModelSpec spec = ModelSpec::single(Family::Poisson, 3, names, restr);
  REQUIRE(spec.n_free() == 2);
  const std::vector<double> free_vals{2.0, -1.0};
  auto [p0, p1] = assemble_params(spec, free_vals);
  CHECK(p1.beta == std::vector<double>{2.0, -1.0, 2.0});

  // zero restriction
  std::vector<Restriction> rz(3);
  rz[1].kind = Restriction::Kind::Zero;
  ModelSpec specz = ModelSpec::single(Family::Poisson, 3, names, rz);
  auto [q0, q1] = assemble_params(specz, std::vector<double>{0.7, 0.9});
  CHECK(q1.beta == std::vector<double>{0.7, 0.0, 0.9});
}

TEST_CASE("minus-infinity intercept turns state 0 into the zero-only family") {
  std::vector<std::string> names{"const", "x1"};
  // full table: s0.beta.const, s0.beta.x1, s1.beta.const, s1.beta.x1, s1.ln_alpha
  std::vector<Restriction> restr(5);
  restr[0].kind = Restriction::Kind::MinusInfinity;
  restr[1].kind = Restriction::Kind::Zero;
  ModelSpec spec = ModelSpec::make(Family::Poisson, Family::NegBin, 2, names, restr);
  CHECK(spec.family0 == Family::ZeroOnly);
  CHECK(spec.state0_slots == 0);
  REQUIRE(spec.n_free() == 3);
  CHECK(spec.free_names[0] == "s1.beta.const");
  auto [p0, p1] = assemble_params(spec, std::vector<double>{1.0, 2.0, -0.5});
  CHECK(p0.beta.empty());
  CHECK(p1.beta == std::vector<double>{1.0, 2.0});
  CHECK(*p1.ln_alpha == -0.5);

  const std::vector<double> x{1.0, 3.0};
  CHECK(log_obs_likelihood(spec, 0, p0, x, 0) == 0.0);
  CHECK(is_log_zero(log_obs_likelihood(spec, 0, p0, x, 1)));
}

TEST_CASE("tie across states keeps values equal after reindexing") {
  std::vector<std::string> names{"const", "x1"};
  // s0.beta.x1 tied to s1.beta.x1 (slot 3 in the full table)
  std::vector<Restriction> restr(5);
  restr[1].kind = Restriction::Kind::TiedTo;
  restr[1].parent = 3;
  ModelSpec spec = ModelSpec::make(Family::Poisson, Family::NegBin, 2, names, restr);
  REQUIRE(spec.n_free() == 4);
  auto [p0, p1] = assemble_params(spec, std::vector<double>{0.1, 0.9, 0.33, -0.2});
  CHECK(p0.beta[1] == p1.beta[1]);
  CHECK(p0.beta[1] == doctest::Approx(0.33));
}

TEST_CASE("spec validation rejects malformed models") {
  std::vector<std::string> names{"const"};
  // tied to a non-free parent
  std::vector<Restriction> bad(3);
  bad[1].kind = Restriction::Kind::Zero;
  bad[2].kind = Restriction::Kind::TiedTo;
  bad[2].parent = 1;
  CHECK_THROWS(ModelSpec::single(Family::ZipGamma, 1, names, bad));
  // self tie
  std::vector<Restriction> self(2);
  self[1].kind = Restriction::Kind::TiedTo;
  self[1].parent = 1;
  CHECK_THROWS(ModelSpec::single(Family::NegBin, 1, names, self));
  // minus-infinity off the state-0 count intercept
  std::vector<Restriction> mi(4);
  mi[3].kind = Restriction::Kind::MinusInfinity;
  CHECK_THROWS(ModelSpec::make(Family::Poisson, Family::Poisson, 2,
                               std::vector<std::string>{"const", "x1"}, mi));
  // mnl must pair with mnl
  CHECK_THROWS(ModelSpec::make(Family::Mnl, Family::Poisson, 1, names, {}, 3));
  // state 1 cannot be the structural-zero family
  CHECK_THROWS(ModelSpec::make(Family::Poisson, Family::ZeroOnly, 1, names, {}));
}

TEST_CASE("log_obs_likelihood dispatches by state family") {
  std::vector<std::string> names{"const"};
  ModelSpec spec = ModelSpec::make(Family::Poisson, Family::NegBin, 1, names, {});
  auto [p0, p1] = assemble_params(spec, std::vector<double>{std::log(2.0), std::log(5.0), 0.0});
  const std::vector<double> x{1.0};
  CHECK(log_obs_likelihood(spec, 0, p0, x, 3) == doctest::Approx(log_poisson(2.0, 3)));
  CHECK(log_obs_likelihood(spec, 1, p1, x, 3) ==
        doctest::Approx(log_negbin(5.0, 0.0, 3)).epsilon(1e-14));
}
