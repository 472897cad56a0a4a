#pragma once

#include <cstddef>
#include <span>

namespace rswitch {

// Finite sentinel for log(0). Stays absorbing under addition of ordinary
// log-likelihood terms, unlike -inf which would poison subtractions with NaN.
inline constexpr double kLogZero = -1.0e300;

inline bool is_log_zero(double x) { return x <= -1.0e290; }

// log(exp(a) + exp(b)) without overflow; sentinel-aware.
double log_sum_exp(double a, double b);
double log_sum_exp(std::span<const double> v);

// log Gamma(x), x > 0. Exact table for integer x <= 171, Lanczos for
// x < 20, Stirling series above. Relative error < 1e-12 on (0.5, inf).
double log_gamma(double x);

// log(a!), a >= 0.
double log_factorial(long a);

// Digamma (d/dx log Gamma), x > 0.
double digamma(double x);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double inc_beta(double a, double b, double x);

// Inverse of I_x(a, b) in x by bracketed bisection/secant.
double inc_beta_inv(double a, double b, double p);

// log(1 / (1 + exp(-z))), stable for large |z|.
double log_sigmoid(double z);

double sigmoid(double z);

}  // namespace rswitch
