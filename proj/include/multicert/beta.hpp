#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "multicert/errors.hpp"

namespace multicert {
namespace detail {

// Continued fraction for the regularized incomplete beta, evaluated with the
// modified Lentz scheme. Converges quickly for x < (a+1)/(a+b+2); the caller
// applies the symmetry transform otherwise.
inline double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 3.0e-16;
  constexpr double kTiny = 1.0e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace detail

// Regularized incomplete beta function I_x(a, b) for a, b > 0.
inline double reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw NumericError("reg_inc_beta: shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0))
    throw NumericError("reg_inc_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double lbt = a * std::log(x) + b * std::log1p(-x) - detail::log_beta(a, b);
  const double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_cont_frac(a, b, x) / a;
  return 1.0 - bt * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// Quantile of the Beta(a, b) distribution: the x with I_x(a, b) = q, solved
// by Newton steps safeguarded with a shrinking bisection bracket. Accuracy
// target is |I_x(a,b) - q| <= 1e-12 at the returned point.
inline double beta_quantile(double q, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw NumericError("beta_quantile: shape parameters must be positive");
  if (!(q >= 0.0 && q <= 1.0))
    throw NumericError("beta_quantile: q outside [0,1]");
  if (q == 0.0) return 0.0;
  if (q == 1.0) return 1.0;

  const double lbeta = detail::log_beta(a, b);
  double lo = 0.0;
  double hi = 1.0;
  double x = a / (a + b);  // mean as the starting point
  double f = reg_inc_beta(x, a, b) - q;

  for (int iter = 0; iter < 200; ++iter) {
    if (std::fabs(f) <= 0.5e-13) return x;
    if (f > 0.0) hi = x; else lo = x;
    double next = 0.5 * (lo + hi);
    if (x > 0.0 && x < 1.0) {
      const double log_pdf =
          (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lbeta;
      const double pdf = std::exp(log_pdf);
      if (pdf > 0.0 && std::isfinite(pdf)) {
        const double candidate = x - f / pdf;
        if (candidate > lo && candidate < hi) next = candidate;
      }
    }
    if (hi - lo < 1e-17 || next == x) return x;
    x = next;
    f = reg_inc_beta(x, a, b) - q;
  }
  if (std::fabs(f) <= 1e-12) return x;
  throw NumericError("beta_quantile did not converge: a=" + std::to_string(a) +
                     " b=" + std::to_string(b) + " q=" + std::to_string(q));
}

}  // namespace multicert
