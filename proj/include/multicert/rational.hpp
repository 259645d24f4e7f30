#pragma once

#include <gmpxx.h>

#include <cmath>
#include <limits>
#include <string>

#include "multicert/errors.hpp"

namespace multicert {

// Arbitrary-precision non-negative integer. Subsample-space sizes at image
// scale reach ~10^22000, so everything upstream of a final report is exact.
using BigNat = mpz_class;

// Exact rational. mpq keeps lowest terms and a positive denominator, which
// is precisely the canonical-form invariant the certification math assumes.
using Ratio = mpq_class;

inline Ratio make_ratio(const BigNat& num, const BigNat& den) {
  if (sgn(den) == 0) throw NumericError("make_ratio: zero denominator");
  Ratio r(num, den);
  r.canonicalize();
  return r;
}

inline Ratio make_ratio(long num, long den) {
  return make_ratio(BigNat(num), BigNat(den));
}

// Exact conversion; every finite double is a dyadic rational.
inline Ratio exact_ratio(double x) {
  if (!std::isfinite(x)) throw NumericError("exact_ratio: non-finite input");
  Ratio r;
  mpq_set_d(r.get_mpq_t(), x);
  return r;
}

inline bool is_integer(const Ratio& r) {
  return mpz_cmp_ui(mpq_denref(r.get_mpq_t()), 1) == 0;
}

// floor(p * d) for rational p and integer d >= 0, with no rounding anywhere.
inline BigNat floor_scaled(const Ratio& p, const BigNat& d) {
  BigNat num;
  mpz_mul(num.get_mpz_t(), mpq_numref(p.get_mpq_t()), d.get_mpz_t());
  BigNat out;
  mpz_fdiv_q(out.get_mpz_t(), num.get_mpz_t(), mpq_denref(p.get_mpq_t()));
  return out;
}

inline BigNat ceil_scaled(const Ratio& p, const BigNat& d) {
  BigNat num;
  mpz_mul(num.get_mpz_t(), mpq_numref(p.get_mpq_t()), d.get_mpz_t());
  BigNat out;
  mpz_cdiv_q(out.get_mpz_t(), num.get_mpz_t(), mpq_denref(p.get_mpq_t()));
  return out;
}

// Directed conversions to double: the exact value is guaranteed to sit on
// the safe side of the result. mpq_get_d truncates toward zero; stepping
// twice covers the binade-boundary case where one ulp is not enough.
inline double to_double_down(const Ratio& r) {
  double d = r.get_d();
  if (sgn(r) >= 0) return d;
  d = std::nextafter(d, -std::numeric_limits<double>::infinity());
  return std::nextafter(d, -std::numeric_limits<double>::infinity());
}

inline double to_double_up(const Ratio& r) {
  double d = r.get_d();
  if (sgn(r) <= 0) return d;
  d = std::nextafter(d, std::numeric_limits<double>::infinity());
  return std::nextafter(d, std::numeric_limits<double>::infinity());
}

}  // namespace multicert
