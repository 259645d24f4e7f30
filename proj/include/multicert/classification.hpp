#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "multicert/combinatorics.hpp"
#include "multicert/confidence.hpp"

namespace multicert {

enum class EvalMode { kExact, kFast };

inline const char* to_string(EvalMode m) {
  return m == EvalMode::kExact ? "exact" : "fast";
}

inline EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "exact") return EvalMode::kExact;
  if (s == "fast") return EvalMode::kFast;
  throw ConfigError("unknown evaluation mode '" + s + "'");
}

// Outcome of one certification query. In exact mode lhs and rhs are the two
// sides of the decision inequality and certified <=> lhs >= rhs holds as an
// exact rational comparison. Fast mode decides conservatively in log space
// and leaves has_sides false.
struct CertificateDecision {
  bool certified = false;
  EvalMode mode = EvalMode::kExact;
  bool has_sides = false;
  Ratio lhs;
  Ratio rhs;
  std::shared_ptr<const CertTerms> terms;
};

// Decision inequality with the positive denominator D' cleared:
//   floor(pa D) + 2E >= ceil(pb D) + D + D'.
// Algebraically identical to comparing the materialized sides, but runs on
// integers only; this is what per-element loops call.
inline bool certified_exact(const CertTerms& t, const Ratio& pa,
                            const Ratio& pb) {
  if (t.post_space_empty()) return false;
  BigNat lhs = t.floor_mass(pa);
  lhs += 2 * t.overlap_count();
  BigNat rhs = t.ceil_mass(pb);
  rhs += t.pre_count();
  rhs += t.post_count();
  return lhs >= rhs;
}

// Conservative log-space evaluation: certifies only when the exact
// inequality is guaranteed to hold despite floating-point error. The slack
// constants dominate the lgamma error of the log terms by two orders of
// magnitude, so a fast "yes" implies an exact "yes".
inline bool fast_condition(const LogCertTerms& t, double pa, double pb) {
  constexpr double kRel = 1e-6;
  constexpr double kAbs = 1e-12;
  constexpr double kLogMargin = 1e-6;
  if (std::isinf(t.log_d_prime)) return false;
  const double rho1 = std::exp(t.log_e - t.log_d);        // E/D
  const double rho2 = std::exp(t.log_e - t.log_d_prime);  // E/D'
  const double inv_d = std::exp(-t.log_d);
  // Understate the left side: round the helpful overlap term down and the
  // grid-rounding allowance (at most 2/D) up.
  const double s_low = pa - pb - 1.0 + rho1 * (1.0 - kRel) -
                       2.0 * inv_d * (1.0 + kRel) - kAbs;
  if (!(s_low > 0.0)) return false;
  const double rhs_high = 1.0 - rho2 * (1.0 - kRel);
  if (!(rhs_high > 0.0)) return true;
  return t.log_d - t.log_d_prime + std::log(s_low) >=
         std::log(rhs_high) + kLogMargin;
}

// Certification against the worst-case attack described by (specs, budget),
// for exact probabilities pa (lower bound on the top label) and pb (upper
// bound on the runner-up).
inline CertificateDecision certify(const Ratio& pa, const Ratio& pb,
                                   std::span<const ModalitySpec> specs,
                                   const AttackBudget& budget,
                                   EvalMode mode = EvalMode::kExact) {
  if (pa < 0 || pa > 1 || pb < 0 || pb > 1)
    throw ConfigError("probability bounds must lie in [0,1]");
  CertificateDecision out;
  out.mode = mode;
  if (mode == EvalMode::kFast) {
    validate_budget(specs, budget);
    out.certified = fast_condition(log_cert_terms(specs, budget.r),
                                   to_double_down(pa), to_double_up(pb));
    return out;
  }
  auto terms = cert_terms(specs, budget);
  out.terms = terms;
  out.has_sides = true;
  if (terms->post_space_empty()) {
    // Nothing survives the attack; report a trivially failing pair of sides.
    out.lhs = 0;
    out.rhs = 1;
    out.certified = false;
    return out;
  }
  const Ratio ratio_q = make_ratio(terms->pre_count(), terms->post_count());
  const Ratio pa_snapped = pa - terms->delta_lower(pa);
  const Ratio pb_snapped = pb + terms->delta_upper(pb);
  out.lhs = ratio_q * (pa_snapped - 1 + terms->overlap_pre());
  out.rhs = ratio_q * pb_snapped + 1 - terms->overlap_post();
  out.certified = out.lhs >= out.rhs;
  return out;
}

inline CertificateDecision certify(const ProbBoundPair& bounds,
                                   std::span<const ModalitySpec> specs,
                                   const AttackBudget& budget,
                                   EvalMode mode = EvalMode::kExact) {
  return certify(exact_ratio(bounds.p_a_lower), exact_ratio(bounds.p_b_upper),
                 specs, budget, mode);
}

// Ensemble prediction from vote counts: most voted label, ties toward the
// smaller label.
inline int ensemble_predict(const VoteCounts& votes) {
  votes.validate();
  return votes.top_two().label_a;
}

// Ray through budget space: r_1 sweeps 0..r_max and every other modality
// gets floor(c * r_1) for the rational direction c = num/den.
struct RayDirection {
  long num = 1;
  long den = 1;
};

struct RadiusPoint {
  std::vector<long> budget;
  bool certified = false;
};

struct RadiusCurve {
  std::vector<RadiusPoint> points;
  long largest_certified = -1;  // largest certified r_1, -1 when none
};

inline std::vector<long> ray_budget(const RayDirection& c, std::size_t arity,
                                    long r1) {
  if (c.num < 0 || c.den <= 0)
    throw ConfigError("ray direction must be a nonnegative rational");
  if (r1 < 0) throw ConfigError("radius must be nonnegative");
  std::vector<long> budget(arity, 0);
  if (!budget.empty()) budget[0] = r1;
  for (std::size_t i = 1; i < arity; ++i) budget[i] = (c.num * r1) / c.den;
  return budget;
}

inline RadiusCurve certified_radius_curve(const ProbBoundPair& bounds,
                                          std::span<const ModalitySpec> specs,
                                          const RayDirection& direction,
                                          long r_max,
                                          EvalMode mode = EvalMode::kExact) {
  RadiusCurve curve;
  for (long r1 = 0; r1 <= r_max; ++r1) {
    AttackBudget budget{ray_budget(direction, specs.size(), r1)};
    try {
      validate_budget(specs, budget);
    } catch (const InfeasibleBudgetError&) {
      break;  // the ray left the attack's domain; the curve ends here
    }
    const auto decision = certify(bounds, specs, budget, mode);
    curve.points.push_back({budget.r, decision.certified});
    if (decision.certified)
      curve.largest_certified = std::max(curve.largest_certified, r1);
  }
  return curve;
}

}  // namespace multicert
