#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "multicert/classification.hpp"
#include "multicert/parallel.hpp"

namespace multicert {

// Votes for one element of the segmented modality.
struct ElementVotes {
  long index = 0;
  VoteCounts votes;
  std::optional<int> ground_truth;
};

struct ElementCertification {
  long index = 0;
  int predicted = 0;
  double alpha_star = 1.0;  // smallest per-element budget that certifies
  bool stable = false;      // granted by the family-level selection
};

// Smallest alpha in (0,1) whose bound pair certifies, assuming the
// predicate is monotone in alpha. 50 bisection halvings; the returned
// point has itself been accepted by the predicate, and 1.0 means nothing
// below 1 - 1e-12 certifies.
template <typename Pred>
double smallest_certifying_alpha(Pred&& certifies_at) {
  constexpr double kTop = 1.0 - 1e-12;
  if (!certifies_at(kTop)) return 1.0;
  double lo = 0.0;
  double hi = kTop;
  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (certifies_at(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// Per-element smallest certifying alpha for a fixed attack geometry. The
// fast variant is conservative, so its alpha_star can only be larger.
inline double alpha_star(const VoteCounts& votes, const CertTerms& terms,
                         EvalMode mode = EvalMode::kExact,
                         const LogCertTerms* logs = nullptr) {
  votes.validate();
  return smallest_certifying_alpha([&](double alpha) {
    const ProbBoundPair b = clopper_pearson(votes, alpha);
    if (mode == EvalMode::kFast && logs != nullptr)
      return fast_condition(*logs, b.p_a_lower, b.p_b_upper);
    return certified_exact(terms, exact_ratio(b.p_a_lower),
                           exact_ratio(b.p_b_upper));
  });
}

inline double alpha_star(const ElementVotes& element,
                         std::span<const ModalitySpec> specs,
                         const AttackBudget& budget,
                         EvalMode mode = EvalMode::kExact) {
  const auto terms = cert_terms(specs, budget);
  if (mode == EvalMode::kFast) {
    const LogCertTerms logs = log_cert_terms(specs, budget.r);
    return alpha_star(element.votes, *terms, mode, &logs);
  }
  return alpha_star(element.votes, *terms, mode);
}

struct HolmResult {
  std::vector<std::uint8_t> stable;  // certification mask, input order
  long first_violation = -1;         // 1-based rank of the first violator
  double cutoff = 1.0;               // level at that rank
};

// Step-down selection at family level alpha: sort the per-element levels
// ascending, find the first rank j with level > alpha / (n + 1 - j), and
// certify exactly the elements strictly below that rank's level. With no
// violating rank every element is certified.
inline HolmResult holm_select(std::span<const double> alpha_stars,
                              double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha must lie in (0,1)");
  const std::size_t n = alpha_stars.size();
  HolmResult out;
  out.stable.assign(n, 1);
  if (n == 0) return out;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return alpha_stars[a] < alpha_stars[b];
                   });
  long rank = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (alpha_stars[order[j]] > alpha / static_cast<double>(n - j)) {
      rank = static_cast<long>(j) + 1;
      break;
    }
  }
  if (rank == 0) return out;
  out.first_violation = rank;
  out.cutoff = alpha_stars[order[static_cast<std::size_t>(rank) - 1]];
  for (std::size_t i = 0; i < n; ++i)
    out.stable[i] = alpha_stars[i] < out.cutoff ? 1 : 0;
  return out;
}

// Certify every element of one segmented sample: per-element smallest
// alphas, then the family-level selection. alpha_star depends only on the
// vote signature for a fixed geometry, so it is memoized across elements.
inline std::vector<ElementCertification> certify_elements(
    std::span<const ElementVotes> elements,
    std::span<const ModalitySpec> specs, const AttackBudget& budget,
    double alpha, EvalMode mode = EvalMode::kExact, int jobs = 1) {
  const auto terms = cert_terms(specs, budget);
  const LogCertTerms logs = log_cert_terms(specs, budget.r);
  std::vector<double> stars(elements.size(), 1.0);
  std::vector<int> predicted(elements.size(), 0);
  std::mutex memo_mu;
  std::map<std::vector<long>, double> memo;
  parallel_for(elements.size(), jobs, [&](std::size_t i) {
    const ElementVotes& element = elements[i];
    element.votes.validate();
    predicted[i] = element.votes.top_two().label_a;
    std::vector<long> key;
    key.reserve(element.votes.counts.size() * 2 + 2);
    key.push_back(element.votes.total);
    key.push_back(element.votes.num_classes);
    for (const auto& [label, c] : element.votes.counts)
      if (c > 0) {
        key.push_back(label);
        key.push_back(c);
      }
    {
      std::lock_guard lock(memo_mu);
      const auto it = memo.find(key);
      if (it != memo.end()) {
        stars[i] = it->second;
        return;
      }
    }
    const double star = alpha_star(element.votes, *terms, mode, &logs);
    stars[i] = star;
    std::lock_guard lock(memo_mu);
    memo.emplace(std::move(key), star);
  });
  const HolmResult holm = holm_select(stars, alpha);
  std::vector<ElementCertification> out(elements.size());
  for (std::size_t i = 0; i < elements.size(); ++i)
    out[i] = {elements[i].index, predicted[i], stars[i],
              holm.stable[i] != 0};
  return out;
}

struct SegmentationTally {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

// Binary tally against ground truth with label 1 positive. Predictions
// count toward TP/TN only when certified stable and correct; every other
// positive prediction is an FP, every other negative an FN.
inline SegmentationTally tally_elements(
    std::span<const ElementCertification> certs, std::span<const int> gt) {
  if (certs.size() != gt.size())
    throw DataError("tally: certification/ground-truth arity mismatch");
  SegmentationTally t;
  for (std::size_t i = 0; i < certs.size(); ++i) {
    if (gt[i] != 0 && gt[i] != 1)
      throw DataError("certified metrics need binary ground truth");
    const bool good = certs[i].stable && certs[i].predicted == gt[i];
    if (certs[i].predicted == 1) {
      if (good) ++t.tp; else ++t.fp;
    } else {
      if (good) ++t.tn; else ++t.fn;
    }
  }
  return t;
}

struct CertifiedMetrics {
  double pixel_accuracy = 0.0;
  double f_score = 0.0;
  double iou = 0.0;
};

namespace detail {
inline double safe_div(double num, double den) {
  return den > 0.0 ? num / den : 0.0;
}
}  // namespace detail

// Worst-case metric floors under an attack of r_o elements on the
// segmented modality. Addition dilutes the denominators with the injected
// elements; deletion removes up to r_o certified-correct ones; vanishing
// denominators pin the metric at 0.
inline CertifiedMetrics certified_metrics(const SegmentationTally& t,
                                          AttackType attack, long r_o) {
  if (r_o < 0) throw ConfigError("negative attack budget");
  const double tp = static_cast<double>(t.tp);
  const double tn = static_cast<double>(t.tn);
  const double fp = static_cast<double>(t.fp);
  const double fn = static_cast<double>(t.fn);
  const double r = static_cast<double>(r_o);
  CertifiedMetrics m;
  switch (attack) {
    case AttackType::kModification:
      m.pixel_accuracy = detail::safe_div(tp + tn, tp + tn + fp + fn);
      m.f_score = detail::safe_div(2 * tp * tp, 2 * tp * tp + tp * (fp + fn));
      m.iou = detail::safe_div(tp, tp + fp + fn);
      return m;
    case AttackType::kAddition:
      m.pixel_accuracy = detail::safe_div(tp + tn, tp + tn + fp + fn + r);
      m.f_score =
          detail::safe_div(2 * tp * tp, 2 * tp * tp + tp * (fp + fn + r));
      m.iou = detail::safe_div(tp, tp + fp + fn + r);
      return m;
    case AttackType::kDeletion: {
      const double tp_cut = std::max(tp - r, 0.0);
      m.pixel_accuracy =
          detail::safe_div(std::max(tp + tn - r, 0.0), tp + tn + fp + fn - r);
      m.f_score = detail::safe_div(2 * tp_cut * tp_cut,
                                   2 * tp_cut * tp_cut + tp_cut * (fp + fn));
      m.iou = detail::safe_div(tp_cut, tp + fp + fn - r);
      return m;
    }
  }
  throw ConfigError("unknown attack type");
}

}  // namespace multicert
