#pragma once

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "multicert/classification.hpp"
#include "multicert/sampling.hpp"
#include "multicert/segmentation.hpp"

namespace multicert {

// Geometry of the single-pool ablation baseline: all modalities are merged
// into one pool of `total` elements from which k are kept jointly.
struct CombinedSpec {
  long total = 0;
  long k = 0;
  std::vector<long> modality_sizes;

  void validate() const {
    if (total < 1 || k < 1 || k > total)
      throw ConfigError("combined pool needs 1 <= k <= total");
    if (!modality_sizes.empty()) {
      long sum = 0;
      for (const long s : modality_sizes) {
        if (s < 1) throw ConfigError("combined pool: modality size < 1");
        sum += s;
      }
      if (sum != total)
        throw ConfigError("combined pool: modality sizes must sum to total");
    }
  }
};

inline CombinedSpec combined_from(std::span<const ModalitySpec> specs,
                                  long k) {
  CombinedSpec c;
  c.k = k;
  for (const auto& s : specs) {
    s.validate();
    c.modality_sizes.push_back(s.n);
    c.total += s.n;
  }
  c.validate();
  return c;
}

// The ablation baseline certifies against modification only; addition and
// deletion have no counterpart in its analysis.
inline void require_modification_only(std::span<const ModalitySpec> specs) {
  for (const auto& s : specs)
    if (s.attack != AttackType::kModification)
      throw ConfigError(
          "ablation baseline supports modification attacks only; modality '" +
          s.name + "' requests " + to_string(s.attack));
}

// Joint draw of k elements from the combined pool, split back per modality.
inline SubsampledInput ablation_subsample(const MultiModalInput& input,
                                          const CombinedSpec& spec,
                                          StreamRng& rng) {
  spec.validate();
  if (input.modalities.size() != spec.modality_sizes.size())
    throw DataError("input modality count disagrees with combined spec");
  for (std::size_t i = 0; i < input.modalities.size(); ++i)
    if (static_cast<long>(input.modalities[i].size()) != spec.modality_sizes[i])
      throw DataError("modality size disagrees with combined spec");
  const auto picked = sample_without_replacement(spec.total, spec.k, rng);
  SubsampledInput sub;
  sub.selected.resize(input.modalities.size());
  std::size_t m = 0;
  long offset = 0;
  for (const auto pos : picked) {
    while (static_cast<long>(pos) >= offset + spec.modality_sizes[m]) {
      offset += spec.modality_sizes[m];
      ++m;
    }
    sub.selected[m].push_back(
        input.modalities[m][static_cast<long>(pos) - offset]);
  }
  for (auto& v : sub.selected) std::sort(v.begin(), v.end());
  return sub;
}

inline VoteCounts ablation_monte_carlo_votes(const MultiModalInput& input,
                                             const BaseClassifier& classifier,
                                             const CombinedSpec& spec,
                                             int num_classes, long num_draws,
                                             std::uint64_t seed,
                                             std::uint64_t sample_id) {
  if (num_draws < 1) throw ConfigError("need at least one Monte Carlo draw");
  VoteCounts votes;
  votes.total = num_draws;
  votes.num_classes = num_classes;
  for (long d = 0; d < num_draws; ++d) {
    StreamRng rng(seed, sample_id, static_cast<std::uint64_t>(d));
    const int label = classifier.classify(ablation_subsample(input, spec, rng));
    if (label < 0 || label >= num_classes)
      throw DataError("classifier produced label outside [0,C)");
    ++votes.counts[label];
  }
  return votes;
}

// Baseline condition: with sum_r elements of the pool modified, a joint
// subsample survives untouched with probability C(total-sum_r,k)/C(total,k)
// =: keep, and certification holds when pa - 1 + keep >= pb + 1 - keep.
inline CertificateDecision ablation_certify(const Ratio& pa, const Ratio& pb,
                                            const CombinedSpec& spec,
                                            long sum_r) {
  spec.validate();
  if (pa < 0 || pa > 1 || pb < 0 || pb > 1)
    throw ConfigError("probability bounds must lie in [0,1]");
  if (sum_r < 0) throw ConfigError("negative attack budget");
  if (sum_r > spec.total)
    throw InfeasibleBudgetError("cannot modify " + std::to_string(sum_r) +
                                " of " + std::to_string(spec.total) +
                                " pooled elements");
  CertificateDecision out;
  out.mode = EvalMode::kExact;
  out.has_sides = true;
  const Ratio keep = make_ratio(binom(spec.total - sum_r, spec.k),
                                binom(spec.total, spec.k));
  out.lhs = pa - 1 + keep;
  out.rhs = pb + 1 - keep;
  out.certified = out.lhs >= out.rhs;
  return out;
}

inline CertificateDecision ablation_certify(const ProbBoundPair& bounds,
                                            const CombinedSpec& spec,
                                            long sum_r) {
  return ablation_certify(exact_ratio(bounds.p_a_lower),
                          exact_ratio(bounds.p_b_upper), spec, sum_r);
}

inline double ablation_alpha_star(const VoteCounts& votes,
                                  const CombinedSpec& spec, long sum_r) {
  votes.validate();
  spec.validate();
  if (sum_r < 0 || sum_r > spec.total)
    throw InfeasibleBudgetError("pool budget out of range");
  const Ratio keep = make_ratio(binom(spec.total - sum_r, spec.k),
                                binom(spec.total, spec.k));
  // pa - 1 + keep >= pb + 1 - keep, rearranged around the fixed keep term.
  const Ratio threshold = 2 - keep - keep;
  return smallest_certifying_alpha([&](double alpha) {
    const ProbBoundPair b = clopper_pearson(votes, alpha);
    return exact_ratio(b.p_a_lower) - exact_ratio(b.p_b_upper) >= threshold;
  });
}

// Baseline analogue of the radius curve: the decision depends on the
// budget only through its sum over modalities.
inline RadiusCurve ablation_radius_curve(const ProbBoundPair& bounds,
                                         const CombinedSpec& spec,
                                         const RayDirection& direction,
                                         std::size_t arity, long r_max) {
  RadiusCurve curve;
  for (long r1 = 0; r1 <= r_max; ++r1) {
    const auto budget = ray_budget(direction, arity, r1);
    const long sum =
        std::accumulate(budget.begin(), budget.end(), 0L);
    if (sum > spec.total) break;
    const auto decision = ablation_certify(bounds, spec, sum);
    curve.points.push_back({budget, decision.certified});
    if (decision.certified)
      curve.largest_certified = std::max(curve.largest_certified, r1);
  }
  return curve;
}

// Per-element certification with the baseline condition, mirroring
// certify_elements: memoized alpha_star per vote signature, then the same
// family-level selection.
inline std::vector<ElementCertification> ablation_certify_elements(
    std::span<const ElementVotes> elements, const CombinedSpec& spec,
    long sum_r, double alpha, int jobs = 1) {
  std::vector<double> stars(elements.size(), 1.0);
  std::vector<int> predicted(elements.size(), 0);
  std::mutex memo_mu;
  std::map<std::vector<long>, double> memo;
  parallel_for(elements.size(), jobs, [&](std::size_t i) {
    const ElementVotes& element = elements[i];
    element.votes.validate();
    predicted[i] = element.votes.top_two().label_a;
    std::vector<long> key;
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
    const double star = ablation_alpha_star(element.votes, spec, sum_r);
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

}  // namespace multicert
