#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "multicert/classification.hpp"
#include "multicert/sampling.hpp"

// Brute-force reference implementation used to validate the closed-form
// engine on small instances. Everything here counts explicitly; the only
// shared code with the engine is the token plumbing.

namespace multicert {
namespace oracle {

// Tokens carry (identity, value): position in the high bits, value in the
// low byte. Insertions set a flag so fresh identities can never collide
// with originals; changing a value yields a token the clean input lacks.
constexpr std::uint32_t kAddedFlag = 1u << 31;
constexpr std::uint32_t kSeparator = 0xFFFFFFFFu;

inline std::uint32_t original_token(long pos, int value) {
  return static_cast<std::uint32_t>(pos << 8) | static_cast<std::uint32_t>(value);
}
inline std::uint32_t added_token(long slot, int value) {
  return kAddedFlag | static_cast<std::uint32_t>(slot << 8) |
         static_cast<std::uint32_t>(value);
}

// A concrete instance: modality geometry plus the clean input's tokens.
// Original values follow the fixed pattern pos % alphabet.
struct OracleInstance {
  std::vector<ModalitySpec> specs;
  std::vector<long> budget;
  int alphabet = 2;
  int num_classes = 2;
  MultiModalInput original;
};

inline OracleInstance make_oracle_instance(std::span<const ModalitySpec> specs,
                                           std::span<const long> budget,
                                           int alphabet, int num_classes) {
  if (alphabet < 2 || alphabet > 255)
    throw ConfigError("oracle alphabet must lie in [2,255]");
  if (num_classes < 2) throw ConfigError("oracle needs at least two classes");
  if (specs.size() != budget.size())
    throw ConfigError("budget arity does not match modalities");
  OracleInstance inst;
  inst.specs.assign(specs.begin(), specs.end());
  inst.budget.assign(budget.begin(), budget.end());
  inst.alphabet = alphabet;
  inst.num_classes = num_classes;
  inst.original.modalities.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    auto& tokens = inst.original.modalities[i];
    tokens.reserve(specs[i].n);
    for (long j = 0; j < specs[i].n; ++j)
      tokens.push_back(original_token(j, static_cast<int>(j % alphabet)));
  }
  return inst;
}

// Which positions of each modality the adversary touches.
using Placement = std::vector<std::vector<long>>;

inline Placement default_placement(std::span<const long> budget) {
  Placement p(budget.size());
  for (std::size_t i = 0; i < budget.size(); ++i) {
    for (long j = 0; j < budget[i]; ++j) p[i].push_back(j);
  }
  return p;
}

// Post-attack tokens of one modality for the worst case at this placement:
// modified positions take the next alphabet value (always a fresh token),
// additions append fresh identities, deletions drop the placed positions.
inline std::vector<std::uint32_t> attacked_tokens(const OracleInstance& inst,
                                                  std::size_t i,
                                                  const Placement& placement) {
  const auto& spec = inst.specs[i];
  const auto& spots = placement[i];
  for (const long pos : spots)
    if (pos < 0 || pos >= spec.n)
      throw ConfigError("attack placement outside the modality");
  std::vector<std::uint32_t> out;
  switch (spec.attack) {
    case AttackType::kModification: {
      out = inst.original.modalities[i];
      for (const long pos : spots)
        out[pos] = original_token(
            pos, static_cast<int>((pos + 1) % inst.alphabet));
      break;
    }
    case AttackType::kAddition: {
      out = inst.original.modalities[i];
      for (std::size_t s = 0; s < spots.size(); ++s)
        out.push_back(added_token(static_cast<long>(s),
                                  static_cast<int>(s % inst.alphabet)));
      break;
    }
    case AttackType::kDeletion: {
      std::vector<char> gone(spec.n, 0);
      for (const long pos : spots) gone[pos] = 1;
      for (long j = 0; j < spec.n; ++j)
        if (!gone[j]) out.push_back(inst.original.modalities[i][j]);
      break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Visit every k-subset of items in lexicographic index order.
template <typename Fn>
void for_each_subset(const std::vector<std::uint32_t>& items, long k,
                     Fn&& visit) {
  const long n = static_cast<long>(items.size());
  if (k < 0 || k > n) return;
  std::vector<long> idx(k);
  std::iota(idx.begin(), idx.end(), 0L);
  std::vector<std::uint32_t> subset(k);
  for (;;) {
    for (long j = 0; j < k; ++j) subset[j] = items[idx[j]];
    visit(subset);
    long j = k - 1;
    while (j >= 0 && idx[j] == n - k + j) --j;
    if (j < 0) return;
    ++idx[j];
    for (long t = j + 1; t < k; ++t) idx[t] = idx[t - 1] + 1;
  }
}

// One joint subsample across modalities, flattened with separators so it
// can live in hash sets.
using TupleKey = std::vector<std::uint32_t>;

struct TupleKeyHash {
  std::size_t operator()(const TupleKey& key) const {
    std::uint64_t h = 0xcbf29ce484222325UL;
    for (const auto v : key) {
      h ^= v;
      h *= 0x100000001b3UL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Visit the full cross product of per-modality k_i-subsets, in canonical
// order (first modality outermost). parts[i] receives modality i's subset.
template <typename Fn>
void for_each_tuple(const std::vector<std::vector<std::uint32_t>>& pools,
                    std::span<const long> ks, Fn&& visit) {
  std::vector<std::vector<std::vector<std::uint32_t>>> subsets(pools.size());
  for (std::size_t i = 0; i < pools.size(); ++i)
    for_each_subset(pools[i], ks[i],
                    [&](const std::vector<std::uint32_t>& s) {
                      subsets[i].push_back(s);
                    });
  std::vector<std::size_t> at(pools.size(), 0);
  for (const auto& list : subsets)
    if (list.empty()) return;
  std::vector<const std::vector<std::uint32_t>*> parts(pools.size());
  for (;;) {
    for (std::size_t i = 0; i < pools.size(); ++i) parts[i] = &subsets[i][at[i]];
    visit(parts);
    std::size_t i = pools.size();
    for (;;) {
      if (i == 0) return;
      --i;
      if (++at[i] < subsets[i].size()) break;
      at[i] = 0;
    }
  }
}

inline TupleKey tuple_key(
    const std::vector<const std::vector<std::uint32_t>*>& parts) {
  TupleKey key;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) key.push_back(kSeparator);
    key.insert(key.end(), parts[i]->begin(), parts[i]->end());
  }
  return key;
}

// The three-way split of joint subsamples behind the certification bound:
// shared tuples draw every element from the attack-surviving overlap and
// exist on both sides; the rest of the clean side touches an attacked
// element, the rest of the attacked side a changed or added one.
struct SubsetPartition {
  std::vector<TupleKey> clean_only;    // clean side, outside the overlap
  std::vector<TupleKey> shared;        // drawn entirely from the overlap
  std::vector<TupleKey> attacked_only; // attacked side, outside the overlap
  long x_total = 0;                    // D: clean tuples
  long y_total = 0;                    // D': attacked tuples
};

inline SubsetPartition build_partition(const OracleInstance& inst,
                                       const Placement& placement,
                                       long max_tuples = 1000000) {
  if (placement.size() != inst.specs.size())
    throw ConfigError("placement arity does not match modalities");
  std::vector<long> ks(inst.specs.size());
  std::vector<std::vector<std::uint32_t>> clean(inst.specs.size());
  std::vector<std::vector<std::uint32_t>> attacked(inst.specs.size());
  std::vector<std::unordered_set<std::uint32_t>> overlap(inst.specs.size());
  BigNat bound(1);
  for (std::size_t i = 0; i < inst.specs.size(); ++i) {
    if (static_cast<long>(placement[i].size()) != inst.budget[i])
      throw ConfigError("placement size disagrees with budget");
    ks[i] = inst.specs[i].k;
    clean[i] = inst.original.modalities[i];
    std::sort(clean[i].begin(), clean[i].end());
    attacked[i] = attacked_tokens(inst, i, placement);
    std::vector<std::uint32_t> inter;
    std::set_intersection(clean[i].begin(), clean[i].end(),
                          attacked[i].begin(), attacked[i].end(),
                          std::back_inserter(inter));
    overlap[i].insert(inter.begin(), inter.end());
    bound *= binom(static_cast<long>(clean[i].size()), ks[i]) +
             binom(static_cast<long>(attacked[i].size()), ks[i]);
  }
  if (bound > max_tuples)
    throw ConfigError("oracle instance too large to enumerate");

  SubsetPartition part;
  auto inside = [&](const std::vector<const std::vector<std::uint32_t>*>& parts) {
    for (std::size_t i = 0; i < parts.size(); ++i)
      for (const auto tok : *parts[i])
        if (!overlap[i].count(tok)) return false;
    return true;
  };
  for_each_tuple(clean, ks, [&](const auto& parts) {
    ++part.x_total;
    if (inside(parts)) {
      part.shared.push_back(tuple_key(parts));
    } else {
      part.clean_only.push_back(tuple_key(parts));
    }
  });
  for_each_tuple(attacked, ks, [&](const auto& parts) {
    ++part.y_total;
    if (!inside(parts)) part.attacked_only.push_back(tuple_key(parts));
  });
  return part;
}

// Counted overlap fractions; the independent route to E/D and E/D'.
struct OverlapProbs {
  long x_total = 0;
  long y_total = 0;
  long shared_count = 0;
  Ratio x_in_shared;  // |shared| / D
  Ratio y_in_shared;  // |shared| / D', 0 when the attacked side is empty
};

inline OverlapProbs enumerate_probs(const OracleInstance& inst,
                                    const Placement& placement) {
  const auto part = build_partition(inst, placement);
  OverlapProbs out;
  out.x_total = part.x_total;
  out.y_total = part.y_total;
  out.shared_count = static_cast<long>(part.shared.size());
  out.x_in_shared = make_ratio(out.shared_count, part.x_total);
  out.y_in_shared = part.y_total == 0
                        ? Ratio(0)
                        : make_ratio(out.shared_count, part.y_total);
  return out;
}

enum class WorstCaseSide { kLower, kUpper };

// The worst admissible selection region together with its attacked-side
// mass, so tests can realize the bound as an actual classifier.
struct WorstCaseSelection {
  Ratio prob;
  std::vector<TupleKey> chosen;
};

// Worst attacked-side selection probability over classifiers whose
// clean-side selection mass is `clean_mass` snapped to the 1/D grid toward
// the adversary's favor. The lower side spends clean mass on clean-only
// tuples first; the upper side spends it on shared tuples and picks up
// every attacked-only tuple for free.
inline WorstCaseSelection worst_case_selection(const Ratio& clean_mass,
                                               const OracleInstance& inst,
                                               const Placement& placement,
                                               WorstCaseSide side) {
  if (clean_mass < 0 || clean_mass > 1)
    throw ConfigError("selection mass must lie in [0,1]");
  const auto part = build_partition(inst, placement);
  if (part.y_total == 0)
    throw NumericError("attacked subsample space is empty");
  const BigNat d(part.x_total);
  const BigNat t_big = side == WorstCaseSide::kLower
                           ? floor_scaled(clean_mass, d)
                           : ceil_scaled(clean_mass, d);
  long t = static_cast<long>(mpz_get_si(t_big.get_mpz_t()));

  std::unordered_set<TupleKey, TupleKeyHash> support_y;
  for (const auto& key : part.shared) support_y.insert(key);
  for (const auto& key : part.attacked_only) support_y.insert(key);

  WorstCaseSelection out;
  auto take = [&](const std::vector<TupleKey>& pool) {
    for (const auto& key : pool) {
      if (t == 0) return;
      out.chosen.push_back(key);
      --t;
    }
  };
  if (side == WorstCaseSide::kLower) {
    take(part.clean_only);
    take(part.shared);
  } else {
    take(part.shared);
    take(part.clean_only);
    for (const auto& key : part.attacked_only) out.chosen.push_back(key);
  }
  long hits = 0;
  for (const auto& key : out.chosen)
    if (support_y.count(key)) ++hits;
  out.prob = make_ratio(hits, part.y_total);
  return out;
}

inline Ratio worst_case_adversarial_prob(const Ratio& clean_mass,
                                         const OracleInstance& inst,
                                         const Placement& placement,
                                         WorstCaseSide side) {
  return worst_case_selection(clean_mass, inst, placement, side).prob;
}

inline TupleKey tuple_key_of(const SubsampledInput& sub) {
  TupleKey key;
  for (std::size_t i = 0; i < sub.selected.size(); ++i) {
    if (i > 0) key.push_back(kSeparator);
    key.insert(key.end(), sub.selected[i].begin(), sub.selected[i].end());
  }
  return key;
}

// ---------------------------------------------------------------------------
// Classifiers over token inputs.

class FunctionClassifier : public BaseClassifier {
 public:
  explicit FunctionClassifier(std::function<int(const SubsampledInput&)> fn)
      : fn_(std::move(fn)) {}
  int classify(const SubsampledInput& sub) const override { return fn_(sub); }

 private:
  std::function<int(const SubsampledInput&)> fn_;
};

// Deterministic pseudo-random lookup table: every distinct subsampled input
// gets an arbitrary but fixed label.
class HashLookupClassifier : public BaseClassifier {
 public:
  HashLookupClassifier(std::uint64_t seed, int num_classes)
      : seed_(seed), num_classes_(num_classes) {}

  int classify(const SubsampledInput& sub) const override {
    std::uint64_t h = seed_ ^ 0xcbf29ce484222325UL;
    for (std::size_t i = 0; i < sub.selected.size(); ++i) {
      h ^= 0xABCD0000UL + i;
      h *= 0x100000001b3UL;
      for (const auto tok : sub.selected[i]) {
        h ^= tok;
        h *= 0x100000001b3UL;
      }
    }
    return static_cast<int>(detail::mix64(h) %
                            static_cast<std::uint64_t>(num_classes_));
  }

 private:
  std::uint64_t seed_;
  int num_classes_;
};

// Exact per-label subsample counts for a token input; argmax breaks ties
// toward the smaller label.
struct LabelDistribution {
  std::vector<long> counts;
  long total = 0;
  int top = 0;
};

inline LabelDistribution label_distribution(
    const std::vector<std::vector<std::uint32_t>>& pools,
    std::span<const long> ks, const BaseClassifier& classifier,
    int num_classes) {
  LabelDistribution out;
  out.counts.assign(num_classes, 0);
  SubsampledInput sub;
  sub.selected.resize(pools.size());
  for_each_tuple(pools, ks, [&](const auto& parts) {
    for (std::size_t i = 0; i < parts.size(); ++i) sub.selected[i] = *parts[i];
    const int label = classifier.classify(sub);
    if (label < 0 || label >= num_classes)
      throw DataError("classifier produced label outside [0,C)");
    ++out.counts[label];
    ++out.total;
  });
  for (int c = 1; c < num_classes; ++c)
    if (out.counts[c] > out.counts[out.top]) out.top = c;
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive robustness check.

struct ExhaustiveResult {
  bool stable = true;
  int clean_label = 0;
  long variants = 0;  // attacked inputs enumerated (clean input included)
  // First attacked input that changes the prediction, when any does.
  std::optional<std::vector<std::vector<std::uint32_t>>> witness;
};

namespace detail_oracle {

// All admissible post-attack versions of one modality, spending at most r.
inline std::vector<std::vector<std::uint32_t>> modality_variants(
    const OracleInstance& inst, std::size_t i) {
  const auto& spec = inst.specs[i];
  const long r = inst.budget[i];
  const auto& base = inst.original.modalities[i];
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<long> positions(spec.n);
  std::iota(positions.begin(), positions.end(), 0L);

  auto value_tuples = [&](long slots, auto&& emit) {
    std::vector<int> vals(slots, 0);
    std::function<void(long)> walk = [&](long at) {
      if (at == slots) {
        emit(vals);
        return;
      }
      for (int v = 0; v < inst.alphabet; ++v) {
        vals[at] = v;
        walk(at + 1);
      }
    };
    walk(0);
  };

  for (long spend = 0; spend <= r; ++spend) {
    switch (spec.attack) {
      case AttackType::kModification: {
        std::vector<long> idx(spend);
        std::iota(idx.begin(), idx.end(), 0L);
        auto emit_for_subset = [&](const std::vector<long>& subset) {
          // Writing the original value back is a no-op change; it stays in
          // the enumeration because "at most r" includes wasted budget.
          value_tuples(spend, [&](const std::vector<int>& vals) {
            auto tokens = base;
            for (long s = 0; s < spend; ++s)
              tokens[subset[s]] = original_token(subset[s], vals[s]);
            std::sort(tokens.begin(), tokens.end());
            out.push_back(std::move(tokens));
          });
        };
        if (spend == 0) {
          emit_for_subset({});
        } else {
          for (;;) {
            emit_for_subset(idx);
            long j = spend - 1;
            while (j >= 0 && idx[j] == spec.n - spend + j) --j;
            if (j < 0) break;
            ++idx[j];
            for (long t = j + 1; t < spend; ++t) idx[t] = idx[t - 1] + 1;
          }
        }
        break;
      }
      case AttackType::kAddition: {
        value_tuples(spend, [&](const std::vector<int>& vals) {
          auto tokens = base;
          for (long s = 0; s < spend; ++s)
            tokens.push_back(added_token(s, vals[s]));
          std::sort(tokens.begin(), tokens.end());
          out.push_back(std::move(tokens));
        });
        break;
      }
      case AttackType::kDeletion: {
        if (spend == 0) {
          auto tokens = base;
          std::sort(tokens.begin(), tokens.end());
          out.push_back(std::move(tokens));
          break;
        }
        std::vector<long> idx(spend);
        std::iota(idx.begin(), idx.end(), 0L);
        for (;;) {
          std::vector<char> gone(spec.n, 0);
          for (const long p : idx) gone[p] = 1;
          std::vector<std::uint32_t> tokens;
          for (long j = 0; j < spec.n; ++j)
            if (!gone[j]) tokens.push_back(base[j]);
          std::sort(tokens.begin(), tokens.end());
          out.push_back(std::move(tokens));
          long j = spend - 1;
          while (j >= 0 && idx[j] == spec.n - spend + j) --j;
          if (j < 0) break;
          ++idx[j];
          for (long t = j + 1; t < spend; ++t) idx[t] = idx[t - 1] + 1;
        }
        break;
      }
    }
  }
  return out;
}

}  // namespace detail_oracle

// Enumerates every admissible attacked input and checks the clean label
// stays weakly on top of every attacked vote distribution; the non-strict
// certification condition promises no more than that, so only a rival
// strictly ahead counts as a flip. An attacked input whose subsample space
// is empty counts as unstable: the ensemble cannot answer at all.
inline ExhaustiveResult exhaustive_certify(const OracleInstance& inst,
                                           const BaseClassifier& classifier,
                                           long max_work = 2000000) {
  std::vector<long> ks(inst.specs.size());
  for (std::size_t i = 0; i < inst.specs.size(); ++i) ks[i] = inst.specs[i].k;

  std::vector<std::vector<std::uint32_t>> clean(inst.specs.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    clean[i] = inst.original.modalities[i];
    std::sort(clean[i].begin(), clean[i].end());
  }
  ExhaustiveResult out;
  out.clean_label =
      label_distribution(clean, ks, classifier, inst.num_classes).top;

  std::vector<std::vector<std::vector<std::uint32_t>>> variants;
  variants.reserve(inst.specs.size());
  long combos = 1;
  for (std::size_t i = 0; i < inst.specs.size(); ++i) {
    variants.push_back(detail_oracle::modality_variants(inst, i));
    combos *= static_cast<long>(variants.back().size());
    if (combos > max_work)
      throw ConfigError("attack space too large to enumerate");
  }

  std::vector<std::size_t> at(inst.specs.size(), 0);
  std::vector<std::vector<std::uint32_t>> attacked(inst.specs.size());
  long work = 0;
  for (;;) {
    for (std::size_t i = 0; i < attacked.size(); ++i)
      attacked[i] = variants[i][at[i]];
    ++out.variants;
    bool feasible = true;
    long tuples = 1;
    for (std::size_t i = 0; i < attacked.size(); ++i) {
      if (static_cast<long>(attacked[i].size()) < ks[i]) feasible = false;
      tuples *= static_cast<long>(
          binom(static_cast<long>(attacked[i].size()), ks[i]).get_ui());
    }
    work += std::max(tuples, 1L);
    if (work > max_work)
      throw ConfigError("attack space too large to enumerate");
    bool holds = false;
    if (feasible) {
      const auto dist =
          label_distribution(attacked, ks, classifier, inst.num_classes);
      holds = true;
      for (int c = 0; c < inst.num_classes; ++c)
        if (dist.counts[c] > dist.counts[out.clean_label]) holds = false;
    }
    if (!holds) {
      out.stable = false;
      if (!out.witness) out.witness = attacked;
    }
    std::size_t i = at.size();
    for (;;) {
      if (i == 0) return out;
      --i;
      if (++at[i] < variants[i].size()) break;
      at[i] = 0;
    }
  }
}

}  // namespace oracle
}  // namespace multicert
