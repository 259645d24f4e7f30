#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "multicert/combinatorics.hpp"
#include "multicert/confidence.hpp"
#include "multicert/rng.hpp"

namespace multicert {

// A test input: per modality, the element identities (opaque tokens).
struct MultiModalInput {
  std::vector<std::vector<std::uint32_t>> modalities;
};

// One joint subsample. Per-modality selections are kept sorted so equal
// element sets always present identically to a classifier.
struct SubsampledInput {
  std::vector<std::vector<std::uint32_t>> selected;
};

class BaseClassifier {
 public:
  virtual ~BaseClassifier() = default;
  virtual int classify(const SubsampledInput& sub) const = 0;
};

// k of n positions uniformly without replacement: a partial Fisher-Yates
// walk over a sparse displacement map, O(k) time and memory. Result sorted.
inline std::vector<std::uint32_t> sample_without_replacement(long n, long k,
                                                             StreamRng& rng) {
  if (n < 0 || k < 0 || k > n)
    throw ConfigError("sample_without_replacement: need 0 <= k <= n");
  std::unordered_map<long, long> displaced;
  displaced.reserve(static_cast<std::size_t>(k) * 2);
  auto fetch = [&](long pos) {
    const auto it = displaced.find(pos);
    return it == displaced.end() ? pos : it->second;
  };
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(k));
  for (long j = 0; j < k; ++j) {
    const long t =
        j + static_cast<long>(rng.below(static_cast<std::uint64_t>(n - j)));
    out.push_back(static_cast<std::uint32_t>(fetch(t)));
    displaced[t] = fetch(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline SubsampledInput subsample(const MultiModalInput& input,
                                 std::span<const ModalitySpec> specs,
                                 StreamRng& rng) {
  if (input.modalities.size() != specs.size())
    throw DataError("input modality count disagrees with spec");
  SubsampledInput sub;
  sub.selected.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    if (static_cast<long>(input.modalities[i].size()) != specs[i].n)
      throw DataError("modality '" + specs[i].name +
                      "' size disagrees with spec");
    const auto idx = sample_without_replacement(specs[i].n, specs[i].k, rng);
    auto& dst = sub.selected[i];
    dst.reserve(idx.size());
    for (const auto j : idx) dst.push_back(input.modalities[i][j]);
    std::sort(dst.begin(), dst.end());
  }
  return sub;
}

// Monte Carlo votes for one sample. Draw d runs on its own stream keyed by
// (seed, sample, d), so totals cannot depend on evaluation order.
inline VoteCounts monte_carlo_votes(const MultiModalInput& input,
                                    const BaseClassifier& classifier,
                                    std::span<const ModalitySpec> specs,
                                    int num_classes, long num_draws,
                                    std::uint64_t seed,
                                    std::uint64_t sample_id) {
  if (num_draws < 1) throw ConfigError("need at least one Monte Carlo draw");
  if (num_classes < 1) throw ConfigError("need at least one class");
  VoteCounts votes;
  votes.total = num_draws;
  votes.num_classes = num_classes;
  for (long d = 0; d < num_draws; ++d) {
    StreamRng rng(seed, sample_id, static_cast<std::uint64_t>(d));
    const int label = classifier.classify(subsample(input, specs, rng));
    if (label < 0 || label >= num_classes)
      throw DataError("classifier produced label outside [0,C)");
    ++votes.counts[label];
  }
  return votes;
}

// ---------------------------------------------------------------------------
// Synthetic classification task.

struct SynthConfig {
  long num_samples = 1;
  int num_classes = 2;
  double separation = 0.5;  // extra feature mass on the true class
};

struct SynthSample {
  int label = 0;
  MultiModalInput input;                   // element ids 0..n-1
  std::vector<std::vector<int>> features;  // per modality, aligned with ids
};

// Every element carries a feature that equals the sample's class with
// probability separation + (1 - separation)/C and is uniform otherwise.
// separation 1 makes the plurality classifier constant; separation 0 makes
// features carry no class signal at all.
inline SynthSample synth_sample(const SynthConfig& cfg,
                                std::span<const ModalitySpec> specs,
                                std::uint64_t seed, std::uint64_t sample_id) {
  if (cfg.num_classes < 2) throw ConfigError("synthetic task needs C >= 2");
  if (!(cfg.separation >= 0.0 && cfg.separation <= 1.0))
    throw ConfigError("separation must lie in [0,1]");
  SynthSample s;
  s.label = static_cast<int>(sample_id % cfg.num_classes);
  s.input.modalities.resize(specs.size());
  s.features.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    StreamRng rng(seed, sample_id, 0xF00D0000UL + i);
    auto& ids = s.input.modalities[i];
    auto& feats = s.features[i];
    ids.resize(specs[i].n);
    feats.resize(specs[i].n);
    for (long j = 0; j < specs[i].n; ++j) {
      ids[j] = static_cast<std::uint32_t>(j);
      feats[j] = rng.bernoulli(cfg.separation)
                     ? s.label
                     : static_cast<int>(rng.below(cfg.num_classes));
    }
  }
  return s;
}

// Plurality over the features of all selected elements, ties toward the
// smaller label.
class PluralityClassifier : public BaseClassifier {
 public:
  PluralityClassifier(const SynthSample& sample, int num_classes)
      : sample_(&sample), num_classes_(num_classes) {}

  int classify(const SubsampledInput& sub) const override {
    std::vector<long> tally(num_classes_, 0);
    for (std::size_t i = 0; i < sub.selected.size(); ++i)
      for (const auto id : sub.selected[i]) ++tally[sample_->features[i][id]];
    int best = 0;
    for (int c = 1; c < num_classes_; ++c)
      if (tally[c] > tally[best]) best = c;
    return best;
  }

 private:
  const SynthSample* sample_;
  int num_classes_;
};

// ---------------------------------------------------------------------------
// Exact vote oracles for the synthetic tasks.

// Joint exact distribution of summed per-value selection counts when k_i
// elements are drawn uniformly from each modality. value_counts[i][v] holds
// how many modality-i elements carry value v. Masses sum to prod C(n_i,k_i).
inline std::map<std::vector<long>, BigNat> selection_count_distribution(
    const std::vector<std::vector<long>>& value_counts,
    std::span<const long> ks) {
  if (value_counts.size() != ks.size())
    throw ConfigError("selection distribution: arity mismatch");
  if (value_counts.empty()) throw ConfigError("need at least one modality");
  const std::size_t values = value_counts[0].size();
  if (values == 0) throw ConfigError("need at least one feature value");
  std::map<std::vector<long>, BigNat> dist;
  dist.emplace(std::vector<long>(values, 0), BigNat(1));
  for (std::size_t i = 0; i < value_counts.size(); ++i) {
    if (value_counts[i].size() != values)
      throw ConfigError("selection distribution: value arity mismatch");
    // Compositions h of k_i over the values with h_v <= count_v, each
    // weighted by its product of per-value binomials.
    std::vector<std::pair<std::vector<long>, BigNat>> comps;
    std::vector<long> h(values, 0);
    std::function<void(std::size_t, long, const BigNat&)> walk =
        [&](std::size_t v, long left, const BigNat& weight) {
          if (v + 1 == values) {
            if (left > value_counts[i][v]) return;
            h[v] = left;
            comps.emplace_back(h, BigNat(weight * binom(value_counts[i][v], left)));
            h[v] = 0;
            return;
          }
          const long cap = std::min(left, value_counts[i][v]);
          for (long take = 0; take <= cap; ++take) {
            h[v] = take;
            walk(v + 1, left - take,
                 BigNat(weight * binom(value_counts[i][v], take)));
          }
          h[v] = 0;
        };
    walk(0, ks[i], BigNat(1));
    std::map<std::vector<long>, BigNat> merged;
    for (const auto& [totals, mass] : dist)
      for (const auto& [comp, weight] : comps) {
        std::vector<long> key = totals;
        for (std::size_t v = 0; v < values; ++v) key[v] += comp[v];
        merged[key] += mass * weight;
        if (merged.size() > 200000)
          throw ConfigError("selection distribution too large to enumerate");
      }
    dist = std::move(merged);
  }
  return dist;
}

// Exact per-label vote probabilities of the plurality classifier under
// joint subsampling.
inline std::vector<Ratio> exact_label_probs(const SynthSample& sample,
                                            std::span<const ModalitySpec> specs,
                                            int num_classes) {
  if (sample.features.size() != specs.size())
    throw ConfigError("sample does not match specs");
  std::vector<std::vector<long>> value_counts(
      specs.size(), std::vector<long>(num_classes, 0));
  std::vector<long> ks(specs.size());
  BigNat total(1);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (const int f : sample.features[i]) ++value_counts[i][f];
    ks[i] = specs[i].k;
    total *= binom(specs[i].n, specs[i].k);
  }
  const auto dist = selection_count_distribution(value_counts, ks);
  std::vector<BigNat> mass(num_classes, BigNat(0));
  for (const auto& [totals, weight] : dist) {
    int best = 0;
    for (int c = 1; c < num_classes; ++c)
      if (totals[c] > totals[best]) best = c;
    mass[best] += weight;
  }
  std::vector<Ratio> probs;
  probs.reserve(num_classes);
  for (int c = 0; c < num_classes; ++c)
    probs.push_back(make_ratio(mass[c], total));
  return probs;
}

// ---------------------------------------------------------------------------
// Synthetic segmentation task.

struct SegSynthConfig {
  double base_accuracy = 0.9;  // chance an element's own bit matches truth
  double mark_rate = 0.3;      // chance an element carries the noise mark
};

struct SegSynthSample {
  MultiModalInput input;
  int segmented = 0;                   // modality whose elements get labels
  std::vector<int> gt;                 // truth per segmented element
  std::vector<std::uint8_t> base_bit;  // per segmented element
  std::vector<std::vector<std::uint8_t>> mark;  // per modality element
};

inline SegSynthSample seg_synth_sample(const SegSynthConfig& cfg,
                                       std::span<const ModalitySpec> specs,
                                       int segmented, std::uint64_t seed,
                                       std::uint64_t sample_id) {
  if (segmented < 0 || segmented >= static_cast<int>(specs.size()))
    throw ConfigError("segmented modality index out of range");
  SegSynthSample s;
  s.segmented = segmented;
  s.input.modalities.resize(specs.size());
  s.mark.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    StreamRng rng(seed, sample_id, 0x5E600000UL + i);
    auto& ids = s.input.modalities[i];
    auto& marks = s.mark[i];
    ids.resize(specs[i].n);
    marks.resize(specs[i].n);
    for (long j = 0; j < specs[i].n; ++j) {
      ids[j] = static_cast<std::uint32_t>(j);
      marks[j] = rng.bernoulli(cfg.mark_rate) ? 1 : 0;
    }
  }
  StreamRng rng(seed, sample_id, 0x6E600000UL);
  const long n_seg = specs[segmented].n;
  s.gt.resize(n_seg);
  s.base_bit.resize(n_seg);
  for (long j = 0; j < n_seg; ++j) {
    s.gt[j] = rng.bernoulli(0.5) ? 1 : 0;
    s.base_bit[j] = rng.bernoulli(cfg.base_accuracy)
                        ? static_cast<std::uint8_t>(s.gt[j])
                        : static_cast<std::uint8_t>(1 - s.gt[j]);
  }
  return s;
}

// Per-element binary labels: an element keeps its own bit unless the
// sampled noise marks reach a strict majority, which flips every label in
// the frame. The flip probability is exactly enumerable, which is what
// makes this task a useful oracle.
class MarkMajorityClassifier {
 public:
  explicit MarkMajorityClassifier(const SegSynthSample& sample)
      : sample_(&sample) {}

  std::vector<int> classify_elements(const SubsampledInput& sub) const {
    long ones = 0;
    long seen = 0;
    for (std::size_t i = 0; i < sub.selected.size(); ++i)
      for (const auto id : sub.selected[i]) {
        ones += sample_->mark[i][id];
        ++seen;
      }
    const int flip = 2 * ones > seen ? 1 : 0;
    std::vector<int> labels(sample_->base_bit.size());
    for (std::size_t j = 0; j < labels.size(); ++j)
      labels[j] = sample_->base_bit[j] ^ flip;
    return labels;
  }

 private:
  const SegSynthSample* sample_;
};

// Monte Carlo votes for every segmented element at once; one subsample
// feeds every element of the frame, mirroring how a segmentation head runs.
inline std::vector<VoteCounts> monte_carlo_element_votes(
    const SegSynthSample& sample, std::span<const ModalitySpec> specs,
    long num_draws, std::uint64_t seed, std::uint64_t sample_id) {
  if (num_draws < 1) throw ConfigError("need at least one Monte Carlo draw");
  const MarkMajorityClassifier classifier(sample);
  std::vector<VoteCounts> votes(sample.base_bit.size());
  for (auto& v : votes) {
    v.total = num_draws;
    v.num_classes = 2;
  }
  for (long d = 0; d < num_draws; ++d) {
    StreamRng rng(seed, sample_id, static_cast<std::uint64_t>(d));
    const auto labels =
        classifier.classify_elements(subsample(sample.input, specs, rng));
    for (std::size_t j = 0; j < labels.size(); ++j) ++votes[j].counts[labels[j]];
  }
  return votes;
}

// Exact probability that a joint subsample carries a strict majority of
// noise marks.
inline Ratio exact_flip_prob(const SegSynthSample& sample,
                             std::span<const ModalitySpec> specs) {
  std::vector<std::vector<long>> counts(specs.size(), std::vector<long>(2, 0));
  std::vector<long> ks(specs.size());
  BigNat total(1);
  long k_sum = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (const auto bit : sample.mark[i]) ++counts[i][bit];
    ks[i] = specs[i].k;
    k_sum += specs[i].k;
    total *= binom(specs[i].n, specs[i].k);
  }
  const auto dist = selection_count_distribution(counts, ks);
  BigNat mass(0);
  for (const auto& [totals, weight] : dist)
    if (2 * totals[1] > k_sum) mass += weight;
  return make_ratio(mass, total);
}

}  // namespace multicert
