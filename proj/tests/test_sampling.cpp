#include "multicert/sampling.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

namespace mc = multicert;

namespace {

std::vector<mc::ModalitySpec> specs1(long n, long k) {
  return {{"m1", n, k, mc::AttackType::kModification}};
}

mc::MultiModalInput identity_input(std::span<const mc::ModalitySpec> specs) {
  mc::MultiModalInput in;
  for (const auto& s : specs) {
    std::vector<std::uint32_t> ids(s.n);
    for (long j = 0; j < s.n; ++j) ids[j] = static_cast<std::uint32_t>(j);
    in.modalities.push_back(std::move(ids));
  }
  return in;
}

}  // namespace

TEST(SampleWithoutReplacement, ShapeAndDistinctness) {
  mc::StreamRng rng(5, 0, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = mc::sample_without_replacement(12, 5, rng);
    ASSERT_EQ(s.size(), 5u);
    std::set<std::uint32_t> distinct(s.begin(), s.end());
    ASSERT_EQ(distinct.size(), 5u);
    for (const auto v : s) ASSERT_LT(v, 12u);
    ASSERT_TRUE(std::is_sorted(s.begin(), s.end()));
  }
  const auto all = mc::sample_without_replacement(7, 7, rng);
  EXPECT_EQ(all.size(), 7u);
  EXPECT_EQ(all.front(), 0u);
  EXPECT_EQ(all.back(), 6u);
  EXPECT_TRUE(mc::sample_without_replacement(7, 0, rng).empty());
  EXPECT_THROW(mc::sample_without_replacement(3, 4, rng), mc::ConfigError);
}

TEST(SampleWithoutReplacement, UniformOverSubsets) {
  // All C(5,2)=10 subsets should be equally likely; chi-square at 3 sigma.
  mc::StreamRng rng(99, 1, 0);
  std::map<std::pair<int, int>, long> hist;
  const long draws = 100000;
  for (long i = 0; i < draws; ++i) {
    const auto s = mc::sample_without_replacement(5, 2, rng);
    ++hist[{s[0], s[1]}];
  }
  ASSERT_EQ(hist.size(), 10u);
  const double expected = draws / 10.0;
  double chi2 = 0.0;
  for (const auto& [key, count] : hist)
    chi2 += (count - expected) * (count - expected) / expected;
  EXPECT_LT(chi2, 9.0 + 3.0 * std::sqrt(18.0));
}

TEST(Subsample, JointlyUniformAcrossModalities) {
  // T=2 with k_i=1: the pair (choice_1, choice_2) must be uniform over the
  // 4x3 product space, which also checks cross-modality independence.
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 4, 1, mc::AttackType::kModification},
      {"b", 3, 1, mc::AttackType::kModification}};
  const auto input = identity_input(specs);
  std::map<std::pair<int, int>, long> hist;
  const long draws = 120000;
  for (long d = 0; d < draws; ++d) {
    mc::StreamRng rng(7, 0, static_cast<std::uint64_t>(d));
    const auto sub = mc::subsample(input, specs, rng);
    ++hist[{sub.selected[0][0], sub.selected[1][0]}];
  }
  ASSERT_EQ(hist.size(), 12u);
  const double expected = draws / 12.0;
  double chi2 = 0.0;
  for (const auto& [key, count] : hist)
    chi2 += (count - expected) * (count - expected) / expected;
  EXPECT_LT(chi2, 11.0 + 3.0 * std::sqrt(22.0));
}

TEST(Subsample, InclusionFrequencyMatchesKOverN) {
  const auto specs = specs1(25, 10);
  const auto input = identity_input(specs);
  std::vector<long> inclusion(25, 0);
  const long draws = 50000;
  for (long d = 0; d < draws; ++d) {
    mc::StreamRng rng(13, 0, static_cast<std::uint64_t>(d));
    const auto sub = mc::subsample(input, specs, rng);
    for (const auto id : sub.selected[0]) ++inclusion[id];
  }
  const double p = 10.0 / 25.0;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (long j = 0; j < 25; ++j) {
    EXPECT_NEAR(inclusion[j] / static_cast<double>(draws), p, 4.0 * sigma)
        << "element " << j;
  }
}

TEST(Subsample, MismatchedInputRejected) {
  const auto specs = specs1(6, 2);
  mc::MultiModalInput bad;
  bad.modalities = {{1, 2, 3}};
  mc::StreamRng rng(0, 0, 0);
  EXPECT_THROW(mc::subsample(bad, specs, rng), mc::DataError);
  mc::MultiModalInput two = identity_input(specs);
  two.modalities.push_back({0});
  EXPECT_THROW(mc::subsample(two, specs, rng), mc::DataError);
}

TEST(MonteCarloVotes, DeterministicAndOrderInvariant) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 9, 3, mc::AttackType::kModification},
      {"b", 7, 2, mc::AttackType::kModification}};
  mc::SynthConfig cfg;
  cfg.num_classes = 2;
  cfg.separation = 0.6;
  const auto sample = mc::synth_sample(cfg, specs, 11, 4);
  const mc::PluralityClassifier clf(sample, cfg.num_classes);

  const auto votes =
      mc::monte_carlo_votes(sample.input, clf, specs, 2, 500, 11, 4);
  const auto again =
      mc::monte_carlo_votes(sample.input, clf, specs, 2, 500, 11, 4);
  EXPECT_EQ(votes.counts, again.counts);

  // Same draws replayed in reverse order must produce identical counts.
  mc::VoteCounts reversed;
  reversed.total = 500;
  reversed.num_classes = 2;
  for (long d = 499; d >= 0; --d) {
    mc::StreamRng rng(11, 4, static_cast<std::uint64_t>(d));
    ++reversed.counts[clf.classify(mc::subsample(sample.input, specs, rng))];
  }
  EXPECT_EQ(votes.counts, reversed.counts);

  const auto other_seed =
      mc::monte_carlo_votes(sample.input, clf, specs, 2, 500, 12, 4);
  EXPECT_NE(votes.counts, other_seed.counts);
}

TEST(SelectionCountDistribution, MatchesHypergeometric) {
  // One modality, 6 elements with value 1 and 4 with value 0, choose 4.
  const std::vector<std::vector<long>> counts = {{4, 6}};
  const std::vector<long> ks = {4};
  const auto dist = mc::selection_count_distribution(counts, ks);
  mc::BigNat total(0);
  for (const auto& [totals, mass] : dist) {
    ASSERT_EQ(totals[0] + totals[1], 4);
    ASSERT_EQ(mass, mc::binom(6, totals[1]) * mc::binom(4, totals[0]));
    total += mass;
  }
  EXPECT_EQ(total, mc::binom(10, 4));
}

TEST(ExactLabelProbs, SeparationExtremes) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 5, 2, mc::AttackType::kModification},
      {"b", 4, 1, mc::AttackType::kModification}};
  mc::SynthConfig cfg;
  cfg.num_classes = 2;

  cfg.separation = 1.0;  // every element votes the true class
  auto sample = mc::synth_sample(cfg, specs, 3, 1);
  auto probs = mc::exact_label_probs(sample, specs, 2);
  EXPECT_EQ(probs[sample.label], 1);
  EXPECT_EQ(probs[1 - sample.label], 0);

  cfg.separation = 0.0;  // no signal; odd total k makes the split exact
  sample = mc::synth_sample(cfg, specs, 3, 1);
  probs = mc::exact_label_probs(sample, specs, 2);
  const mc::Ratio sum = probs[0] + probs[1];
  EXPECT_EQ(sum, 1);
  // Feature bits are iid fair coins here, so over the feature randomness
  // the two labels are symmetric; for any fixed draw the probs are exact
  // rationals summing to 1.
}

TEST(ExactLabelProbs, MatchesMonteCarlo) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 5, 2, mc::AttackType::kModification},
      {"b", 4, 1, mc::AttackType::kModification}};
  mc::SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.separation = 0.55;
  const auto sample = mc::synth_sample(cfg, specs, 21, 5);
  const auto probs = mc::exact_label_probs(sample, specs, 3);
  mc::Ratio sum(0);
  for (const auto& p : probs) sum += p;
  ASSERT_EQ(sum, 1);

  const mc::PluralityClassifier clf(sample, 3);
  const long draws = 40000;
  const auto votes =
      mc::monte_carlo_votes(sample.input, clf, specs, 3, draws, 21, 5);
  for (int c = 0; c < 3; ++c) {
    const double p = probs[c].get_d();
    const double sigma = std::sqrt(std::max(p * (1 - p), 1e-9) / draws);
    EXPECT_NEAR(votes.count_of(c) / static_cast<double>(draws), p,
                4.0 * sigma + 1e-3)
        << "label " << c;
  }
}

TEST(PluralityClassifier, TieGoesToSmallerLabel) {
  mc::SynthSample sample;
  sample.label = 1;
  sample.input.modalities = {{0, 1}};
  sample.features = {{1, 0}};
  const mc::PluralityClassifier clf(sample, 2);
  mc::SubsampledInput sub;
  sub.selected = {{0, 1}};
  EXPECT_EQ(clf.classify(sub), 0);
}

TEST(SegSynth, FlipProbMatchesBruteForce) {
  const auto specs = specs1(6, 3);
  mc::SegSynthConfig cfg;
  cfg.mark_rate = 0.4;
  const auto sample = mc::seg_synth_sample(cfg, specs, 0, 17, 2);
  const auto flip = mc::exact_flip_prob(sample, specs);

  // Independent route: enumerate all C(6,3)=20 subsets directly.
  long flipped = 0, total = 0;
  for (unsigned mask = 0; mask < 64; ++mask) {
    if (__builtin_popcount(mask) != 3) continue;
    ++total;
    long ones = 0;
    for (int j = 0; j < 6; ++j)
      if (mask & (1u << j)) ones += sample.mark[0][j];
    if (2 * ones > 3) ++flipped;
  }
  EXPECT_EQ(flip, mc::make_ratio(flipped, total));
}

TEST(SegSynth, ElementVotesTrackFlipProb) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 8, 3, mc::AttackType::kModification},
      {"b", 6, 2, mc::AttackType::kModification}};
  mc::SegSynthConfig cfg;
  cfg.mark_rate = 0.35;
  cfg.base_accuracy = 0.8;
  const auto sample = mc::seg_synth_sample(cfg, specs, 0, 23, 0);
  const double flip = mc::exact_flip_prob(sample, specs).get_d();

  const long draws = 30000;
  const auto votes = mc::monte_carlo_element_votes(sample, specs, draws, 23, 0);
  ASSERT_EQ(votes.size(), 8u);
  const double sigma = std::sqrt(flip * (1 - flip) / draws);
  for (std::size_t j = 0; j < votes.size(); ++j) {
    const double frac_flipped =
        votes[j].count_of(1 - sample.base_bit[j]) / static_cast<double>(draws);
    ASSERT_NEAR(frac_flipped, flip, 4.0 * sigma + 1e-3) << "element " << j;
  }

  // All elements share the frame-level flip event, so their votes for the
  // own-bit label are identical counts.
  const long reference = votes[0].count_of(sample.base_bit[0]);
  for (std::size_t j = 1; j < votes.size(); ++j)
    ASSERT_EQ(votes[j].count_of(sample.base_bit[j]), reference);
}

TEST(SynthSample, RejectsBadConfig) {
  const auto specs = specs1(4, 2);
  mc::SynthConfig cfg;
  cfg.num_classes = 1;
  EXPECT_THROW(mc::synth_sample(cfg, specs, 0, 0), mc::ConfigError);
  cfg.num_classes = 2;
  cfg.separation = 1.5;
  EXPECT_THROW(mc::synth_sample(cfg, specs, 0, 0), mc::ConfigError);
}
