#include "multicert/combinatorics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace mc = multicert;

namespace {

// Independent route: Pascal's triangle, addition only.
std::vector<std::vector<mc::BigNat>> pascal_triangle(long max_n) {
  std::vector<std::vector<mc::BigNat>> tri(max_n + 1);
  for (long n = 0; n <= max_n; ++n) {
    tri[n].resize(n + 1);
    tri[n][0] = 1;
    tri[n][n] = 1;
    for (long k = 1; k < n; ++k) tri[n][k] = tri[n - 1][k - 1] + tri[n - 1][k];
  }
  return tri;
}

double log_of(const mc::BigNat& v) {
  signed long exp2 = 0;
  const double mant = mpz_get_d_2exp(&exp2, v.get_mpz_t());
  return std::log(mant) + static_cast<double>(exp2) * std::log(2.0);
}

std::vector<mc::ModalitySpec> specs1(long n, long k, mc::AttackType a) {
  return {{"m1", n, k, a}};
}

}  // namespace

TEST(Binom, MatchesPascalTriangle) {
  const auto tri = pascal_triangle(64);
  for (long n = 0; n <= 64; ++n)
    for (long k = 0; k <= n; ++k)
      ASSERT_EQ(mc::binom(n, k), tri[n][k]) << "n=" << n << " k=" << k;
}

TEST(Binom, FrozenSpotValue) {
  EXPECT_EQ(mc::binom(52, 5), 2598960);
}

TEST(Binom, ZeroWhenKExceedsN) {
  EXPECT_EQ(mc::binom(3, 5), 0);
  EXPECT_EQ(mc::binom(0, 1), 0);
}

TEST(Binom, Edges) {
  EXPECT_EQ(mc::binom(0, 0), 1);
  EXPECT_EQ(mc::binom(17, 0), 1);
  EXPECT_EQ(mc::binom(17, 17), 1);
  EXPECT_THROW(mc::binom(-1, 0), mc::ConfigError);
  EXPECT_THROW(mc::binom(3, -2), mc::ConfigError);
}

TEST(Binom, LogAgreesWithExactAtScale) {
  const mc::BigNat big = mc::binom(465750, 9000);
  EXPECT_GT(big, 0);
  const double exact_log = log_of(big);
  const double approx = mc::log_binom(465750, 9000);
  EXPECT_NEAR(approx / exact_log, 1.0, 1e-9);
  EXPECT_EQ(mc::log_binom(3, 5), -std::numeric_limits<double>::infinity());
}

TEST(AttackParams, CanonicalCases) {
  auto p = mc::attack_params(mc::AttackType::kModification, 108, 5);
  EXPECT_EQ(p.shared, 103);
  EXPECT_EQ(p.post_size, 108);

  p = mc::attack_params(mc::AttackType::kAddition, 10, 0);
  EXPECT_EQ(p.shared, 10);
  EXPECT_EQ(p.post_size, 10);

  p = mc::attack_params(mc::AttackType::kDeletion, 10, 3);
  EXPECT_EQ(p.shared, 7);
  EXPECT_EQ(p.post_size, 7);

  p = mc::attack_params(mc::AttackType::kAddition, 10, 25);
  EXPECT_EQ(p.shared, 10);
  EXPECT_EQ(p.post_size, 35);
}

TEST(AttackParams, InfeasibleBudgets) {
  EXPECT_THROW(mc::attack_params(mc::AttackType::kModification, 10, 11),
               mc::InfeasibleBudgetError);
  EXPECT_THROW(mc::attack_params(mc::AttackType::kDeletion, 4, 5),
               mc::InfeasibleBudgetError);
  EXPECT_THROW(mc::attack_params(mc::AttackType::kModification, 10, -1),
               mc::ConfigError);
}

TEST(CertTerms, SingleModalityModification) {
  const auto specs = specs1(4, 2, mc::AttackType::kModification);
  const auto t = mc::cert_terms(specs, {{1}});
  EXPECT_EQ(t->pre_count(), 6);
  EXPECT_EQ(t->post_count(), 6);
  EXPECT_EQ(t->overlap_count(), 3);
  EXPECT_EQ(t->overlap_pre(), mc::make_ratio(1L, 2L));
  EXPECT_FALSE(t->post_space_empty());

  const auto t0 = mc::cert_terms(specs, {{0}});
  EXPECT_EQ(t0->pre_count(), 6);
  EXPECT_EQ(t0->post_count(), 6);
  EXPECT_EQ(t0->overlap_count(), 6);
  EXPECT_EQ(t0->overlap_pre(), 1);
}

TEST(CertTerms, TwoModalities) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 5, 2, mc::AttackType::kModification},
      {"b", 5, 2, mc::AttackType::kModification}};
  const auto t = mc::cert_terms(specs, {{1, 1}});
  EXPECT_EQ(t->pre_count(), 100);
  EXPECT_EQ(t->post_count(), 100);
  EXPECT_EQ(t->overlap_count(), 36);
  EXPECT_EQ(t->overlap_pre(), mc::make_ratio(9L, 25L));
}

TEST(CertTerms, MixedAttacks) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 5, 2, mc::AttackType::kAddition},
      {"b", 6, 3, mc::AttackType::kDeletion}};
  const auto t = mc::cert_terms(specs, {{2, 1}});
  // D = C(5,2) C(6,3) = 10 * 20; D' = C(7,2) C(5,3) = 21 * 10; E = C(5,2) C(5,3).
  EXPECT_EQ(t->pre_count(), 200);
  EXPECT_EQ(t->post_count(), 210);
  EXPECT_EQ(t->overlap_count(), 100);
}

TEST(CertTerms, OverlapMatchesAvoidanceEnumeration) {
  // Independent route: k-subsets avoiding the first r positions, by bitmask.
  for (long n = 1; n <= 8; ++n) {
    for (long k = 1; k <= n && k <= 4; ++k) {
      for (long r = 0; r <= n; ++r) {
        long total = 0, avoiding = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (__builtin_popcount(mask) != k) continue;
          ++total;
          if ((mask & ((1u << r) - 1)) == 0) ++avoiding;
        }
        const auto t = mc::cert_terms(specs1(n, k, mc::AttackType::kModification),
                                      {{r}});
        ASSERT_EQ(t->pre_count(), total) << "n=" << n << " k=" << k;
        ASSERT_EQ(t->overlap_count(), avoiding)
            << "n=" << n << " k=" << k << " r=" << r;
      }
    }
  }
}

TEST(CertTerms, PostSpaceEmptyUnderDeepDeletion) {
  const auto t = mc::cert_terms(specs1(3, 2, mc::AttackType::kDeletion), {{2}});
  EXPECT_TRUE(t->post_space_empty());
  EXPECT_EQ(t->post_count(), 0);
  EXPECT_EQ(t->overlap_post(), 0);
}

TEST(CertTerms, DeltaExampleAtD6) {
  const auto t = mc::cert_terms(specs1(4, 2, mc::AttackType::kModification),
                                {{0}});
  const mc::Ratio p = mc::make_ratio(3L, 10L);
  EXPECT_EQ(t->floor_mass(p), 1);
  EXPECT_EQ(t->ceil_mass(p), 2);
  EXPECT_EQ(t->delta_lower(p), mc::make_ratio(2L, 15L));
  EXPECT_EQ(t->delta_upper(p), mc::make_ratio(1L, 30L));
}

TEST(CertTerms, DeltaProperties) {
  const auto t = mc::cert_terms(specs1(6, 3, mc::AttackType::kModification),
                                {{2}});
  const mc::Ratio inv_d = mc::make_ratio(mc::BigNat(1), t->pre_count());
  for (long num = 0; num <= 37; ++num) {
    const mc::Ratio p = mc::make_ratio(num, 37L);
    const mc::Ratio dl = t->delta_lower(p);
    const mc::Ratio du = t->delta_upper(p);
    ASSERT_GE(dl, 0);
    ASSERT_LT(dl, inv_d);
    ASSERT_GE(du, 0);
    ASSERT_LT(du, inv_d);
    mc::Ratio snapped = p - dl;
    snapped *= mc::Ratio(t->pre_count());
    ASSERT_TRUE(mc::is_integer(snapped));
    const bool on_grid = mc::is_integer(mc::Ratio(p * mc::Ratio(t->pre_count())));
    ASSERT_EQ(dl == 0, on_grid);
    ASSERT_EQ(du == 0, on_grid);
  }
}

TEST(CertTerms, CacheReturnsSharedInstance) {
  const auto specs = specs1(9, 3, mc::AttackType::kDeletion);
  const auto a = mc::cert_terms(specs, {{2}});
  const auto b = mc::cert_terms(specs, {{2}});
  EXPECT_EQ(a.get(), b.get());
}

TEST(CertTerms, ArityMismatchRejected) {
  const auto specs = specs1(4, 2, mc::AttackType::kModification);
  EXPECT_THROW(mc::cert_terms(specs, {{1, 1}}), mc::ConfigError);
  EXPECT_THROW(mc::cert_terms(specs, {{}}), mc::ConfigError);
}

TEST(LogCertTerms, TracksExactCounts) {
  const std::vector<mc::ModalitySpec> specs = {
      {"a", 40, 4, mc::AttackType::kAddition},
      {"b", 61, 3, mc::AttackType::kModification}};
  const std::vector<long> budget = {3, 5};
  const auto exact = mc::cert_terms(specs, {budget});
  const auto logs = mc::log_cert_terms(specs, budget);
  EXPECT_NEAR(logs.log_d, log_of(exact->pre_count()), 1e-9);
  EXPECT_NEAR(logs.log_d_prime, log_of(exact->post_count()), 1e-9);
  EXPECT_NEAR(logs.log_e, log_of(exact->overlap_count()), 1e-9);

  const auto gone = mc::log_cert_terms(specs1(3, 2, mc::AttackType::kDeletion),
                                       std::vector<long>{2});
  EXPECT_EQ(gone.log_d_prime, -std::numeric_limits<double>::infinity());
}
