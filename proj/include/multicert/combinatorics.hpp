#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "multicert/modality.hpp"
#include "multicert/rational.hpp"

namespace multicert {

// Exact binomial coefficient; 0 when k > n. Cached because per-element
// certification reuses a handful of coefficients millions of times.
inline BigNat binom(long n, long k) {
  if (n < 0 || k < 0) throw ConfigError("binom: negative argument");
  if (k > n) return BigNat(0);
  if (k == 0 || k == n) return BigNat(1);
  struct Cache {
    std::mutex mu;
    std::map<std::pair<long, long>, BigNat> memo;
  };
  static Cache cache;
  const std::pair<long, long> key{n, k};
  {
    std::lock_guard lock(cache.mu);
    auto it = cache.memo.find(key);
    if (it != cache.memo.end()) return it->second;
  }
  BigNat value;
  mpz_bin_uiui(value.get_mpz_t(), static_cast<unsigned long>(n),
               static_cast<unsigned long>(k));
  std::lock_guard lock(cache.mu);
  return cache.memo.emplace(key, std::move(value)).first->second;
}

// log C(n, k) in double precision; -inf when the coefficient is zero.
inline double log_binom(long n, long k) {
  if (n < 0 || k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// The exact counting terms of the certification condition for one
// (modalities, budget) geometry:
//   D  = prod_i C(n_i, k_i)   subsamples of the clean input
//   D' = prod_i C(n'_i, k_i)  subsamples of the attacked input
//   E  = prod_i C(e_i, k_i)   subsamples drawn entirely from the shared part
class CertTerms {
 public:
  CertTerms(std::span<const ModalitySpec> specs, std::span<const long> budget)
      : d_(1), d_prime_(1), e_(1) {
    if (specs.empty()) throw ConfigError("need at least one modality");
    if (specs.size() != budget.size())
      throw ConfigError("budget arity does not match modalities");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      specs[i].validate();
      const PerturbedModality p =
          attack_params(specs[i].attack, specs[i].n, budget[i]);
      d_ *= binom(specs[i].n, specs[i].k);
      d_prime_ *= binom(p.post_size, specs[i].k);
      e_ *= binom(p.shared, specs[i].k);
    }
    post_empty_ = sgn(d_prime_) == 0;
    e_over_d_ = make_ratio(e_, d_);
    e_over_d_prime_ = post_empty_ ? Ratio(0) : make_ratio(e_, d_prime_);
  }

  const BigNat& pre_count() const { return d_; }
  const BigNat& post_count() const { return d_prime_; }
  const BigNat& overlap_count() const { return e_; }

  // Deletion may leave fewer than k_i elements; the attacked ensemble is
  // then undefined and nothing can be certified.
  bool post_space_empty() const { return post_empty_; }

  const Ratio& overlap_pre() const { return e_over_d_; }
  // E/D'; fixed at 0 when the attacked space is empty.
  const Ratio& overlap_post() const { return e_over_d_prime_; }

  BigNat floor_mass(const Ratio& p) const { return floor_scaled(p, d_); }
  BigNat ceil_mass(const Ratio& p) const { return ceil_scaled(p, d_); }

  // Rounding slack of a probability against the grid of multiples of 1/D.
  // Both are in [0, 1/D), and 0 exactly when p*D is an integer.
  Ratio delta_lower(const Ratio& p) const {
    return p - make_ratio(floor_mass(p), d_);
  }
  Ratio delta_upper(const Ratio& p) const {
    return make_ratio(ceil_mass(p), d_) - p;
  }

 private:
  BigNat d_, d_prime_, e_;
  Ratio e_over_d_, e_over_d_prime_;
  bool post_empty_ = false;
};

namespace detail {
using TermsKey = std::vector<std::array<long, 4>>;

inline TermsKey terms_key(std::span<const ModalitySpec> specs,
                          std::span<const long> budget) {
  TermsKey key;
  key.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i)
    key.push_back({specs[i].n, specs[i].k, static_cast<long>(specs[i].attack),
                   i < budget.size() ? budget[i] : -1});
  return key;
}
}  // namespace detail

// Shared cached terms for a geometry. Construction happens outside the lock
// so a slow first build does not serialize unrelated lookups.
inline std::shared_ptr<const CertTerms> cert_terms(
    std::span<const ModalitySpec> specs, const AttackBudget& budget) {
  validate_budget(specs, budget);
  struct Cache {
    std::mutex mu;
    std::map<detail::TermsKey, std::shared_ptr<const CertTerms>> memo;
  };
  static Cache cache;
  const detail::TermsKey key = detail::terms_key(specs, budget.r);
  {
    std::lock_guard lock(cache.mu);
    auto it = cache.memo.find(key);
    if (it != cache.memo.end()) return it->second;
  }
  auto built = std::make_shared<const CertTerms>(specs, budget.r);
  std::lock_guard lock(cache.mu);
  return cache.memo.emplace(key, std::move(built)).first->second;
}

// Floating-point companion of CertTerms for the fast evaluation path.
struct LogCertTerms {
  double log_d = 0.0;
  double log_d_prime = 0.0;
  double log_e = 0.0;  // -inf encodes E = 0 (likewise for D')
};

inline LogCertTerms log_cert_terms(std::span<const ModalitySpec> specs,
                                   std::span<const long> budget) {
  if (specs.empty()) throw ConfigError("need at least one modality");
  if (specs.size() != budget.size())
    throw ConfigError("budget arity does not match modalities");
  LogCertTerms t;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    const PerturbedModality p =
        attack_params(specs[i].attack, specs[i].n, budget[i]);
    t.log_d += log_binom(specs[i].n, specs[i].k);
    t.log_d_prime += log_binom(p.post_size, specs[i].k);
    t.log_e += log_binom(p.shared, specs[i].k);
  }
  return t;
}

}  // namespace multicert
