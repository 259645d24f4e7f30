#pragma once

#include <span>
#include <string>
#include <vector>

#include "multicert/errors.hpp"

namespace multicert {

enum class AttackType { kModification, kAddition, kDeletion };

inline const char* to_string(AttackType a) {
  switch (a) {
    case AttackType::kModification: return "modification";
    case AttackType::kAddition: return "addition";
    case AttackType::kDeletion: return "deletion";
  }
  return "?";
}

inline AttackType attack_from_string(const std::string& s) {
  if (s == "modification") return AttackType::kModification;
  if (s == "addition") return AttackType::kAddition;
  if (s == "deletion") return AttackType::kDeletion;
  throw ConfigError("unknown attack type '" + s + "'");
}

// One input source: n basic elements of which k are kept per subsample.
struct ModalitySpec {
  std::string name;
  long n = 0;
  long k = 0;
  AttackType attack = AttackType::kModification;

  void validate() const {
    if (n < 1 || k < 1 || k > n)
      throw ConfigError("modality '" + name + "': need 1 <= k <= n, got n=" +
                        std::to_string(n) + " k=" + std::to_string(k));
  }
};

// Per-modality perturbation sizes, aligned with the modality list.
struct AttackBudget {
  std::vector<long> r;
};

// Worst-case geometry after attacking r elements: `shared` elements are
// guaranteed present in both the clean and the attacked modality, and
// `post_size` elements exist afterwards.
struct PerturbedModality {
  long shared = 0;     // e
  long post_size = 0;  // n'
};

inline PerturbedModality attack_params(AttackType attack, long n, long r) {
  if (n < 0) throw ConfigError("attack_params: negative n");
  if (r < 0) throw ConfigError("attack_params: negative budget");
  switch (attack) {
    case AttackType::kModification:
      if (r > n)
        throw InfeasibleBudgetError("cannot modify " + std::to_string(r) +
                                    " of " + std::to_string(n) + " elements");
      return {n - r, n};
    case AttackType::kAddition:
      return {n, n + r};
    case AttackType::kDeletion:
      if (r > n)
        throw InfeasibleBudgetError("cannot delete " + std::to_string(r) +
                                    " of " + std::to_string(n) + " elements");
      return {n - r, n - r};
  }
  throw ConfigError("attack_params: unknown attack type");
}

inline void validate_budget(std::span<const ModalitySpec> specs,
                            const AttackBudget& budget) {
  if (budget.r.size() != specs.size())
    throw ConfigError("budget has " + std::to_string(budget.r.size()) +
                      " entries for " + std::to_string(specs.size()) +
                      " modalities");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    attack_params(specs[i].attack, specs[i].n, budget.r[i]);
  }
}

}  // namespace multicert
