#pragma once

#include <optional>
#include <vector>

#include "stache/factored_space.hpp"
#include "stache/policy.hpp"
#include "stache/search.hpp"

namespace stache {

// Brute-force ground truth for the search module. Everything here works on
// the enumerated product space and shares nothing with the BFS beyond the
// metric and neighbor primitives.

struct OracleConfig {
  std::uint64_t cap = kDefaultSpaceCap;
  ValidityMask mask;
};

/// Connected component of the seed in the subgraph induced by states that
/// share the seed's action, labelled with union-find. Sorted.
std::vector<FactorState> oracle_region(const Factorization& f, const Policy& policy, const FactorState& seed,
                                       const OracleConfig& config = {});

/// Global minimum of the hybrid distance over every state whose action
/// differs from the seed's, and all states attaining it (sorted). Empty
/// distance when no such state exists.
CounterfactualSet oracle_min_counterfactuals(const Factorization& f, const Policy& policy, const FactorState& seed,
                                             const OracleConfig& config = {});

/// Answers many seed queries against one policy without re-querying it.
/// Labels every action class once.
class SpaceOracle {
 public:
  SpaceOracle(const Factorization& f, const Policy& policy, const OracleConfig& config = {});

  std::vector<FactorState> region(const FactorState& seed) const;
  CounterfactualSet min_counterfactuals(const FactorState& seed) const;
  ActionId action(const FactorState& s) const { return actions_.at(f_.rank(s)); }

 private:
  std::uint64_t find(std::uint64_t x);

  Factorization f_;
  std::vector<ActionId> actions_;
  std::vector<char> admitted_;
  /// Union-find forest, fully compressed after construction.
  std::vector<std::uint64_t> parent_;
};

}  // namespace stache
