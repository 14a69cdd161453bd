#include "stache/oracle.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include <fmt/format.h>

namespace stache {

SpaceOracle::SpaceOracle(const Factorization& f, const Policy& policy, const OracleConfig& config) : f_(f) {
  std::vector<FactorState> states;
  for (const auto& s : enumerate_space(f, config.cap)) states.push_back(s);
  const auto n = states.size();

  admitted_.assign(n, 1);
  if (config.mask) {
    for (std::size_t i = 0; i < n; ++i) admitted_[i] = config.mask(states[i]) ? 1 : 0;
  }
  actions_.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (admitted_[i]) actions_[i] = policy.act(states[i]);
  }

  // Explicit edge list between admitted same-action neighbors.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!admitted_[i]) continue;
    for (const auto& nb : immediate_neighbors(f, states[i])) {
      const auto j = f.rank(nb);
      if (j > i && admitted_[j] && actions_[j] == actions_[i]) edges.emplace_back(i, j);
    }
  }

  parent_.resize(n);
  std::iota(parent_.begin(), parent_.end(), std::uint64_t{0});
  for (const auto& [a, b] : edges) {
    const auto ra = find(a);
    const auto rb = find(b);
    if (ra != rb) parent_[std::max(ra, rb)] = std::min(ra, rb);
  }
  for (std::uint64_t i = 0; i < n; ++i) parent_[i] = find(i);
}

std::uint64_t SpaceOracle::find(std::uint64_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

std::vector<FactorState> SpaceOracle::region(const FactorState& seed) const {
  const auto seed_rank = f_.rank(seed);
  if (!admitted_[seed_rank]) throw InvalidStateError("seed is excluded by the validity mask");
  const auto root = parent_[seed_rank];
  std::vector<FactorState> out;
  for (std::uint64_t r = 0; r < parent_.size(); ++r) {
    if (admitted_[r] && parent_[r] == root) out.push_back(f_.unrank(r));
  }
  return out;  // rank order is lexicographic order
}

CounterfactualSet SpaceOracle::min_counterfactuals(const FactorState& seed) const {
  const auto seed_rank = f_.rank(seed);
  if (!admitted_[seed_rank]) throw InvalidStateError("seed is excluded by the validity mask");
  const ActionId seed_action = actions_[seed_rank];
  CounterfactualSet out;
  for (std::uint64_t r = 0; r < actions_.size(); ++r) {
    if (!admitted_[r] || actions_[r] == seed_action) continue;
    const auto s = f_.unrank(r);
    const int d = hybrid_distance(f_, seed, s);
    if (!out.min_distance || d < *out.min_distance) {
      out.min_distance = d;
      out.states.clear();
    }
    if (d == *out.min_distance) out.states.push_back({s, actions_[r]});
  }
  return out;
}

std::vector<FactorState> oracle_region(const Factorization& f, const Policy& policy, const FactorState& seed,
                                       const OracleConfig& config) {
  f.validate(seed);
  return SpaceOracle(f, policy, config).region(seed);
}

CounterfactualSet oracle_min_counterfactuals(const Factorization& f, const Policy& policy, const FactorState& seed,
                                             const OracleConfig& config) {
  f.validate(seed);
  return SpaceOracle(f, policy, config).min_counterfactuals(seed);
}

}  // namespace stache
