#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stache/error.hpp"
#include "stache/factored_space.hpp"
#include "stache/policy.hpp"

namespace stache {

enum class SearchMode { exact, cutoff };

std::string to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view text);

struct SearchConfig {
  /// Largest region accepted before the search aborts with CappedResultError.
  std::optional<std::size_t> max_region;
  /// States rejected by the mask are absent from the graph.
  ValidityMask mask;
  /// Query the policy once per BFS layer through Policy::act_batch.
  bool batch_layers = false;
};

struct LabeledState {
  FactorState state;
  ActionId action;

  friend bool operator==(const LabeledState&, const LabeledState&) = default;
};

/// Connected action-invariant component around the seed. Members are kept
/// in BFS discovery order together with their BFS parent and depth.
class RobustnessRegion {
 public:
  static constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

  RobustnessRegion() = default;
  RobustnessRegion(FactorState seed, ActionId seed_action);

  const FactorState& seed() const noexcept { return seed_; }
  ActionId seed_action() const noexcept { return seed_action_; }
  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<FactorState>& states() const noexcept { return states_; }
  bool contains(const FactorState& s) const { return index_.contains(s); }
  /// Whether BFS parent links are available (false for regions read back from JSON).
  bool has_parents() const noexcept { return has_parents_; }

  /// Index of `s` in discovery order.
  std::optional<std::size_t> index_of(const FactorState& s) const;
  std::size_t parent(std::size_t i) const { return parents_.at(i); }
  int depth(std::size_t i) const { return depths_.at(i); }

  /// Members sorted lexicographically.
  std::vector<FactorState> sorted_states() const;

  void add(FactorState s, std::size_t parent, int depth);
  /// Adds a member without parent information.
  void add_unlinked(FactorState s);

 private:
  FactorState seed_;
  ActionId seed_action_ = 0;
  std::vector<FactorState> states_;
  std::vector<std::size_t> parents_;
  std::vector<int> depths_;
  std::unordered_map<FactorState, std::size_t, FactorStateHash> index_;
  bool has_parents_ = true;
};

/// Different-action states at minimal hybrid distance from the seed.
/// `min_distance` is empty when no counterfactual was found.
struct CounterfactualSet {
  std::optional<int> min_distance;
  std::vector<LabeledState> states;

  bool exists() const noexcept { return min_distance.has_value(); }
};

/// Whether minimality holds over the whole space or only along
/// connected paths (the latter when a validity mask is active).
enum class CounterfactualScope { global, connectivity };

struct SearchStats {
  /// States dequeued and evaluated.
  std::size_t visited = 0;
  std::size_t enqueued = 0;
  std::size_t policy_queries = 0;
  /// Largest hybrid distance from the seed among visited states.
  int max_visited_distance = 0;
  std::chrono::nanoseconds wall_time{0};
};

struct CompositeExplanation {
  SearchMode mode = SearchMode::exact;
  RobustnessRegion region;
  CounterfactualSet counterfactuals;
  /// Non-minimal boundary counterfactuals, exact mode only, in discovery order.
  std::vector<LabeledState> boundary;
  SearchStats stats;
  /// Cutoff mode: the region may extend beyond what was explored.
  bool truncated_region = false;
  CounterfactualScope scope = CounterfactualScope::global;
};

/// Thrown when the region outgrows SearchConfig::max_region. Carries what
/// was found up to that point.
class CappedResultError : public Error {
 public:
  CappedResultError(const std::string& message, CompositeExplanation partial)
      : Error(message), partial_(std::move(partial)) {}
  const CompositeExplanation& partial() const noexcept { return partial_; }

 private:
  CompositeExplanation partial_;
};

/// Full robustness region plus every boundary counterfactual, by
/// breadth-first search from `seed`. Minimal counterfactuals are the
/// boundary states at smallest hybrid distance from the seed.
CompositeExplanation stache_exact(const Factorization& f, const Policy& policy, const FactorState& seed,
                                  const SearchConfig& config = {});

/// Breadth-first search that stops expanding past the first layer holding a
/// counterfactual. Returns every minimal counterfactual and the partial
/// region inside that radius.
CompositeExplanation stache_cutoff(const Factorization& f, const Policy& policy, const FactorState& seed,
                                   const SearchConfig& config = {});

CompositeExplanation explain(const Factorization& f, const Policy& policy, const FactorState& seed,
                             SearchMode mode, const SearchConfig& config = {});

/// Seed-to-target path of unit steps that stays inside the region. Throws
/// NotInRegionError when `target` is not a region member.
std::vector<FactorState> shortest_invariant_path(const CompositeExplanation& explanation, const FactorState& target);

}  // namespace stache
