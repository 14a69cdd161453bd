#include "stache/search.hpp"

#include <algorithm>
#include <limits>
#include <unordered_set>

#include <fmt/format.h>

namespace stache {

std::string to_string(SearchMode mode) { return mode == SearchMode::exact ? "exact" : "cutoff"; }

SearchMode parse_search_mode(std::string_view text) {
  if (text == "exact") return SearchMode::exact;
  if (text == "cutoff") return SearchMode::cutoff;
  throw Error(fmt::format("unknown search mode '{}' (expected exact or cutoff)", text));
}

// ---------------------------------------------------------------------------
// RobustnessRegion

RobustnessRegion::RobustnessRegion(FactorState seed, ActionId seed_action)
    : seed_(std::move(seed)), seed_action_(seed_action) {}

std::optional<std::size_t> RobustnessRegion::index_of(const FactorState& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<FactorState> RobustnessRegion::sorted_states() const {
  auto out = states_;
  std::sort(out.begin(), out.end());
  return out;
}

void RobustnessRegion::add(FactorState s, std::size_t parent, int depth) {
  index_.emplace(s, states_.size());
  states_.push_back(std::move(s));
  parents_.push_back(parent);
  depths_.push_back(depth);
}

void RobustnessRegion::add_unlinked(FactorState s) {
  has_parents_ = false;
  add(std::move(s), kNoParent, -1);
}

// ---------------------------------------------------------------------------
// Breadth-first search

namespace {

struct Pending {
  FactorState state;
  std::size_t parent;  // region index of the state that enqueued this one
  int depth;
};

class LayeredSearch {
 public:
  LayeredSearch(const Factorization& f, const Policy& policy, const FactorState& seed, SearchMode mode,
                const SearchConfig& config)
      : f_(f), policy_(policy), seed_(seed), mode_(mode), config_(config) {}

  CompositeExplanation run() {
    const auto started = std::chrono::steady_clock::now();
    f_.validate(seed_);
    if (config_.mask && !config_.mask(seed_)) {
      throw InvalidStateError(fmt::format("seed {} is excluded by the validity mask", f_.format(seed_)));
    }
    out_.mode = mode_;
    out_.scope = config_.mask ? CounterfactualScope::connectivity : CounterfactualScope::global;

    std::vector<Pending> layer{{seed_, RobustnessRegion::kNoParent, 0}};
    visited_.insert(seed_);
    out_.stats.enqueued = 1;

    while (!layer.empty()) {
      const int depth = layer.front().depth;
      if (mode_ == SearchMode::cutoff && min_dist_ && depth > *min_dist_) {
        // Every remaining entry lies beyond the minimal counterfactual layer.
        out_.truncated_region = true;
        break;
      }
      std::vector<ActionId> batch;
      if (config_.batch_layers) batch = query_batch(layer);

      std::vector<Pending> next;
      for (std::size_t i = 0; i < layer.size(); ++i) {
        auto& item = layer[i];
        const ActionId action = config_.batch_layers ? batch[i] : query(item.state);
        ++out_.stats.visited;
        out_.stats.max_visited_distance =
            std::max(out_.stats.max_visited_distance, hybrid_distance(f_, seed_, item.state));
        if (!seed_action_) {
          seed_action_ = action;
          out_.region = RobustnessRegion(seed_, action);
        }
        if (action == *seed_action_) {
          add_to_region(item);
          expand(out_.region.size() - 1, item, next);
        } else {
          record_counterfactual(item, action);
        }
      }
      layer = std::move(next);
    }

    finish();
    out_.stats.wall_time = std::chrono::steady_clock::now() - started;
    return std::move(out_);
  }

 private:
  ActionId checked(ActionId action, const FactorState& s) const {
    if (action < 0) {
      throw QueryError(fmt::format("policy returned invalid action {}", action), f_.format(s));
    }
    return action;
  }

  ActionId query(const FactorState& s) {
    ++out_.stats.policy_queries;
    try {
      return checked(policy_.act(s), s);
    } catch (const QueryError&) {
      throw;
    } catch (const std::exception& e) {
      throw QueryError(fmt::format("policy query failed: {}", e.what()), f_.format(s));
    }
  }

  std::vector<ActionId> query_batch(const std::vector<Pending>& layer) {
    std::vector<FactorState> states;
    states.reserve(layer.size());
    for (const auto& p : layer) states.push_back(p.state);
    out_.stats.policy_queries += states.size();
    std::vector<ActionId> actions;
    try {
      actions = policy_.act_batch(states);
    } catch (const QueryError&) {
      throw;
    } catch (const std::exception& e) {
      throw QueryError(fmt::format("batch policy query failed: {}", e.what()), f_.format(states.front()));
    }
    if (actions.size() != states.size()) {
      throw QueryError(fmt::format("batch query returned {} actions for {} states", actions.size(), states.size()),
                       f_.format(states.front()));
    }
    for (std::size_t i = 0; i < actions.size(); ++i) checked(actions[i], states[i]);
    return actions;
  }

  void add_to_region(Pending& item) {
    if (config_.max_region && out_.region.size() >= *config_.max_region) {
      finish();
      throw CappedResultError(
          fmt::format("robustness region exceeds the cap of {} states", *config_.max_region), std::move(out_));
    }
    out_.region.add(std::move(item.state), item.parent, item.depth);
  }

  void expand(std::size_t region_index, const Pending& item, std::vector<Pending>& next) {
    const FactorState& s = out_.region.states()[region_index];
    const int next_depth = item.depth + 1;
    for (auto& n : immediate_neighbors(f_, s, config_.mask)) {
      if (visited_.contains(n)) continue;
      if (mode_ == SearchMode::cutoff && min_dist_ && next_depth > *min_dist_) {
        out_.truncated_region = true;
        continue;
      }
      visited_.insert(n);
      ++out_.stats.enqueued;
      next.push_back({std::move(n), region_index, next_depth});
    }
  }

  void record_counterfactual(Pending& item, ActionId action) {
    if (mode_ == SearchMode::exact) {
      found_.push_back({std::move(item.state), action});
      return;
    }
    if (!min_dist_ || item.depth < *min_dist_) {
      min_dist_ = item.depth;
      found_.clear();
    }
    if (item.depth == *min_dist_) found_.push_back({std::move(item.state), action});
  }

  void finish() {
    auto by_state = [](const LabeledState& a, const LabeledState& b) { return a.state < b.state; };
    if (mode_ == SearchMode::cutoff) {
      out_.counterfactuals.min_distance = min_dist_;
      out_.counterfactuals.states = found_;
      std::sort(out_.counterfactuals.states.begin(), out_.counterfactuals.states.end(), by_state);
      return;
    }
    // Exact mode: minimality is judged by the metric, not by BFS depth.
    std::optional<int> best;
    for (const auto& c : found_) {
      const int d = hybrid_distance(f_, seed_, c.state);
      if (!best || d < *best) best = d;
    }
    out_.counterfactuals.min_distance = best;
    out_.counterfactuals.states.clear();
    out_.boundary.clear();
    for (const auto& c : found_) {
      if (hybrid_distance(f_, seed_, c.state) == *best) {
        out_.counterfactuals.states.push_back(c);
      } else {
        out_.boundary.push_back(c);
      }
    }
    std::sort(out_.counterfactuals.states.begin(), out_.counterfactuals.states.end(), by_state);
    std::sort(out_.boundary.begin(), out_.boundary.end(), by_state);
  }

  const Factorization& f_;
  const Policy& policy_;
  const FactorState& seed_;
  SearchMode mode_;
  const SearchConfig& config_;

  CompositeExplanation out_;
  std::optional<ActionId> seed_action_;
  std::unordered_set<FactorState, FactorStateHash> visited_;
  std::optional<int> min_dist_;
  std::vector<LabeledState> found_;
};

}  // namespace

CompositeExplanation stache_exact(const Factorization& f, const Policy& policy, const FactorState& seed,
                                  const SearchConfig& config) {
  return LayeredSearch(f, policy, seed, SearchMode::exact, config).run();
}

CompositeExplanation stache_cutoff(const Factorization& f, const Policy& policy, const FactorState& seed,
                                   const SearchConfig& config) {
  return LayeredSearch(f, policy, seed, SearchMode::cutoff, config).run();
}

CompositeExplanation explain(const Factorization& f, const Policy& policy, const FactorState& seed,
                             SearchMode mode, const SearchConfig& config) {
  return mode == SearchMode::exact ? stache_exact(f, policy, seed, config) : stache_cutoff(f, policy, seed, config);
}

std::vector<FactorState> shortest_invariant_path(const CompositeExplanation& explanation, const FactorState& target) {
  const auto& region = explanation.region;
  auto index = region.index_of(target);
  if (!index) throw NotInRegionError("target state is not a member of the robustness region");
  if (!region.has_parents()) throw Error("region carries no BFS parent links");
  std::vector<FactorState> path;
  for (std::size_t i = *index; i != RobustnessRegion::kNoParent; i = region.parent(i)) {
    path.push_back(region.states()[i]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace stache
