#include <doctest.h>

#include <mutex>
#include <set>

#include "stache/error.hpp"
#include "stache/explanation_io.hpp"
#include "stache/oracle.hpp"
#include "stache/search.hpp"
#include "stache/training.hpp"
#include "support.hpp"

using namespace stache;
using namespace testing;

namespace {

// Records every query so tests can check that no state is asked twice.
class CountingPolicy final : public Policy {
 public:
  explicit CountingPolicy(const Policy& inner) : Policy(inner.factorization(), inner.info()), inner_(inner) {}

  ActionId act(const FactorState& s) const override {
    std::lock_guard lock(mutex_);
    ++queries_[s];
    ++singles_;
    return inner_.act(s);
  }
  std::vector<ActionId> act_batch(std::span<const FactorState> states) const override {
    {
      std::lock_guard lock(mutex_);
      ++batches_;
      for (const auto& s : states) ++queries_[s];
    }
    return inner_.act_batch(states);
  }

  int max_repeats() const {
    int m = 0;
    for (const auto& [_, n] : queries_) m = std::max(m, n);
    return m;
  }
  std::size_t distinct() const { return queries_.size(); }
  int singles() const { return singles_; }
  int batches() const { return batches_; }

 private:
  const Policy& inner_;
  mutable std::mutex mutex_;
  mutable std::map<FactorState, int> queries_;
  mutable int singles_ = 0;
  mutable int batches_ = 0;
};

std::vector<FactorState> sorted(std::vector<FactorState> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("constant policy: region is the whole space") {
  const auto f = toy_space();
  const FunctionPolicy constant(f, [](const FactorState&) { return 2; });
  const auto seed = f.make_state({2, 1, 0});
  const auto e = stache_exact(f, constant, seed);
  CHECK(e.region.size() == 60);
  CHECK(e.region.seed_action() == 2);
  CHECK(e.boundary.empty());
  CHECK_FALSE(e.counterfactuals.exists());
  CHECK(e.counterfactuals.states.empty());

  const auto c = stache_cutoff(f, constant, seed);
  CHECK(c.region.size() == 60);
  CHECK_FALSE(c.counterfactuals.exists());

  const auto doc = explanation_to_json(f, e);
  CHECK(doc["counterfactuals"]["min_distance"].is_null());
  CHECK(doc["counterfactuals"]["exists"] == false);
}

TEST_CASE("isolated seed: every neighbor is a minimal counterfactual") {
  const auto f = taxi_model().factorization;
  const auto seed = f.make_state({2, 2, 1, 3});
  const FunctionPolicy isolating(f, [seed](const FactorState& s) { return s == seed ? 0 : 1 + s[1] % 3; });
  for (auto mode : {SearchMode::exact, SearchMode::cutoff}) {
    const auto e = explain(f, isolating, seed, mode);
    CHECK(e.region.size() == 1);
    CHECK(e.counterfactuals.min_distance == 1);
    std::vector<FactorState> cf;
    for (const auto& c : e.counterfactuals.states) {
      cf.push_back(c.state);
      CHECK(c.action == isolating.act(c.state));
    }
    CHECK(cf == sorted(immediate_neighbors(f, seed)));
    CHECK(e.boundary.empty());
  }
}

TEST_CASE("converged taxi policy at s1: Pickup, region varies only D") {
  const auto env = taxi_model();
  const auto& f = env.factorization;
  const auto vi = value_iteration(env);
  const auto s1 = f.make_state({0, 0, 0, 2});
  const auto e = stache_exact(f, *vi.policy, s1);
  CHECK(e.region.seed_action() == taxi::Pickup);
  for (const auto& s : e.region.states()) {
    const auto changed = changed_factors(f, s1, s);
    CHECK((changed.empty() || changed == std::vector<std::string>{"D"}));
  }
  CHECK(e.region.size() == 4);
  CHECK(e.counterfactuals.min_distance == 1);
  for (const auto& c : e.counterfactuals.states) {
    CHECK(c.action <= taxi::West);
    const auto changed = changed_factors(f, s1, c.state);
    REQUIRE(changed.size() == 1);
    CHECK(changed[0] != "D");
  }
}

TEST_CASE("exact search matches the oracle on scrambled policies") {
  for (const auto& f : {toy_space(), taxi_model().factorization}) {
    for (std::uint64_t seed_rng : {1, 2, 3}) {
      // Few actions so regions are non-trivial.
      const auto policy = scrambled_policy(f, 2, seed_rng);
      const SpaceOracle oracle(f, *policy);
      for (const auto& seed : all_states(f)) {
        const auto e = stache_exact(f, *policy, seed);
        REQUIRE(e.region.sorted_states() == oracle.region(seed));
        const auto truth = oracle.min_counterfactuals(seed);
        REQUIRE(e.counterfactuals.min_distance == truth.min_distance);
        REQUIRE(e.counterfactuals.states == truth.states);
        const auto c = stache_cutoff(f, *policy, seed);
        REQUIRE(c.counterfactuals.min_distance == truth.min_distance);
        REQUIRE(c.counterfactuals.states == truth.states);
        for (const auto& s : c.region.states()) REQUIRE(oracle.action(s) == e.region.seed_action());
      }
    }
  }
}

TEST_CASE("every state is queried once and visits equal region plus boundary") {
  const auto f = taxi_model().factorization;
  const auto policy = scrambled_policy(f, 2, 17);
  for (const auto& seed : {f.make_state({0, 0, 0, 2}), f.make_state({3, 1, 4, 0})}) {
    for (bool batch : {false, true}) {
      const CountingPolicy counting(*policy);
      SearchConfig config;
      config.batch_layers = batch;
      const auto e = stache_exact(f, counting, seed, config);
      CHECK(counting.max_repeats() == 1);
      CHECK(e.stats.visited == e.region.size() + e.boundary.size() + e.counterfactuals.states.size());
      CHECK(e.stats.policy_queries == e.stats.visited);
      CHECK(counting.distinct() == e.stats.visited);
      CHECK((batch ? counting.singles() == 0 : counting.batches() == 0));
    }
  }
}

TEST_CASE("batched layers do not change the output") {
  const auto env = taxi_model();
  const auto& f = env.factorization;
  const auto policy = scrambled_policy(f, 3, 5);
  for (const auto& seed : all_states(f)) {
    for (auto mode : {SearchMode::exact, SearchMode::cutoff}) {
      SearchConfig batched;
      batched.batch_layers = true;
      const auto a = explanation_to_json(f, explain(f, *policy, seed, mode));
      const auto b = explanation_to_json(f, explain(f, *policy, seed, mode, batched));
      REQUIRE(a == b);
    }
  }
}

TEST_CASE("cutoff never visits beyond the minimal distance") {
  const auto f = taxi_model().factorization;
  const auto policy = scrambled_policy(f, 2, 99);
  for (const auto& seed : all_states(f)) {
    const auto c = stache_cutoff(f, *policy, seed);
    if (!c.counterfactuals.exists()) continue;
    REQUIRE(c.stats.max_visited_distance <= *c.counterfactuals.min_distance);
    REQUIRE(c.stats.policy_queries <= c.stats.visited);
    for (const auto& s : c.region.states()) REQUIRE(hybrid_distance(f, seed, s) <= *c.counterfactuals.min_distance);
    const auto e = stache_exact(f, *policy, seed);
    REQUIRE(c.region.size() <= e.region.size());
    if (c.region.size() < e.region.size()) REQUIRE(c.truncated_region);
  }
}

TEST_CASE("shortest invariant path") {
  const auto env = taxi_model();
  const auto& f = env.factorization;
  const auto vi = value_iteration(env);
  const auto seed = f.make_state({0, 1, 2, 1});
  const auto e = stache_exact(f, *vi.policy, seed);
  CHECK(shortest_invariant_path(e, seed) == std::vector<FactorState>{seed});
  for (std::size_t i = 0; i < e.region.size(); ++i) {
    const auto& target = e.region.states()[i];
    const auto path = shortest_invariant_path(e, target);
    REQUIRE(path.front() == seed);
    REQUIRE(path.back() == target);
    REQUIRE(static_cast<int>(path.size()) == e.region.depth(i) + 1);
    REQUIRE(std::set<FactorState>(path.begin(), path.end()).size() == path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
      REQUIRE(vi.policy->act(path[k]) == e.region.seed_action());
      if (k) REQUIRE(hybrid_distance(f, path[k - 1], path[k]) == 1);
    }
  }
  REQUIRE(e.counterfactuals.exists());
  CHECK_THROWS_AS(shortest_invariant_path(e, e.counterfactuals.states.front().state), NotInRegionError);

  const auto reread = explanation_from_json(f, explanation_to_json(f, e));
  CHECK_THROWS_AS(shortest_invariant_path(reread, seed), Error);
}

TEST_CASE("region cap raises with partial data") {
  const auto f = toy_space();
  const FunctionPolicy constant(f, [](const FactorState&) { return 0; });
  SearchConfig config;
  config.max_region = 7;
  try {
    stache_exact(f, constant, f.make_state({0, 0, 0}), config);
    FAIL("expected CappedResultError");
  } catch (const CappedResultError& e) {
    CHECK(e.partial().region.size() == 7);
  }
  config.max_region = 60;
  CHECK(stache_exact(f, constant, f.make_state({0, 0, 0}), config).region.size() == 60);
}

TEST_CASE("validity mask removes states and downgrades the scope") {
  const auto f = toy_space();
  const ValidityMask mask = [](const FactorState& s) { return s[0] != 2; };
  const FunctionPolicy policy(f, [](const FactorState& s) { return s[0] >= 3 ? 1 : 0; });
  SearchConfig config;
  config.mask = mask;
  const auto seed = f.make_state({0, 0, 0});
  const auto e = stache_exact(f, policy, seed, config);
  CHECK(e.scope == CounterfactualScope::connectivity);
  CHECK(e.region.size() == 24);
  CHECK_FALSE(e.counterfactuals.exists());
  for (const auto& s : e.region.states()) CHECK(s[0] < 2);

  OracleConfig oc;
  oc.mask = mask;
  CHECK(oracle_region(f, policy, seed, oc) == e.region.sorted_states());
  CHECK(oracle_min_counterfactuals(f, policy, seed, oc).min_distance == 3);

  CHECK_THROWS_AS(stache_exact(f, policy, f.make_state({2, 0, 0}), config), InvalidStateError);
  const auto doc = explanation_to_json(f, e);
  CHECK(doc["counterfactuals"]["scope"] == "connectivity-minimal");
}

TEST_CASE("failing and misbehaving policies surface as query errors") {
  const auto f = toy_space();
  const auto bad = f.make_state({1, 0, 0});
  const FunctionPolicy throwing(f, [bad](const FactorState& s) -> ActionId {
    if (s == bad) throw std::runtime_error("boom");
    return 0;
  });
  try {
    stache_exact(f, throwing, f.make_state({0, 0, 0}));
    FAIL("expected QueryError");
  } catch (const QueryError& e) {
    CHECK(e.state() == f.format(bad));
  }
  const FunctionPolicy negative(f, [](const FactorState& s) { return s[0] == 3 ? -1 : 0; });
  CHECK_THROWS_AS(stache_cutoff(f, negative, f.make_state({0, 0, 0})), QueryError);
  CHECK_THROWS_AS(stache_exact(f, negative, FactorState::unchecked({0, 9, 0})), InvalidStateError);
}

TEST_CASE("serialized explanations are sorted, stable and readable back") {
  const auto env = taxi_model();
  const auto& f = env.factorization;
  const auto policy = scrambled_policy(f, 2, 4);
  const auto seed = f.make_state({2, 3, 1, 0});
  ExplanationJsonOptions options;
  options.action_names = env.action_names;
  const auto e = stache_exact(f, *policy, seed);
  const auto text = explanation_to_json(f, e, options).dump(2);
  CHECK(text == explanation_to_json(f, stache_exact(f, *policy, seed), options).dump(2));

  const auto doc = Json::parse(text);
  CHECK(doc["schema"] == "stache-explanation/1");
  CHECK(doc["mode"] == "exact");
  CHECK_FALSE(doc["stats"].contains("wall_time_us"));
  std::vector<FactorState> listed;
  for (const auto& s : doc["region"]["states"]) listed.push_back(f.state_from_json(s));
  CHECK(std::is_sorted(listed.begin(), listed.end()));
  CHECK(listed.size() == e.region.size());

  const auto back = explanation_from_json(f, doc);
  CHECK(back.region.sorted_states() == e.region.sorted_states());
  CHECK(back.counterfactuals.states == e.counterfactuals.states);
  CHECK(back.boundary == e.boundary);
  CHECK(explanation_to_json(f, back, options) == doc);

  CHECK_THROWS_AS(explanation_from_json(minigrid_model().factorization, doc), FactorizationMismatchError);
  auto broken = doc;
  broken["schema"] = "nope";
  CHECK_THROWS_AS(explanation_from_json(f, broken), SchemaError);

  ExplanationJsonOptions timed = options;
  timed.include_timing = true;
  CHECK(explanation_to_json(f, e, timed)["stats"].contains("wall_time_us"));
}

TEST_CASE("search modes parse") {
  CHECK(parse_search_mode("exact") == SearchMode::exact);
  CHECK(parse_search_mode("cutoff") == SearchMode::cutoff);
  CHECK(to_string(SearchMode::cutoff) == "cutoff");
  CHECK_THROWS_AS(parse_search_mode("fast"), Error);
}
