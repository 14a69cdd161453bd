#include <doctest.h>

#include "stache/error.hpp"
#include "stache/explanation_io.hpp"
#include "stache/training.hpp"
#include "support.hpp"

using namespace stache;
using namespace testing;

TEST_CASE("table policy save and load roundtrip") {
  const auto env = taxi_model();
  const auto policy = scrambled_policy(env.factorization, 6, 3);
  const auto dir = scratch_dir("policies");
  save_policy_table(*policy, dir / "p.json", env.action_names);
  const auto loaded = load_policy_table(dir / "p.json", env.factorization);
  CHECK(loaded->actions() == policy->actions());
  CHECK(loaded->info().name == "scrambled");
  for (const auto& s : all_states(env.factorization)) REQUIRE(loaded->act(s) == policy->act(s));

  const auto doc = read_json_file(dir / "p.json");
  CHECK(doc.at("schema") == "stache-policy/1");
  CHECK(doc.at("entries").size() == 500);
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing state is named") {
  const auto f = taxi_model().factorization;
  auto doc = policy_table_to_json(*scrambled_policy(f, 6, 5));
  doc["entries"].erase(doc["entries"].begin() + 7);
  try {
    policy_table_from_json(doc, f);
    FAIL("expected IncompletePolicyError");
  } catch (const IncompletePolicyError& e) {
    CHECK(std::string(e.what()).find(f.format(f.unrank(7))) != std::string::npos);
  }
}

TEST_CASE("factorization mismatch") {
  const auto doc = policy_table_to_json(*scrambled_policy(taxi_model().factorization, 6, 5));
  CHECK_THROWS_AS(policy_table_from_json(doc, minigrid_model().factorization), FactorizationMismatchError);
}

TEST_CASE("hand-written two-state table") {
  const auto doc = Json::parse(R"({
    "schema": "stache-policy/1",
    "factorization": {"schema": "stache-factorization/1",
                      "factors": [{"name": "flag", "kind": "categorical", "values": ["off", "on"]}]},
    "entries": [[["on"], 1], [["off"], 0]]
  })");
  const auto p = policy_table_from_json(doc);
  const auto& f = p->factorization();
  CHECK(p->act(f.parse_state("off")) == 0);
  CHECK(p->act(f.parse_state("on")) == 1);
}

TEST_CASE("dense by_index tables") {
  const auto f = minigrid_model().factorization;
  const auto policy = scrambled_policy(f, 3, 9);
  Json doc = {{"schema", "stache-policy/1"}, {"factorization", f.to_json()}, {"by_index", policy->actions()}};
  CHECK(policy_table_from_json(doc, f)->actions() == policy->actions());
  doc["by_index"].erase(doc["by_index"].end() - 1);
  CHECK_THROWS_AS(policy_table_from_json(doc, f), IncompletePolicyError);
}

TEST_CASE("schema and entry validation") {
  const auto f = taxi_model().factorization;
  auto doc = policy_table_to_json(*scrambled_policy(f, 6, 1));
  doc["schema"] = "other/1";
  CHECK_THROWS_AS(policy_table_from_json(doc), SchemaError);
  doc = policy_table_to_json(*scrambled_policy(f, 6, 1));
  doc["entries"][0][0][2] = 9;
  CHECK_THROWS_AS(policy_table_from_json(doc), Error);
}

TEST_CASE("table size must match the space") {
  const auto f = taxi_model().factorization;
  CHECK_THROWS_AS(TablePolicy(f, std::vector<ActionId>(499, 0)), IncompletePolicyError);
}

TEST_CASE("tabulating a function policy and querying twice") {
  const auto f = taxi_model().factorization;
  const FunctionPolicy fn(f, [](const FactorState& s) { return (s[0] + s[2]) % 6; });
  const auto table = tabulate(fn);
  for (const auto& s : all_states(f)) {
    REQUIRE(table->act(s) == fn.act(s));
    REQUIRE(table->act(s) == table->act(s));
  }
  const auto states = all_states(f);
  const auto batch = table->act_batch(states);
  for (std::size_t i = 0; i < states.size(); ++i) REQUIRE(batch[i] == table->act(states[i]));
}
