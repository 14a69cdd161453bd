#include "stache/policy.hpp"

#include <fstream>

#include <fmt/format.h>

#include "stache/error.hpp"

namespace stache {

namespace {

constexpr const char* kPolicySchema = "stache-policy/1";

Json info_to_json(const PolicyInfo& info) {
  Json meta = {{"name", info.name}, {"source", info.source}};
  meta["checkpoint_tag"] = info.checkpoint_tag ? Json(*info.checkpoint_tag) : Json(nullptr);
  return meta;
}

PolicyInfo info_from_json(const Json& doc) {
  PolicyInfo info;
  auto it = doc.find("metadata");
  if (it == doc.end() || !it->is_object()) return info;
  info.name = it->value("name", "");
  info.source = it->value("source", "");
  if (auto tag = it->find("checkpoint_tag"); tag != it->end() && tag->is_number()) {
    info.checkpoint_tag = tag->get<double>();
  }
  return info;
}

}  // namespace

std::vector<ActionId> Policy::act_batch(std::span<const FactorState> states) const {
  std::vector<ActionId> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(act(s));
  return out;
}

TablePolicy::TablePolicy(Factorization factorization, std::vector<ActionId> actions, PolicyInfo info)
    : Policy(std::move(factorization), std::move(info)), actions_(std::move(actions)) {
  if (actions_.size() != this->factorization().state_count()) {
    throw IncompletePolicyError(fmt::format("policy table has {} entries, state space has {}",
                                            actions_.size(), this->factorization().state_count()));
  }
}

ActionId TablePolicy::act(const FactorState& s) const {
  return actions_[factorization().rank(s)];
}

std::shared_ptr<TablePolicy> tabulate(const Policy& policy, std::uint64_t cap) {
  std::vector<FactorState> states;
  for (const auto& s : enumerate_space(policy.factorization(), cap)) states.push_back(s);
  auto actions = policy.act_batch(states);
  return std::make_shared<TablePolicy>(policy.factorization(), std::move(actions), policy.info());
}

Json policy_table_to_json(const TablePolicy& policy, const std::vector<std::string>& action_names) {
  const auto& f = policy.factorization();
  Json entries = Json::array();
  std::uint64_t rank = 0;
  for (const auto& s : enumerate_space(f, f.state_count())) {
    entries.push_back(Json::array({f.state_to_json(s), policy.at_rank(rank++)}));
  }
  Json doc = {{"schema", kPolicySchema},
              {"factorization", f.to_json()},
              {"metadata", info_to_json(policy.info())},
              {"entries", std::move(entries)}};
  if (!action_names.empty()) doc["action_names"] = action_names;
  return doc;
}

void save_policy_table(const TablePolicy& policy, const std::filesystem::path& path,
                       const std::vector<std::string>& action_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write policy table '{}'", path.string()));
  out << policy_table_to_json(policy, action_names).dump() << '\n';
}

std::shared_ptr<TablePolicy> policy_table_from_json(const Json& doc, const std::optional<Factorization>& expected) {
  if (!doc.is_object() || doc.value("schema", "") != kPolicySchema) {
    throw SchemaError(fmt::format("policy table must declare schema '{}'", kPolicySchema));
  }
  if (!doc.contains("factorization")) throw SchemaError("policy table lacks a factorization");
  auto f = Factorization::from_json(doc.at("factorization"));
  if (expected && !(*expected == f)) {
    throw FactorizationMismatchError(fmt::format("policy factorization {} does not match expected {}",
                                                 f.to_json().dump(), expected->to_json().dump()));
  }
  constexpr ActionId kMissing = -1;
  std::vector<ActionId> actions(f.state_count(), kMissing);

  auto read_action = [](const Json& a) {
    if (!a.is_number_integer() || a.get<std::int64_t>() < 0) {
      throw SchemaError(fmt::format("action must be a non-negative integer, got {}", a.dump()));
    }
    return static_cast<ActionId>(a.get<std::int64_t>());
  };

  if (auto it = doc.find("by_index"); it != doc.end()) {
    if (!it->is_array()) throw SchemaError("'by_index' must be an array");
    if (it->size() > actions.size()) throw SchemaError("'by_index' has more entries than states");
    for (std::size_t i = 0; i < it->size(); ++i) actions[i] = read_action((*it)[i]);
  } else if (auto entries = doc.find("entries"); entries != doc.end() && entries->is_array()) {
    for (const auto& entry : *entries) {
      if (!entry.is_array() || entry.size() != 2) {
        throw SchemaError(fmt::format("policy entry must be [state, action], got {}", entry.dump()));
      }
      const auto s = f.state_from_json(entry[0]);
      actions[f.rank(s)] = read_action(entry[1]);
    }
  } else {
    throw SchemaError("policy table needs 'entries' or 'by_index'");
  }

  for (std::uint64_t r = 0; r < actions.size(); ++r) {
    if (actions[r] == kMissing) {
      throw IncompletePolicyError(fmt::format("policy table has no action for state {}", f.format(f.unrank(r))));
    }
  }
  return std::make_shared<TablePolicy>(std::move(f), std::move(actions), info_from_json(doc));
}

std::shared_ptr<TablePolicy> load_policy_table(const std::filesystem::path& path,
                                               const std::optional<Factorization>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open policy table '{}'", path.string()));
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw SchemaError(fmt::format("policy table '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return policy_table_from_json(doc, expected);
}

}  // namespace stache
