#include "stache/explanation_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace stache {

namespace {

constexpr const char* kExplanationSchema = "stache-explanation/1";

Json action_json(ActionId a, const std::vector<std::string>& names) {
  if (a >= 0 && static_cast<std::size_t>(a) < names.size()) return names[static_cast<std::size_t>(a)];
  return nullptr;
}

Json labeled_json(const Factorization& f, const FactorState& seed, const LabeledState& ls,
                  const std::vector<std::string>& names) {
  return Json{{"state", f.state_to_json(ls.state)},
              {"action", ls.action},
              {"action_name", action_json(ls.action, names)},
              {"distance", hybrid_distance(f, seed, ls.state)},
              {"changed_factors", changed_factors(f, seed, ls.state)}};
}

LabeledState labeled_from_json(const Factorization& f, const Json& doc) {
  return {f.state_from_json(doc.at("state")), doc.at("action").get<ActionId>()};
}

}  // namespace

std::vector<std::string> changed_factors(const Factorization& f, const FactorState& a, const FactorState& b) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (a[j] != b[j]) out.push_back(f[j].name());
  }
  return out;
}

Json explanation_to_json(const Factorization& f, const CompositeExplanation& e, const ExplanationJsonOptions& options) {
  const auto& names = options.action_names;
  const auto& seed = e.region.seed();

  Json region_states = Json::array();
  for (const auto& s : e.region.sorted_states()) region_states.push_back(f.state_to_json(s));

  Json cf_states = Json::array();
  for (const auto& c : e.counterfactuals.states) cf_states.push_back(labeled_json(f, seed, c, names));

  Json boundary = Json::array();
  for (const auto& b : e.boundary) boundary.push_back(labeled_json(f, seed, b, names));

  Json stats = {{"visited", e.stats.visited},
                {"enqueued", e.stats.enqueued},
                {"policy_queries", e.stats.policy_queries},
                {"max_visited_distance", e.stats.max_visited_distance}};
  if (options.include_timing) {
    stats["wall_time_us"] = std::chrono::duration_cast<std::chrono::microseconds>(e.stats.wall_time).count();
  }

  Json doc = {
      {"schema", kExplanationSchema},
      {"factorization", f.to_json()},
      {"mode", to_string(e.mode)},
      {"seed", f.state_to_json(seed)},
      {"seed_action", e.region.seed_action()},
      {"seed_action_name", action_json(e.region.seed_action(), names)},
      {"region", {{"size", e.region.size()}, {"truncated", e.truncated_region}, {"states", std::move(region_states)}}},
      {"counterfactuals",
       {{"exists", e.counterfactuals.exists()},
        {"min_distance", e.counterfactuals.min_distance ? Json(*e.counterfactuals.min_distance) : Json(nullptr)},
        {"scope", e.scope == CounterfactualScope::global ? "globally-minimal" : "connectivity-minimal"},
        {"count", e.counterfactuals.states.size()},
        {"states", std::move(cf_states)}}},
      {"boundary", std::move(boundary)},
      {"stats", std::move(stats)},
  };
  if (options.policy) {
    const auto& p = *options.policy;
    doc["policy"] = {{"name", p.name},
                     {"source", p.source},
                     {"checkpoint_tag", p.checkpoint_tag ? Json(*p.checkpoint_tag) : Json(nullptr)}};
  }
  return doc;
}

CompositeExplanation explanation_from_json(const Factorization& f, const Json& doc) {
  if (!doc.is_object() || doc.value("schema", "") != kExplanationSchema) {
    throw SchemaError(fmt::format("expected an explanation with schema '{}'", kExplanationSchema));
  }
  try {
    if (!(Factorization::from_json(doc.at("factorization")) == f)) {
      throw FactorizationMismatchError("explanation was produced for a different factorization");
    }
    CompositeExplanation e;
    e.mode = parse_search_mode(doc.at("mode").get<std::string>());
    auto seed = f.state_from_json(doc.at("seed"));
    e.region = RobustnessRegion(seed, doc.at("seed_action").get<ActionId>());
    for (const auto& s : doc.at("region").at("states")) e.region.add_unlinked(f.state_from_json(s));
    e.truncated_region = doc.at("region").value("truncated", false);
    const auto& cf = doc.at("counterfactuals");
    if (cf.at("min_distance").is_number_integer()) e.counterfactuals.min_distance = cf.at("min_distance").get<int>();
    for (const auto& c : cf.at("states")) e.counterfactuals.states.push_back(labeled_from_json(f, c));
    e.scope = cf.value("scope", "") == "connectivity-minimal" ? CounterfactualScope::connectivity
                                                               : CounterfactualScope::global;
    for (const auto& b : doc.at("boundary")) e.boundary.push_back(labeled_from_json(f, b));
    const auto& stats = doc.at("stats");
    e.stats.visited = stats.value("visited", std::size_t{0});
    e.stats.enqueued = stats.value("enqueued", std::size_t{0});
    e.stats.policy_queries = stats.value("policy_queries", std::size_t{0});
    e.stats.max_visited_distance = stats.value("max_visited_distance", 0);
    return e;
  } catch (const Json::exception& e) {
    throw SchemaError(fmt::format("malformed explanation document: {}", e.what()));
  }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw SchemaError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

}  // namespace stache
