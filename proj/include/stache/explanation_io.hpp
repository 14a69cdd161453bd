#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stache/policy.hpp"
#include "stache/search.hpp"

namespace stache {

struct ExplanationJsonOptions {
  /// Names indexed by action id; ids are always written, names only when given.
  std::vector<std::string> action_names;
  /// Wall time is excluded by default so that output stays byte-stable.
  bool include_timing = false;
  std::optional<PolicyInfo> policy;
};

/// `stache-explanation/1` document. State lists are sorted lexicographically on factor values.
Json explanation_to_json(const Factorization& f, const CompositeExplanation& e,
                         const ExplanationJsonOptions& options = {});

/// Reads an explanation back. Region members come back without BFS parent links.
/// Throws SchemaError on a wrong schema tag and FactorizationMismatchError when
/// the embedded factorization differs from `f`.
CompositeExplanation explanation_from_json(const Factorization& f, const Json& doc);

/// Names of the factors in which `a` and `b` differ, in factor order.
std::vector<std::string> changed_factors(const Factorization& f, const FactorState& a, const FactorState& b);

void write_json_file(const std::filesystem::path& path, const Json& doc);
Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace stache
