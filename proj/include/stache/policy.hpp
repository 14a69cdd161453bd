#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stache/factored_space.hpp"

namespace stache {

using ActionId = int;

struct PolicyInfo {
  std::string name;
  std::string source;
  std::optional<double> checkpoint_tag;
};

/// Black-box deterministic map from states to action ids. Implementations
/// must return the same action for the same state on every call and must
/// answer for every state of the product space.
class Policy {
 public:
  Policy(Factorization factorization, PolicyInfo info)
      : factorization_(std::move(factorization)), info_(std::move(info)) {}
  virtual ~Policy() = default;

  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  virtual ActionId act(const FactorState& s) const = 0;
  /// Order-aligned with `states`. The default queries one state at a time.
  virtual std::vector<ActionId> act_batch(std::span<const FactorState> states) const;

  const Factorization& factorization() const noexcept { return factorization_; }
  const PolicyInfo& info() const noexcept { return info_; }

 private:
  Factorization factorization_;
  PolicyInfo info_;
};

using PolicyPtr = std::shared_ptr<const Policy>;

/// Dense lookup table indexed by the lexicographic rank of a state.
class TablePolicy final : public Policy {
 public:
  TablePolicy(Factorization factorization, std::vector<ActionId> actions, PolicyInfo info = {});

  ActionId act(const FactorState& s) const override;
  ActionId at_rank(std::uint64_t rank) const { return actions_.at(rank); }
  const std::vector<ActionId>& actions() const noexcept { return actions_; }

 private:
  std::vector<ActionId> actions_;
};

/// Adapts any callable. The callable must itself be deterministic.
class FunctionPolicy final : public Policy {
 public:
  using Fn = std::function<ActionId(const FactorState&)>;

  FunctionPolicy(Factorization factorization, Fn fn, PolicyInfo info = {})
      : Policy(std::move(factorization), std::move(info)), fn_(std::move(fn)) {}

  ActionId act(const FactorState& s) const override { return fn_(s); }

 private:
  Fn fn_;
};

/// Snapshot of any policy over the full product space.
std::shared_ptr<TablePolicy> tabulate(const Policy& policy, std::uint64_t cap = kDefaultSpaceCap);

/// Writes a `stache-policy/1` document. Entries are listed in lexicographic state order.
void save_policy_table(const TablePolicy& policy, const std::filesystem::path& path,
                       const std::vector<std::string>& action_names = {});
Json policy_table_to_json(const TablePolicy& policy, const std::vector<std::string>& action_names = {});

/// Reads a `stache-policy/1` document, keyed either by `entries` ([[values...], action])
/// or by `by_index` (dense list in lexicographic state order, i.e. native id order).
/// Throws IncompletePolicyError naming the first missing state, and
/// FactorizationMismatchError when `expected` is given and differs.
std::shared_ptr<TablePolicy> load_policy_table(const std::filesystem::path& path,
                                               const std::optional<Factorization>& expected = std::nullopt);
std::shared_ptr<TablePolicy> policy_table_from_json(const Json& doc,
                                                    const std::optional<Factorization>& expected = std::nullopt);

}  // namespace stache
