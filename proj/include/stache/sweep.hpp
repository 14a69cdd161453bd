#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stache/envs.hpp"
#include "stache/search.hpp"
#include "stache/training.hpp"

namespace stache {

/// One (checkpoint, seed) entry of an evolution study.
struct SweepCell {
  std::string checkpoint;
  double tag = 0.0;
  FactorState seed;
  ActionId action = 0;
  std::size_t rr_size = 0;
  bool truncated = false;
  std::optional<int> cf_min_distance;
  std::size_t cf_count = 0;
  /// Factors that differ from the seed in at least one minimal counterfactual, in factor order.
  std::vector<std::string> cf_changed_factors;
  /// Distinct actions taken at the minimal counterfactuals, ascending.
  std::vector<ActionId> cf_actions;
};

struct SweepReport {
  std::string environment;
  SearchMode mode = SearchMode::exact;
  std::vector<std::string> checkpoints;
  std::vector<FactorState> seeds;
  /// Seed-major, checkpoints in manifest order.
  std::vector<SweepCell> cells;
};

struct SweepOptions {
  SearchMode mode = SearchMode::exact;
  SearchConfig search;
  /// Worker threads for independent cells. Output order does not depend on it.
  unsigned threads = 1;
};

SweepReport run_sweep(const EnvironmentModel& env, const CheckpointSet& checkpoints,
                      std::span<const FactorState> seeds, const SweepOptions& options = {});

std::string sweep_csv(const EnvironmentModel& env, const SweepReport& report);
Json sweep_json(const EnvironmentModel& env, const SweepReport& report);
/// One Metric x checkpoint table per seed: Action, RR Size and CF Logic rows.
std::string sweep_markdown(const EnvironmentModel& env, const SweepReport& report);

}  // namespace stache
