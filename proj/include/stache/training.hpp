#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "stache/envs.hpp"
#include "stache/policy.hpp"

namespace stache {

/// Actions whose value lies within `tolerance` of the best are tied; the
/// lowest index among them wins.
struct TieBreak {
  double tolerance = 1e-9;
};

ActionId greedy_action(std::span<const double> q, TieBreak tie = {});

struct ValueIterationConfig {
  double tolerance = 1e-10;
  int max_iterations = 100'000;
  TieBreak tie_break{};
};

struct ValueIterationResult {
  std::shared_ptr<TablePolicy> policy;
  /// Row-major [rank][action].
  std::vector<double> q;
  std::vector<double> values;
  int iterations = 0;
  double residual = 0.0;
};

/// Synchronous value iteration over the full product space. Throws
/// TrainingError when the residual stays above tolerance after max_iterations.
ValueIterationResult value_iteration(const EnvironmentModel& model, const ValueIterationConfig& config = {});

struct QLearningConfig {
  int episodes = 5000;
  double learning_rate = 0.1;
  double epsilon = 0.1;
  /// Scale of the random initial Q-function.
  double init_scale = 1.0;
  /// Independent per-entry noise added to the initial Q-function, relative to init_scale.
  double init_noise = 3.0;
  std::vector<double> checkpoints = {0.0, 0.5, 1.0};
  std::uint64_t seed = 25;

  Json to_json() const;
  static QLearningConfig from_json(const Json& doc);
};

struct Checkpoint {
  double tag = 0.0;
  int episodes_completed = 0;
  /// Mean undiscounted return of the greedy policy from every initial state.
  double evaluation_return = 0.0;
  std::shared_ptr<TablePolicy> policy;
};

struct CheckpointSet {
  std::string environment;
  QLearningConfig config;
  std::vector<Checkpoint> checkpoints;
};

/// Seeded epsilon-greedy tabular Q-learning. The Q-table starts as a random
/// linear function of the factor values, so the tag-0 snapshot behaves like
/// an untrained function approximator. Snapshots use lowest-index tie-break.
CheckpointSet q_learning_with_checkpoints(const EnvironmentModel& model, const QLearningConfig& config);

/// Mean undiscounted return of `policy` over all initial states, each episode capped at max_episode_steps.
double evaluate_policy(const EnvironmentModel& model, const Policy& policy);

/// Label used in reports, e.g. "pi_50%".
std::string checkpoint_label(double tag);

/// Writes checkpoint_<pct>.json files and a checkpoints.json manifest into `dir`.
void save_checkpoints(const CheckpointSet& set, const EnvironmentModel& model, const std::filesystem::path& dir);
CheckpointSet load_checkpoints(const std::filesystem::path& manifest, const EnvironmentModel& model);

}  // namespace stache
