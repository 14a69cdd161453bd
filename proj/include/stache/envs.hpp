#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stache/factored_space.hpp"
#include "stache/policy.hpp"

namespace stache {

enum class EnvKind { taxi, minigrid };

struct Transition {
  FactorState next;
  double reward = 0.0;
  bool terminal = false;
};

/// Enumerable deterministic single-agent environment. Immutable once built.
struct EnvironmentModel {
  EnvKind kind;
  std::string name;
  Factorization factorization;
  std::vector<std::string> action_names;
  /// Total over the product space.
  std::function<Transition(const FactorState&, ActionId)> transition;
  double discount = 1.0;
  /// Support of the uniform reset distribution.
  std::vector<FactorState> initial_states;
  /// Per-episode step limit used by trainers and evaluation.
  int max_episode_steps = 200;

  std::size_t action_count() const noexcept { return action_names.size(); }

  /// Native environment id. Both built-in environments number states in
  /// lexicographic factor order, so this is the state's rank.
  std::uint64_t encode(const FactorState& s) const { return factorization.rank(s); }
  FactorState decode(std::uint64_t id) const { return factorization.unrank(id); }

  /// Closure of the initial states under every action. Terminal successors
  /// are included but not expanded. Sorted.
  std::vector<FactorState> reachable_states() const;
};

/// 5x5 Taxi with the standard walls and landmarks R=(0,0), G=(0,4), Y=(4,0), B=(4,3).
EnvironmentModel taxi_model();

/// Empty 6x6 room with a random goal; interior cells 1..4 on both axes.
EnvironmentModel minigrid_model();

EnvironmentModel make_environment(const std::string& name);

namespace taxi {
enum Action : ActionId { South = 0, North = 1, East = 2, West = 3, Pickup = 4, Dropoff = 5 };
inline constexpr int kInTaxi = 4;
}  // namespace taxi

namespace minigrid {
enum Action : ActionId { TurnLeft = 0, TurnRight = 1, MoveForward = 2 };
enum Direction : Code { Right = 0, Down = 1, Left = 2, Up = 3 };
inline constexpr Code kMin = 1;
inline constexpr Code kMax = 4;
}  // namespace minigrid

}  // namespace stache
