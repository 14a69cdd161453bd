#include "stache/envs.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <set>
#include <string_view>

#include <fmt/format.h>

#include "stache/error.hpp"

namespace stache {

std::vector<FactorState> EnvironmentModel::reachable_states() const {
  std::set<FactorState> seen(initial_states.begin(), initial_states.end());
  std::deque<FactorState> frontier(seen.begin(), seen.end());
  while (!frontier.empty()) {
    FactorState s = std::move(frontier.front());
    frontier.pop_front();
    for (ActionId a = 0; a < static_cast<ActionId>(action_count()); ++a) {
      auto t = transition(s, a);
      if (seen.insert(t.next).second && !t.terminal) frontier.push_back(t.next);
    }
  }
  return {seen.begin(), seen.end()};
}

// ---------------------------------------------------------------------------
// Taxi

namespace {

// Row strings of the classic map; a '|' between two cells is a wall.
constexpr std::array<std::string_view, 5> kTaxiMap = {
    "R: | : :G",
    " : | : : ",
    " : : : : ",
    " | : | : ",
    "Y| : |B: ",
};

constexpr std::array<std::array<Code, 2>, 4> kTaxiLandmarks = {{{0, 0}, {0, 4}, {4, 0}, {4, 3}}};

bool taxi_wall_east(Code row, Code col) { return col >= 4 || kTaxiMap[row][2 * col + 1] == '|'; }
bool taxi_wall_west(Code row, Code col) { return col <= 0 || kTaxiMap[row][2 * col - 1] == '|'; }

int landmark_at(Code row, Code col) {
  for (int i = 0; i < 4; ++i) {
    if (kTaxiLandmarks[i][0] == row && kTaxiLandmarks[i][1] == col) return i;
  }
  return -1;
}

Transition taxi_step(const Factorization& f, const FactorState& s, ActionId action) {
  f.validate(s);
  Code row = s[0], col = s[1], pass = s[2];
  const Code dest = s[3];
  double reward = -1.0;
  bool terminal = false;
  switch (action) {
    case taxi::South: row = std::min<Code>(row + 1, 4); break;
    case taxi::North: row = std::max<Code>(row - 1, 0); break;
    case taxi::East:
      if (!taxi_wall_east(row, col)) ++col;
      break;
    case taxi::West:
      if (!taxi_wall_west(row, col)) --col;
      break;
    case taxi::Pickup:
      if (pass < taxi::kInTaxi && landmark_at(row, col) == pass) {
        pass = taxi::kInTaxi;
      } else {
        reward = -10.0;
      }
      break;
    case taxi::Dropoff: {
      const int here = landmark_at(row, col);
      if (pass == taxi::kInTaxi && here == dest) {
        pass = dest;
        reward = 20.0;
        terminal = true;
      } else if (pass == taxi::kInTaxi && here >= 0) {
        pass = here;
      } else {
        reward = -10.0;
      }
      break;
    }
    default:
      throw Error(fmt::format("taxi has no action {}", action));
  }
  return {FactorState::unchecked({row, col, pass, dest}), reward, terminal};
}

}  // namespace

EnvironmentModel taxi_model() {
  Factorization f({
      FactorSpec::numerical("row", 0, 4),
      FactorSpec::numerical("col", 0, 4),
      FactorSpec::categorical_range("P", 5),
      FactorSpec::categorical_range("D", 4),
  });
  std::vector<FactorState> initial;
  for (Code row = 0; row < 5; ++row) {
    for (Code col = 0; col < 5; ++col) {
      for (Code p = 0; p < 4; ++p) {
        for (Code d = 0; d < 4; ++d) {
          if (p != d) initial.push_back(FactorState::unchecked({row, col, p, d}));
        }
      }
    }
  }
  EnvironmentModel model{
      .kind = EnvKind::taxi,
      .name = "taxi",
      .factorization = f,
      .action_names = {"South", "North", "East", "West", "Pickup", "Dropoff"},
      .transition = [f](const FactorState& s, ActionId a) { return taxi_step(f, s, a); },
      .discount = 0.99,
      .initial_states = std::move(initial),
      .max_episode_steps = 200,
  };
  return model;
}

// ---------------------------------------------------------------------------
// MiniGrid

namespace {

constexpr std::array<std::array<Code, 2>, 4> kForward = {{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};

Transition minigrid_step(const Factorization& f, const FactorState& s, ActionId action) {
  f.validate(s);
  Code x = s[0], y = s[1], dir = s[2];
  const Code gx = s[3], gy = s[4];
  if (x == gx && y == gy) return {s, 0.0, true};
  double reward = 0.0;
  bool terminal = false;
  switch (action) {
    case minigrid::TurnLeft: dir = (dir + 3) % 4; break;
    case minigrid::TurnRight: dir = (dir + 1) % 4; break;
    case minigrid::MoveForward: {
      const Code nx = x + kForward[dir][0];
      const Code ny = y + kForward[dir][1];
      if (nx >= minigrid::kMin && nx <= minigrid::kMax && ny >= minigrid::kMin && ny <= minigrid::kMax) {
        x = nx;
        y = ny;
      }
      if (x == gx && y == gy) {
        reward = 1.0;
        terminal = true;
      }
      break;
    }
    default:
      throw Error(fmt::format("minigrid has no action {}", action));
  }
  return {FactorState::unchecked({x, y, dir, gx, gy}), reward, terminal};
}

}  // namespace

EnvironmentModel minigrid_model() {
  Factorization f({
      FactorSpec::numerical("agent_x", minigrid::kMin, minigrid::kMax),
      FactorSpec::numerical("agent_y", minigrid::kMin, minigrid::kMax),
      FactorSpec::categorical_range("dir", 4),
      FactorSpec::numerical("goal_x", minigrid::kMin, minigrid::kMax),
      FactorSpec::numerical("goal_y", minigrid::kMin, minigrid::kMax),
  });
  std::vector<FactorState> initial;
  for (const auto& s : enumerate_space(f)) {
    if (s[0] != s[3] || s[1] != s[4]) initial.push_back(s);
  }
  EnvironmentModel model{
      .kind = EnvKind::minigrid,
      .name = "minigrid",
      .factorization = f,
      .action_names = {"TurnLeft", "TurnRight", "MoveForward"},
      .transition = [f](const FactorState& s, ActionId a) { return minigrid_step(f, s, a); },
      .discount = 0.9,
      .initial_states = std::move(initial),
      .max_episode_steps = 144,
  };
  return model;
}

EnvironmentModel make_environment(const std::string& name) {
  if (name == "taxi") return taxi_model();
  if (name == "minigrid") return minigrid_model();
  throw Error(fmt::format("unknown environment '{}' (expected taxi or minigrid)", name));
}

}  // namespace stache
