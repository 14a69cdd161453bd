#pragma once

#include <string>
#include <vector>

#include "stache/envs.hpp"
#include "stache/search.hpp"

namespace stache {

class RenderError : public Error {
 public:
  using Error::Error;
};

/// Fill colors per action id plus the fixed marker colors.
struct Palette {
  std::vector<std::string> actions;
  std::string empty = "#f2f2f2";
  std::string wall = "#404040";
  std::string counterfactual = "#d62728";
  std::string seed_marker = "#1f3fbf";
  std::string goal = "#2ca02c";

  const std::string& action_color(ActionId a) const;

  static Palette defaults();
  static Palette from_json(const Json& doc);
  Json to_json() const;
};

/// Taxi: a 5x4 lattice of 5x5 grids, one per (P, D) pair.
/// MiniGrid: one row of four direction grids per goal position that has a
/// member of the explanation, seed goal first. Output is byte-stable.
std::string render_svg(const EnvironmentModel& env, const CompositeExplanation& e,
                       const Palette& palette = Palette::defaults());

/// Same layout as characters: S seed, # region, * minimal counterfactual,
/// + other boundary counterfactual, . anything else.
std::string render_text(const EnvironmentModel& env, const CompositeExplanation& e);

}  // namespace stache
