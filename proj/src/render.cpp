#include "stache/render.hpp"

#include <algorithm>
#include <array>
#include <iterator>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

namespace stache {

namespace {

enum class Mark { none, region, seed, counterfactual, boundary };

struct Cell {
  Mark mark = Mark::none;
  ActionId action = 0;
};

class Membership {
 public:
  explicit Membership(const CompositeExplanation& e) {
    // Later insertions take precedence: boundary < counterfactual < region < seed.
    for (const auto& b : e.boundary) cells_[b.state] = {Mark::boundary, b.action};
    for (const auto& c : e.counterfactuals.states) cells_[c.state] = {Mark::counterfactual, c.action};
    for (const auto& s : e.region.states()) cells_[s] = {Mark::region, e.region.seed_action()};
    cells_[e.region.seed()] = {Mark::seed, e.region.seed_action()};
  }

  Cell at(const FactorState& s) const {
    auto it = cells_.find(s);
    return it == cells_.end() ? Cell{} : it->second;
  }

  std::vector<FactorState> members() const {
    std::vector<FactorState> out;
    for (const auto& [s, _] : cells_) out.push_back(s);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::unordered_map<FactorState, Cell, FactorStateHash> cells_;
};

char mark_char(Mark m) {
  switch (m) {
    case Mark::seed: return 'S';
    case Mark::region: return '#';
    case Mark::counterfactual: return '*';
    case Mark::boundary: return '+';
    case Mark::none: break;
  }
  return '.';
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string action_name(const EnvironmentModel& env, ActionId a) {
  if (a >= 0 && static_cast<std::size_t>(a) < env.action_names.size()) return env.action_names[a];
  return fmt::format("action {}", a);
}

void check_compatible(const EnvironmentModel& env, const CompositeExplanation& e) {
  const auto& f = env.factorization;
  auto check = [&](const FactorState& s) {
    if (!f.contains(s)) {
      throw RenderError(fmt::format("explanation state {} does not belong to the {} factorization", f.format(s),
                                    env.name));
    }
  };
  check(e.region.seed());
  for (const auto& s : e.region.states()) check(s);
  for (const auto& c : e.counterfactuals.states) check(c.state);
  for (const auto& b : e.boundary) check(b.state);
}

std::array<std::string, 2> summary_lines(const EnvironmentModel& env, const CompositeExplanation& e) {
  const auto& cf = e.counterfactuals;
  std::string second = fmt::format("region {} state{}{}", e.region.size(), e.region.size() == 1 ? "" : "s",
                                   e.truncated_region ? " (truncated)" : "");
  if (cf.exists()) {
    second += fmt::format(" | minimal counterfactuals {} at distance {}", cf.states.size(), *cf.min_distance);
  } else {
    second += " | no counterfactual in the connected search";
  }
  return {fmt::format("{} seed {} action {} ({})", env.name, env.factorization.format(e.region.seed()),
                      action_name(env, e.region.seed_action()), to_string(e.mode)),
          second};
}

class SvgWriter {
 public:
  SvgWriter(int width, int height) {
    out_ += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"monospace\">\n",
        width, height);
    out_ += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", width, height);
  }

  void text(int x, int y, int size, std::string_view body, std::string_view fill = "#000000",
            std::string_view extra = "") {
    out_ += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"{}\" fill=\"{}\"{}>{}</text>\n", x, y, size, fill,
                        extra, escape(body));
  }

  void rect(int x, int y, int w, int h, std::string_view fill, std::string_view extra = "") {
    out_ += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"{}/>\n", x, y, w, h, fill,
                        extra);
  }

  void line(int x1, int y1, int x2, int y2, std::string_view stroke, int width) {
    out_ += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"/>\n", x1,
                        y1, x2, y2, stroke, width);
  }

  void polygon(std::span<const std::array<int, 2>> points, std::string_view fill) {
    std::string pts;
    for (const auto& p : points) {
      if (!pts.empty()) pts += ' ';
      pts += fmt::format("{},{}", p[0], p[1]);
    }
    out_ += fmt::format("<polygon points=\"{}\" fill=\"{}\"/>\n", pts, fill);
  }

  void raw(std::string_view s) { out_ += s; }

  std::string finish() {
    out_ += "</svg>\n";
    return std::move(out_);
  }

 private:
  std::string out_;
};

void draw_cell(SvgWriter& svg, const Palette& palette, int x, int y, int size, const Cell& cell) {
  switch (cell.mark) {
    case Mark::none:
      svg.rect(x, y, size, size, palette.empty, " stroke=\"#ffffff\" stroke-width=\"1\"");
      break;
    case Mark::region:
    case Mark::seed:
      svg.rect(x, y, size, size, palette.action_color(cell.action), " stroke=\"#ffffff\" stroke-width=\"1\"");
      break;
    case Mark::counterfactual:
      svg.rect(x + 1, y + 1, size - 2, size - 2, palette.action_color(cell.action),
               fmt::format(" stroke=\"{}\" stroke-width=\"2\"", palette.counterfactual));
      break;
    case Mark::boundary:
      svg.rect(x + 1, y + 1, size - 2, size - 2, palette.action_color(cell.action),
               " fill-opacity=\"0.35\" stroke=\"#777777\" stroke-width=\"1\" stroke-dasharray=\"2,2\"");
      break;
  }
}

int legend_width(const EnvironmentModel& env) {
  int w = 0;
  for (const auto& name : env.action_names) w += 24 + 7 * static_cast<int>(name.size());
  return w + 14 + 7 * 10;
}

void draw_legend(SvgWriter& svg, const EnvironmentModel& env, const Palette& palette, int x, int y) {
  for (std::size_t a = 0; a < env.action_count(); ++a) {
    svg.rect(x, y, 10, 10, palette.action_color(static_cast<ActionId>(a)));
    svg.text(x + 14, y + 9, 10, env.action_names[a]);
    x += 24 + 7 * static_cast<int>(env.action_names[a].size());
  }
  svg.rect(x, y, 10, 10, "#ffffff", fmt::format(" stroke=\"{}\" stroke-width=\"2\"", palette.counterfactual));
  svg.text(x + 14, y + 9, 10, "minimal CF");
}

// ---------------------------------------------------------------------------
// Taxi

constexpr std::array<const char*, 5> kPassengerNames = {"R", "G", "Y", "B", "Taxi"};
constexpr std::array<const char*, 4> kLandmarkNames = {"R", "G", "Y", "B"};
constexpr std::array<std::array<int, 2>, 4> kLandmarks = {{{0, 0}, {0, 4}, {4, 0}, {4, 3}}};
// East-side walls as (row, col).
constexpr std::array<std::array<int, 2>, 6> kTaxiWalls = {{{0, 1}, {1, 1}, {3, 0}, {3, 2}, {4, 0}, {4, 2}}};

std::string taxi_svg(const EnvironmentModel& env, const CompositeExplanation& e, const Palette& palette) {
  constexpr int cell = 18, margin = 10, header = 40, title = 14, gap = 14, sub = 5 * cell, legend = 24;
  const int width = 2 * margin + std::max(4 * sub + 3 * gap, legend_width(env));
  const int height = margin + header + 5 * (title + sub + gap) + legend + margin;
  const Membership members(e);
  const auto lines = summary_lines(env, e);

  SvgWriter svg(width, height);
  svg.text(margin, margin + 12, 12, lines[0]);
  svg.text(margin, margin + 28, 11, lines[1]);

  for (Code p = 0; p < 5; ++p) {
    for (Code d = 0; d < 4; ++d) {
      const int x0 = margin + d * (sub + gap);
      const int y0 = margin + header + p * (title + sub + gap) + title;
      svg.text(x0, y0 - 4, 10, fmt::format("P={} D={}", kPassengerNames[p], kLandmarkNames[d]));
      for (Code row = 0; row < 5; ++row) {
        for (Code col = 0; col < 5; ++col) {
          const auto c = members.at(FactorState::unchecked({row, col, p, d}));
          const int x = x0 + col * cell, y = y0 + row * cell;
          draw_cell(svg, palette, x, y, cell, c);
          if (c.mark == Mark::seed) {
            svg.text(x + 5, y + 13, 11, "S", "#ffffff", " font-weight=\"bold\"");
          }
        }
      }
      for (std::size_t i = 0; i < kLandmarks.size(); ++i) {
        svg.text(x0 + kLandmarks[i][1] * cell + 1, y0 + kLandmarks[i][0] * cell + 7, 6, kLandmarkNames[i], "#333333");
      }
      for (const auto& [row, col] : kTaxiWalls) {
        const int x = x0 + (col + 1) * cell;
        svg.line(x, y0 + row * cell, x, y0 + (row + 1) * cell, palette.wall, 3);
      }
      svg.rect(x0, y0, sub, sub, "none", fmt::format(" stroke=\"{}\" stroke-width=\"1\"", palette.wall));
    }
  }
  draw_legend(svg, env, palette, margin, height - margin - legend + 8);
  return svg.finish();
}

std::string taxi_text(const EnvironmentModel& env, const CompositeExplanation& e) {
  const Membership members(e);
  const auto lines = summary_lines(env, e);
  std::string out = lines[0] + "\n" + lines[1] + "\n";
  for (Code p = 0; p < 5; ++p) {
    out += '\n';
    for (Code d = 0; d < 4; ++d) {
      out += fmt::format("{:<10}", fmt::format("P={} D={}", kPassengerNames[p], kLandmarkNames[d]));
      if (d < 3) out += "  ";
    }
    out += '\n';
    for (Code row = 0; row < 5; ++row) {
      for (Code d = 0; d < 4; ++d) {
        std::string line;
        for (Code col = 0; col < 5; ++col) {
          line += mark_char(members.at(FactorState::unchecked({row, col, p, d})).mark);
        }
        out += fmt::format("{:<10}", line);
        if (d < 3) out += "  ";
      }
      out += '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// MiniGrid

constexpr std::array<const char*, 4> kDirectionNames = {"Right", "Down", "Left", "Up"};

std::vector<std::array<Code, 2>> goal_groups(const CompositeExplanation& e, const Membership& members) {
  const auto& seed = e.region.seed();
  std::set<std::array<Code, 2>> goals;
  for (const auto& s : members.members()) goals.insert({s[3], s[4]});
  const std::array<Code, 2> seed_goal{seed[3], seed[4]};
  std::vector<std::array<Code, 2>> out{seed_goal};
  for (const auto& g : goals) {
    if (g != seed_goal) out.push_back(g);
  }
  return out;
}

std::string minigrid_svg(const EnvironmentModel& env, const CompositeExplanation& e, const Palette& palette) {
  constexpr int cell = 16, margin = 10, header = 40, title = 14, gap = 14, sub = 6 * cell, legend = 24;
  const Membership members(e);
  const auto groups = goal_groups(e, members);
  const auto& seed = e.region.seed();
  const int rows = static_cast<int>(groups.size());
  const int width = 2 * margin + std::max(4 * sub + 3 * gap, legend_width(env));
  const int height = margin + header + rows * (title + sub + gap) + legend + margin;
  const auto lines = summary_lines(env, e);

  SvgWriter svg(width, height);
  svg.text(margin, margin + 12, 12, lines[0]);
  svg.text(margin, margin + 28, 11, lines[1]);

  for (int g = 0; g < rows; ++g) {
    const auto [gx, gy] = groups[g];
    for (Code dir = 0; dir < 4; ++dir) {
      const int x0 = margin + dir * (sub + gap);
      const int y0 = margin + header + g * (title + sub + gap) + title;
      svg.text(x0, y0 - 4, 10, fmt::format("goal ({},{}) {}", gx, gy, kDirectionNames[dir]));
      for (Code y = 0; y < 6; ++y) {
        for (Code x = 0; x < 6; ++x) {
          const int px = x0 + x * cell, py = y0 + y * cell;
          if (x < minigrid::kMin || x > minigrid::kMax || y < minigrid::kMin || y > minigrid::kMax) {
            svg.rect(px, py, cell, cell, palette.wall);
            continue;
          }
          draw_cell(svg, palette, px, py, cell, members.at(FactorState::unchecked({x, y, dir, gx, gy})));
          if (x == gx && y == gy) {
            svg.rect(px + 2, py + 2, cell - 4, cell - 4, "none",
                     fmt::format(" stroke=\"{}\" stroke-width=\"2\"", palette.goal));
            svg.text(px + 4, py + 12, 9, "G", palette.goal, " font-weight=\"bold\"");
          }
        }
      }
      if (dir == seed[2] && gx == seed[3] && gy == seed[4]) {
        const int cx = x0 + seed[0] * cell + cell / 2;
        const int cy = y0 + seed[1] * cell + cell / 2;
        // Unit arrow pointing right, rotated by quarter turns.
        constexpr std::array<std::array<int, 2>, 3> kArrow = {{{6, 0}, {-5, -5}, {-5, 5}}};
        std::array<std::array<int, 2>, 3> pts{};
        for (std::size_t i = 0; i < kArrow.size(); ++i) {
          int ax = kArrow[i][0], ay = kArrow[i][1];
          for (Code r = 0; r < dir; ++r) {
            const int t = ax;
            ax = -ay;
            ay = t;
          }
          pts[i] = {cx + ax, cy + ay};
        }
        svg.polygon(pts, palette.seed_marker);
      }
    }
  }
  draw_legend(svg, env, palette, margin, height - margin - legend + 8);
  return svg.finish();
}

std::string minigrid_text(const EnvironmentModel& env, const CompositeExplanation& e) {
  const Membership members(e);
  const auto lines = summary_lines(env, e);
  std::string out = lines[0] + "\n" + lines[1] + "\n";
  for (const auto& [gx, gy] : goal_groups(e, members)) {
    out += '\n';
    for (Code dir = 0; dir < 4; ++dir) {
      out += fmt::format("{:<6}", fmt::format("{}", kDirectionNames[dir]));
      if (dir < 3) out += "  ";
    }
    out += fmt::format("  goal ({},{})\n", gx, gy);
    for (Code y = minigrid::kMin; y <= minigrid::kMax; ++y) {
      for (Code dir = 0; dir < 4; ++dir) {
        std::string line;
        for (Code x = minigrid::kMin; x <= minigrid::kMax; ++x) {
          const auto c = members.at(FactorState::unchecked({x, y, dir, gx, gy}));
          line += (c.mark == Mark::none && x == gx && y == gy) ? 'G' : mark_char(c.mark);
        }
        out += fmt::format("{:<6}", line);
        if (dir < 3) out += "  ";
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Palette

const std::string& Palette::action_color(ActionId a) const {
  static const std::string kFallback = "#7f7f7f";
  if (a >= 0 && static_cast<std::size_t>(a) < actions.size()) return actions[static_cast<std::size_t>(a)];
  return kFallback;
}

Palette Palette::defaults() {
  Palette p;
  p.actions = {"#1f77b4", "#ff7f0e", "#2ca02c", "#e377c2", "#8c564b", "#9467bd", "#bcbd22", "#17becf"};
  return p;
}

Palette Palette::from_json(const Json& doc) {
  Palette p = defaults();
  try {
    if (doc.contains("actions")) p.actions = doc.at("actions").get<std::vector<std::string>>();
    p.empty = doc.value("empty", p.empty);
    p.wall = doc.value("wall", p.wall);
    p.counterfactual = doc.value("counterfactual", p.counterfactual);
    p.seed_marker = doc.value("seed_marker", p.seed_marker);
    p.goal = doc.value("goal", p.goal);
  } catch (const Json::exception& e) {
    throw SchemaError(fmt::format("malformed palette: {}", e.what()));
  }
  return p;
}

Json Palette::to_json() const {
  return Json{{"actions", actions},         {"empty", empty},           {"wall", wall},
              {"counterfactual", counterfactual}, {"seed_marker", seed_marker}, {"goal", goal}};
}

std::string render_svg(const EnvironmentModel& env, const CompositeExplanation& e, const Palette& palette) {
  check_compatible(env, e);
  return env.kind == EnvKind::taxi ? taxi_svg(env, e, palette) : minigrid_svg(env, e, palette);
}

std::string render_text(const EnvironmentModel& env, const CompositeExplanation& e) {
  check_compatible(env, e);
  return env.kind == EnvKind::taxi ? taxi_text(env, e) : minigrid_text(env, e);
}

}  // namespace stache
