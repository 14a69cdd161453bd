#include "stache/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stache/explanation_io.hpp"

namespace stache {

namespace {

std::string action_label(const EnvironmentModel& env, ActionId a) {
  if (a >= 0 && static_cast<std::size_t>(a) < env.action_names.size()) return env.action_names[a];
  return std::to_string(a);
}

SweepCell make_cell(const EnvironmentModel& env, const Checkpoint& checkpoint, const FactorState& seed,
                    const SweepOptions& options) {
  const auto& f = env.factorization;
  const auto e = explain(f, *checkpoint.policy, seed, options.mode, options.search);

  SweepCell cell;
  cell.checkpoint = checkpoint_label(checkpoint.tag);
  cell.tag = checkpoint.tag;
  cell.seed = seed;
  cell.action = e.region.seed_action();
  cell.rr_size = e.region.size();
  cell.truncated = e.truncated_region;
  cell.cf_min_distance = e.counterfactuals.min_distance;
  cell.cf_count = e.counterfactuals.states.size();

  std::vector<bool> changed(f.size(), false);
  std::set<ActionId> actions;
  for (const auto& c : e.counterfactuals.states) {
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (c.state[j] != seed[j]) changed[j] = true;
    }
    actions.insert(c.action);
  }
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (changed[j]) cell.cf_changed_factors.push_back(f[j].name());
  }
  cell.cf_actions.assign(actions.begin(), actions.end());
  return cell;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string cf_logic(const EnvironmentModel& env, const SweepCell& cell) {
  if (!cell.cf_min_distance) return "none";
  std::vector<std::string> names;
  for (auto a : cell.cf_actions) names.push_back(action_label(env, a));
  return fmt::format("d={} ({}): {} -> {}", *cell.cf_min_distance, cell.cf_count, join(cell.cf_changed_factors, ", "),
                     join(names, ", "));
}

}  // namespace

SweepReport run_sweep(const EnvironmentModel& env, const CheckpointSet& checkpoints,
                      std::span<const FactorState> seeds, const SweepOptions& options) {
  SweepReport report;
  report.environment = env.name;
  report.mode = options.mode;
  for (const auto& c : checkpoints.checkpoints) report.checkpoints.push_back(checkpoint_label(c.tag));
  report.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& s : seeds) env.factorization.validate(s);

  const std::size_t per_seed = checkpoints.checkpoints.size();
  const std::size_t total = per_seed * seeds.size();
  report.cells.resize(total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        report.cells[i] = make_cell(env, checkpoints.checkpoints[i % per_seed], seeds[i / per_seed], options);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(total)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  spdlog::debug("sweep: {} cells over {} seeds", total, seeds.size());
  return report;
}

std::string sweep_csv(const EnvironmentModel& env, const SweepReport& report) {
  std::string out = "checkpoint,seed,action_name,rr_size,cf_min_distance,cf_count,cf_changed_factors\n";
  for (const auto& c : report.cells) {
    out += fmt::format("{},{},{},{},{},{},{}\n", csv_field(c.checkpoint),
                       csv_field(env.factorization.format(c.seed)), csv_field(action_label(env, c.action)),
                       c.rr_size, c.cf_min_distance ? std::to_string(*c.cf_min_distance) : std::string{},
                       c.cf_count, csv_field(join(c.cf_changed_factors, ";")));
  }
  return out;
}

Json sweep_json(const EnvironmentModel& env, const SweepReport& report) {
  const auto& f = env.factorization;
  Json seeds = Json::array();
  for (const auto& s : report.seeds) seeds.push_back(f.state_to_json(s));
  Json cells = Json::array();
  for (const auto& c : report.cells) {
    Json actions = Json::array();
    for (auto a : c.cf_actions) actions.push_back(action_label(env, a));
    cells.push_back(Json{{"checkpoint", c.checkpoint},
                         {"tag", c.tag},
                         {"seed", f.state_to_json(c.seed)},
                         {"action", c.action},
                         {"action_name", action_label(env, c.action)},
                         {"rr_size", c.rr_size},
                         {"truncated_region", c.truncated},
                         {"cf_min_distance", c.cf_min_distance ? Json(*c.cf_min_distance) : Json(nullptr)},
                         {"cf_count", c.cf_count},
                         {"cf_changed_factors", c.cf_changed_factors},
                         {"cf_actions", actions}});
  }
  return Json{{"schema", "stache-sweep/1"},
              {"environment", report.environment},
              {"mode", to_string(report.mode)},
              {"checkpoints", report.checkpoints},
              {"seeds", seeds},
              {"cells", cells}};
}

std::string sweep_markdown(const EnvironmentModel& env, const SweepReport& report) {
  std::string out;
  const std::size_t per_seed = report.checkpoints.size();
  for (std::size_t si = 0; si < report.seeds.size(); ++si) {
    if (si) out += '\n';
    out += fmt::format("### {} {}\n\n", report.environment, env.factorization.format(report.seeds[si]));
    out += "| Metric |";
    for (const auto& label : report.checkpoints) out += fmt::format(" {} |", label);
    out += "\n|---|";
    for (std::size_t k = 0; k < per_seed; ++k) out += "---|";
    out += '\n';

    std::string action = "| Action |", size = "| RR Size |", logic = "| CF Logic |";
    for (std::size_t k = 0; k < per_seed; ++k) {
      const auto& c = report.cells[si * per_seed + k];
      action += fmt::format(" {} |", action_label(env, c.action));
      size += fmt::format(" {}{} |", c.rr_size, c.truncated ? "+" : "");
      logic += fmt::format(" {} |", cf_logic(env, c));
    }
    out += action + "\n" + size + "\n" + logic + "\n";
  }
  return out;
}

}  // namespace stache
