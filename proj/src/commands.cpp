#include "stache/commands.hpp"

#include <cstdlib>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "stache/explanation_io.hpp"
#include "stache/oracle.hpp"
#include "stache/render.hpp"
#include "stache/search.hpp"
#include "stache/sweep.hpp"
#include "stache/training.hpp"

namespace stache {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string env = "taxi";
  std::uint64_t seed_rng = QLearningConfig{}.seed;
  std::string out;
  std::string mode = "exact";
  std::optional<std::size_t> max_region;
  std::string policy;
  int timeout_ms = 10'000;
  int retries = 0;
};

struct TrainOptions {
  std::string method = "all";
  QLearningConfig q;
};

struct ExplainOptions {
  std::string state;
  bool batch = false;
  bool timing = false;
  std::string svg;
  bool text = false;
};

struct SweepCliOptions {
  std::string checkpoints;
  std::optional<std::string> seeds;
  unsigned threads = 1;
  QLearningConfig q;
};

struct VerifyOptions {
  std::string checkpoints;
  std::string seeds = "all";
};

struct RenderOptions {
  std::string explanation;
  std::string format = "svg";
  std::string palette;
};

std::string default_seeds(const EnvironmentModel& env) {
  return env.kind == EnvKind::taxi ? "0,0,0,2;0,1,2,1" : "1,2,1,4,4";
}

SearchConfig search_config(const GlobalOptions& g) {
  SearchConfig c;
  c.max_region = g.max_region;
  return c;
}

ExternalPolicyConfig external_config(const GlobalOptions& g, const EnvironmentModel& env) {
  ExternalPolicyConfig c;
  c.action_count = env.action_count();
  c.timeout = std::chrono::milliseconds(g.timeout_ms);
  c.retries = g.retries;
  return c;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
    spdlog::info("wrote {}", path);
  }
}

fs::path out_dir(const GlobalOptions& g) { return g.out.empty() ? fs::path("out") : fs::path(g.out); }

/// Share of states on which `a` picks the reference action, and share on
/// which it picks any action that is optimal under the reference Q-table.
std::pair<double, double> agreement(const EnvironmentModel& env, const Policy& a, const ValueIterationResult& vi,
                                    const std::vector<FactorState>& states) {
  const std::size_t n = env.action_count();
  std::size_t same = 0, optimal = 0;
  for (const auto& s : states) {
    const auto rank = env.factorization.rank(s);
    const ActionId act = a.act(s);
    if (act == vi.policy->at_rank(rank)) ++same;
    double best = vi.q[rank * n];
    for (std::size_t k = 1; k < n; ++k) best = std::max(best, vi.q[rank * n + k]);
    if (vi.q[rank * n + static_cast<std::size_t>(act)] >= best - 1e-6) ++optimal;
  }
  const double total = static_cast<double>(std::max<std::size_t>(states.size(), 1));
  return {same / total, optimal / total};
}

int cmd_train(const GlobalOptions& g, TrainOptions t) {
  const auto env = make_environment(g.env);
  const auto dir = out_dir(g);
  fs::create_directories(dir);
  Json report = {{"schema", "stache-train-report/1"}, {"environment", env.name}};

  const bool want_vi = t.method == "vi" || t.method == "all";
  const bool want_q = t.method == "qlearning" || t.method == "all";
  std::optional<ValueIterationResult> vi;
  if (want_vi || want_q) vi = value_iteration(env);
  if (want_vi) {
    save_policy_table(*vi->policy, dir / "vi.json", env.action_names);
    report["value_iteration"] = {{"iterations", vi->iterations},
                                 {"evaluation_return", evaluate_policy(env, *vi->policy)},
                                 {"file", "vi.json"}};
    spdlog::info("value iteration converged after {} iterations", vi->iterations);
  }
  if (want_q) {
    t.q.seed = g.seed_rng;
    const auto set = q_learning_with_checkpoints(env, t.q);
    save_checkpoints(set, env, dir / "checkpoints");
    const auto reachable = env.reachable_states();
    Json rows = Json::array();
    for (const auto& c : set.checkpoints) {
      const auto [same, optimal] = agreement(env, *c.policy, *vi, reachable);
      spdlog::info("{}: agrees with value iteration on {:.1f}% of reachable states ({:.1f}% optimal actions)",
                   checkpoint_label(c.tag), 100 * same, 100 * optimal);
      rows.push_back({{"label", checkpoint_label(c.tag)},
                      {"episodes_completed", c.episodes_completed},
                      {"evaluation_return", c.evaluation_return},
                      {"agreement_with_vi", same},
                      {"optimal_action_share", optimal}});
    }
    report["q_learning"] = {{"config", t.q.to_json()}, {"manifest", "checkpoints/checkpoints.json"},
                            {"checkpoints", rows}};
  }
  write_json_file(dir / "train_report.json", report);
  std::cout << fmt::format("trained {} policies for {} into {}\n", t.method, env.name, dir.string());
  return 0;
}

int cmd_explain(const GlobalOptions& g, const ExplainOptions& o) {
  const auto env = make_environment(g.env);
  const auto& f = env.factorization;
  if (g.policy.empty()) throw Error("explain needs --policy");
  const auto seed = f.parse_state(o.state);
  const auto policy = open_policy(g.policy, env, external_config(g, env));

  auto config = search_config(g);
  config.batch_layers = o.batch;
  const auto e = explain(f, *policy, seed, parse_search_mode(g.mode), config);

  ExplanationJsonOptions jo{.action_names = env.action_names, .include_timing = o.timing, .policy = policy->info()};
  emit(g.out, explanation_to_json(f, e, jo).dump(2) + "\n");
  if (!o.svg.empty()) emit(o.svg, render_svg(env, e));
  if (o.text) std::cerr << render_text(env, e);
  return 0;
}

CheckpointSet obtain_checkpoints(const EnvironmentModel& env, const std::string& manifest, QLearningConfig q,
                                 std::uint64_t seed) {
  if (!manifest.empty()) return load_checkpoints(manifest, env);
  q.seed = seed;
  return q_learning_with_checkpoints(env, q);
}

int cmd_sweep(const GlobalOptions& g, const SweepCliOptions& o) {
  const auto env = make_environment(g.env);
  const auto seeds = parse_state_list(env.factorization, o.seeds.value_or(default_seeds(env)));
  CheckpointSet set;
  if (!seeds.empty()) set = obtain_checkpoints(env, o.checkpoints, o.q, g.seed_rng);

  SweepOptions so;
  so.mode = parse_search_mode(g.mode);
  so.search = search_config(g);
  so.threads = o.threads;
  const auto report = run_sweep(env, set, seeds, so);

  const auto dir = out_dir(g);
  write_text_file(dir / "sweep.csv", sweep_csv(env, report));
  write_json_file(dir / "sweep.json", sweep_json(env, report));
  const auto md = sweep_markdown(env, report);
  write_text_file(dir / "sweep.md", md);
  std::cout << md;
  return 0;
}

struct Tally {
  std::size_t seeds = 0;
  std::size_t region_mismatches = 0;
  std::size_t exact_cf_mismatches = 0;
  std::size_t cutoff_cf_mismatches = 0;
  std::size_t path_failures = 0;
  std::size_t cutoff_overreach = 0;

  bool ok() const {
    return region_mismatches + exact_cf_mismatches + cutoff_cf_mismatches + path_failures + cutoff_overreach == 0;
  }
};

bool same_counterfactuals(const CounterfactualSet& a, const CounterfactualSet& b) {
  return a.min_distance == b.min_distance && a.states == b.states;
}

Tally verify_policy(const EnvironmentModel& env, const Policy& policy, const std::vector<FactorState>& seeds,
                    const SearchConfig& config) {
  const auto& f = env.factorization;
  const SpaceOracle oracle(f, policy);
  Tally t;
  for (const auto& seed : seeds) {
    ++t.seeds;
    const auto exact = stache_exact(f, policy, seed, config);
    const auto cutoff = stache_cutoff(f, policy, seed, config);
    if (exact.region.sorted_states() != oracle.region(seed)) ++t.region_mismatches;
    const auto truth = oracle.min_counterfactuals(seed);
    if (!same_counterfactuals(exact.counterfactuals, truth)) ++t.exact_cf_mismatches;
    if (!same_counterfactuals(cutoff.counterfactuals, truth)) ++t.cutoff_cf_mismatches;
    if (truth.min_distance && cutoff.stats.max_visited_distance > *truth.min_distance) ++t.cutoff_overreach;

    for (const auto& member : exact.region.states()) {
      const auto path = shortest_invariant_path(exact, member);
      bool valid = !path.empty() && path.front() == seed && path.back() == member;
      for (std::size_t i = 0; valid && i < path.size(); ++i) {
        valid = oracle.action(path[i]) == exact.region.seed_action() &&
                (i == 0 || hybrid_distance(f, path[i - 1], path[i]) == 1);
      }
      if (!valid) {
        ++t.path_failures;
        break;
      }
    }
  }
  return t;
}

int cmd_verify(const GlobalOptions& g, const VerifyOptions& o) {
  const auto env = make_environment(g.env);
  const auto& f = env.factorization;
  std::vector<FactorState> seeds;
  if (o.seeds == "all") {
    for (const auto& s : enumerate_space(f)) seeds.push_back(s);
  } else {
    seeds = parse_state_list(f, o.seeds);
  }

  std::vector<PolicyPtr> policies;
  if (!g.policy.empty()) policies.push_back(open_policy(g.policy, env, external_config(g, env)));
  if (!o.checkpoints.empty()) {
    for (auto& c : load_checkpoints(o.checkpoints, env).checkpoints) policies.push_back(c.policy);
  }
  if (policies.empty()) {
    policies.push_back(value_iteration(env).policy);
    QLearningConfig q;
    q.seed = g.seed_rng;
    for (auto& c : q_learning_with_checkpoints(env, q).checkpoints) policies.push_back(c.policy);
  }

  bool ok = true;
  Json rows = Json::array();
  for (const auto& p : policies) {
    const auto t = verify_policy(env, *p, seeds, search_config(g));
    ok = ok && t.ok();
    std::cout << fmt::format(
        "{} {}: {} seeds, region mismatches {}, exact CF mismatches {}, cutoff CF mismatches {}, "
        "path failures {}, cutoff overreach {}\n",
        t.ok() ? "PASS" : "FAIL", p->info().name, t.seeds, t.region_mismatches, t.exact_cf_mismatches,
        t.cutoff_cf_mismatches, t.path_failures, t.cutoff_overreach);
    rows.push_back({{"policy", p->info().name},
                    {"seeds", t.seeds},
                    {"region_mismatches", t.region_mismatches},
                    {"exact_cf_mismatches", t.exact_cf_mismatches},
                    {"cutoff_cf_mismatches", t.cutoff_cf_mismatches},
                    {"path_failures", t.path_failures},
                    {"cutoff_overreach", t.cutoff_overreach}});
  }
  if (!g.out.empty()) {
    write_json_file(g.out, Json{{"schema", "stache-verify/1"}, {"environment", env.name}, {"ok", ok},
                                {"policies", rows}});
  }
  return ok ? 0 : 1;
}

int cmd_render(const GlobalOptions& g, const RenderOptions& o) {
  const auto env = make_environment(g.env);
  const auto e = explanation_from_json(env.factorization, read_json_file(o.explanation));
  const Palette palette = o.palette.empty() ? Palette::defaults() : Palette::from_json(read_json_file(o.palette));
  if (o.format == "text") {
    emit(g.out, render_text(env, e));
  } else {
    emit(g.out, render_svg(env, e, palette));
  }
  return 0;
}

void add_search_options(CLI::App& sub, GlobalOptions& g) {
  sub.add_option("--mode", g.mode, "Search mode")->check(CLI::IsMember({"exact", "cutoff"}));
  sub.add_option("--max-region", g.max_region, "Abort when the region grows past this size");
}

void add_policy_options(CLI::App& sub, GlobalOptions& g) {
  sub.add_option("--policy", g.policy, "Policy file, vi, exec:CMD or tcp:HOST:PORT");
  sub.add_option("--timeout-ms", g.timeout_ms, "External policy reply timeout")->check(CLI::PositiveNumber);
  sub.add_option("--retries", g.retries, "External policy retries after a timeout")->check(CLI::NonNegativeNumber);
}

void add_q_options(CLI::App& sub, QLearningConfig& q) {
  sub.add_option("--episodes", q.episodes, "Q-learning episodes")->check(CLI::PositiveNumber);
  sub.add_option("--learning-rate", q.learning_rate, "Q-learning step size");
  sub.add_option("--epsilon", q.epsilon, "Exploration rate");
  sub.add_option("--init-scale", q.init_scale, "Scale of the random initial Q-function");
  sub.add_option("--init-noise", q.init_noise, "Per-entry noise of the initial Q-function, relative to its scale");
  sub.add_option("--checkpoint-tags", q.checkpoints, "Training fractions to snapshot")->delimiter(',');
}

}  // namespace

void configure_logging() {
  auto logger = spdlog::get("stache");
  if (!logger) {
    logger = spdlog::stderr_logger_mt("stache");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("STACHE_LOG"); env && *env) level = spdlog::level::from_str(env);
  spdlog::set_level(level);
}

PolicyPtr open_policy(const std::string& source, const EnvironmentModel& env, const ExternalPolicyConfig& external) {
  if (source.starts_with("exec:") || source.starts_with("tcp:")) {
    auto config = external;
    config.action_count = env.action_count();
    return open_external_policy(source, env.factorization, config);
  }
  if (source == "vi") return value_iteration(env).policy;
  return load_policy_table(source, env.factorization);
}

std::vector<FactorState> parse_state_list(const Factorization& f, const std::string& text) {
  std::vector<FactorState> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(';', start);
    if (end == std::string::npos) end = text.size();
    const auto token = text.substr(start, end - start);
    if (token.find_first_not_of(" \t") != std::string::npos) out.push_back(f.parse_state(token));
    start = end + 1;
  }
  return out;
}

int run_cli(int argc, const char* const* argv) {
  configure_logging();
  CLI::App app{"Robustness regions and minimal counterfactuals for policies over factored state spaces", "stache"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "stache 1.0.0");

  GlobalOptions g;
  app.add_option("--env", g.env, "Environment")->check(CLI::IsMember({"taxi", "minigrid"}));
  app.add_option("--seed-rng", g.seed_rng, "Training seed");
  app.add_option("--out", g.out, "Output path");
  add_search_options(app, g);
  add_policy_options(app, g);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train value-iteration and checkpointed Q-learning policies");
  train_cmd->add_option("--method", train.method, "Which trainer to run")
      ->check(CLI::IsMember({"vi", "qlearning", "all"}));
  add_q_options(*train_cmd, train.q);

  ExplainOptions explain_opts;
  auto* explain_cmd = app.add_subcommand("explain", "Compute a composite explanation for one state");
  explain_cmd->add_option("--state", explain_opts.state, "State literal, positional or name=value")->required();
  explain_cmd->add_flag("--batch", explain_opts.batch, "Query the policy one BFS layer at a time");
  explain_cmd->add_flag("--timing", explain_opts.timing, "Include wall time in the JSON");
  explain_cmd->add_option("--svg", explain_opts.svg, "Also render the explanation to this SVG file");
  explain_cmd->add_flag("--text", explain_opts.text, "Print a text rendering to stderr");

  SweepCliOptions sweep_opts;
  auto* sweep_cmd = app.add_subcommand("sweep", "Explain seed states across training checkpoints");
  sweep_cmd->add_option("--checkpoints", sweep_opts.checkpoints, "checkpoints.json manifest (trained when absent)");
  sweep_cmd->add_option("--seeds", sweep_opts.seeds, "Semicolon-separated state literals");
  sweep_cmd->add_option("--threads", sweep_opts.threads, "Worker threads")->check(CLI::PositiveNumber);
  add_q_options(*sweep_cmd, sweep_opts.q);

  VerifyOptions verify_opts;
  auto* verify_cmd = app.add_subcommand("verify", "Check both searches against the brute-force oracle");
  verify_cmd->add_option("--checkpoints", verify_opts.checkpoints, "checkpoints.json manifest");
  verify_cmd->add_option("--seeds", verify_opts.seeds, "'all' or semicolon-separated state literals");

  RenderOptions render_opts;
  auto* render_cmd = app.add_subcommand("render", "Draw an explanation as SVG or text");
  render_cmd->add_option("--explanation", render_opts.explanation, "Explanation JSON")->required();
  render_cmd->add_option("--format", render_opts.format, "Output format")->check(CLI::IsMember({"svg", "text"}));
  render_cmd->add_option("--palette", render_opts.palette, "Palette JSON");

  auto* factorization_cmd = app.add_subcommand("factorization", "Print the environment factorization");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) return cmd_train(g, train);
    if (*explain_cmd) return cmd_explain(g, explain_opts);
    if (*sweep_cmd) return cmd_sweep(g, sweep_opts);
    if (*verify_cmd) return cmd_verify(g, verify_opts);
    if (*render_cmd) return cmd_render(g, render_opts);
    if (*factorization_cmd) {
      emit(g.out, make_environment(g.env).factorization.to_json().dump(2) + "\n");
      return 0;
    }
  } catch (const QueryError& e) {
    spdlog::error("{} (state {})", e.what(), e.state());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"stache"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace stache
