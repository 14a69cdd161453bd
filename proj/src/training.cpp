#include "stache/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stache/error.hpp"

namespace stache {

namespace {

constexpr const char* kCheckpointSchema = "stache-checkpoints/1";

// Bit-level helpers over mt19937_64 so that seeded runs do not depend on the
// standard library's distribution implementations.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

/// Dense successor table over the product space.
struct TransitionTable {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<std::uint64_t> next;
  std::vector<double> reward;
  std::vector<char> terminal;

  explicit TransitionTable(const EnvironmentModel& model)
      : states(model.factorization.state_count()), actions(model.action_count()) {
    next.resize(states * actions);
    reward.resize(states * actions);
    terminal.resize(states * actions);
    std::size_t r = 0;
    for (const auto& s : enumerate_space(model.factorization)) {
      for (std::size_t a = 0; a < actions; ++a) {
        auto t = model.transition(s, static_cast<ActionId>(a));
        next[r * actions + a] = model.factorization.rank(t.next);
        reward[r * actions + a] = t.reward;
        terminal[r * actions + a] = t.terminal ? 1 : 0;
      }
      ++r;
    }
  }
};

std::shared_ptr<TablePolicy> greedy_table(const EnvironmentModel& model, const std::vector<double>& q,
                                          TieBreak tie, PolicyInfo info) {
  const auto n_actions = model.action_count();
  const auto n_states = model.factorization.state_count();
  std::vector<ActionId> actions(n_states);
  for (std::size_t r = 0; r < n_states; ++r) {
    actions[r] = greedy_action(std::span<const double>(q.data() + r * n_actions, n_actions), tie);
  }
  return std::make_shared<TablePolicy>(model.factorization, std::move(actions), std::move(info));
}

/// Random linear Q-function: bias per action plus one weight per numerical
/// factor (on the value rescaled to [0,1]) and one weight per categorical symbol.
std::vector<double> random_linear_q(const EnvironmentModel& model, double scale, double noise,
                                    std::mt19937_64& rng) {
  const auto& f = model.factorization;
  const auto n_actions = model.action_count();
  auto draw = [&] { return scale * (2.0 * uniform01(rng) - 1.0); };

  struct ActionWeights {
    double bias;
    std::vector<std::vector<double>> per_factor;
  };
  std::vector<ActionWeights> weights(n_actions);
  for (auto& w : weights) {
    w.bias = draw();
    for (std::size_t j = 0; j < f.size(); ++j) {
      const std::size_t n = f[j].is_numerical() ? 1 : f[j].domain_size();
      std::vector<double> v(n);
      for (auto& x : v) x = draw();
      w.per_factor.push_back(std::move(v));
    }
  }

  std::vector<double> q;
  q.reserve(f.state_count() * n_actions);
  for (const auto& s : enumerate_space(f)) {
    for (const auto& w : weights) {
      double value = w.bias;
      for (std::size_t j = 0; j < f.size(); ++j) {
        const auto& spec = f[j];
        if (spec.is_numerical()) {
          const double span = spec.max_code() - spec.min_code();
          value += w.per_factor[j][0] * (span > 0 ? (s[j] - spec.min_code()) / span : 0.0);
        } else {
          value += w.per_factor[j][static_cast<std::size_t>(s[j])];
        }
      }
      q.push_back(value);
    }
  }
  if (noise > 0.0) {
    for (auto& v : q) v += noise * draw();
  }
  return q;
}

}  // namespace

ActionId greedy_action(std::span<const double> q, TieBreak tie) {
  if (q.empty()) throw Error("greedy_action needs at least one action value");
  const double best = *std::max_element(q.begin(), q.end());
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (q[a] >= best - tie.tolerance) return static_cast<ActionId>(a);
  }
  return 0;
}

ValueIterationResult value_iteration(const EnvironmentModel& model, const ValueIterationConfig& config) {
  const TransitionTable table(model);
  const double gamma = model.discount;
  std::vector<double> v(table.states, 0.0);
  std::vector<double> q(table.states * table.actions, 0.0);

  ValueIterationResult result;
  for (int it = 1; it <= config.max_iterations; ++it) {
    double residual = 0.0;
    std::vector<double> updated(table.states);
    for (std::size_t r = 0; r < table.states; ++r) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < table.actions; ++a) {
        const auto i = r * table.actions + a;
        q[i] = table.reward[i] + (table.terminal[i] ? 0.0 : gamma * v[table.next[i]]);
        best = std::max(best, q[i]);
      }
      updated[r] = best;
      residual = std::max(residual, std::abs(best - v[r]));
    }
    v = std::move(updated);
    result.iterations = it;
    result.residual = residual;
    if (residual < config.tolerance) break;
  }
  if (result.residual >= config.tolerance) {
    throw TrainingError(fmt::format("value iteration did not converge in {} iterations (residual {})",
                                    config.max_iterations, result.residual));
  }
  // Final Q from the converged values.
  for (std::size_t r = 0; r < table.states; ++r) {
    for (std::size_t a = 0; a < table.actions; ++a) {
      const auto i = r * table.actions + a;
      q[i] = table.reward[i] + (table.terminal[i] ? 0.0 : gamma * v[table.next[i]]);
    }
  }
  spdlog::debug("value iteration on {} converged after {} sweeps", model.name, result.iterations);
  result.policy = greedy_table(model, q, config.tie_break,
                               PolicyInfo{.name = model.name + "-vi", .source = "value_iteration", .checkpoint_tag = {}});
  result.q = std::move(q);
  result.values = std::move(v);
  return result;
}

double evaluate_policy(const EnvironmentModel& model, const Policy& policy) {
  if (model.initial_states.empty()) return 0.0;
  double total = 0.0;
  for (const auto& start : model.initial_states) {
    FactorState s = start;
    for (int step = 0; step < model.max_episode_steps; ++step) {
      auto t = model.transition(s, policy.act(s));
      total += t.reward;
      if (t.terminal) break;
      s = std::move(t.next);
    }
  }
  return total / static_cast<double>(model.initial_states.size());
}

CheckpointSet q_learning_with_checkpoints(const EnvironmentModel& model, const QLearningConfig& config) {
  if (config.episodes < 0) throw Error("episode count must be non-negative");
  for (std::size_t i = 0; i < config.checkpoints.size(); ++i) {
    const double tag = config.checkpoints[i];
    if (!(tag >= 0.0 && tag <= 1.0) || (i > 0 && tag <= config.checkpoints[i - 1])) {
      throw Error("checkpoint fractions must be strictly increasing within [0, 1]");
    }
  }
  if (model.initial_states.empty()) throw Error("environment has no initial states");

  const TransitionTable table(model);
  const double gamma = model.discount;
  std::mt19937_64 rng(config.seed);
  std::vector<double> q = random_linear_q(model, config.init_scale, config.init_noise, rng);

  CheckpointSet set{.environment = model.name, .config = config, .checkpoints = {}};
  std::vector<int> due;
  for (double tag : config.checkpoints) due.push_back(static_cast<int>(std::lround(tag * config.episodes)));

  std::size_t next_checkpoint = 0;
  auto snapshot = [&](int completed) {
    while (next_checkpoint < due.size() && due[next_checkpoint] == completed) {
      const double tag = config.checkpoints[next_checkpoint];
      Checkpoint c;
      c.tag = tag;
      c.episodes_completed = completed;
      c.policy = greedy_table(model, q, TieBreak{},
                              PolicyInfo{.name = fmt::format("{}-q-{}", model.name, checkpoint_label(tag)),
                                         .source = "q_learning",
                                         .checkpoint_tag = tag});
      c.evaluation_return = evaluate_policy(model, *c.policy);
      spdlog::info("checkpoint {} after {} episodes: mean return {:.3f}", checkpoint_label(tag), completed,
                   c.evaluation_return);
      set.checkpoints.push_back(std::move(c));
      ++next_checkpoint;
    }
  };

  const auto n_actions = table.actions;
  for (int episode = 0; episode < config.episodes; ++episode) {
    snapshot(episode);
    std::uint64_t s = model.factorization.rank(
        model.initial_states[uniform_index(rng, model.initial_states.size())]);
    for (int step = 0; step < model.max_episode_steps; ++step) {
      const double* row = q.data() + s * n_actions;
      std::size_t a;
      if (uniform01(rng) < config.epsilon) {
        a = uniform_index(rng, n_actions);
      } else {
        a = static_cast<std::size_t>(greedy_action(std::span<const double>(row, n_actions)));
      }
      const auto i = s * n_actions + a;
      const auto next = table.next[i];
      double target = table.reward[i];
      if (!table.terminal[i]) {
        const double* next_row = q.data() + next * n_actions;
        target += gamma * *std::max_element(next_row, next_row + n_actions);
      }
      q[i] += config.learning_rate * (target - q[i]);
      if (table.terminal[i]) break;
      s = next;
    }
  }
  snapshot(config.episodes);
  return set;
}

std::string checkpoint_label(double tag) {
  return fmt::format("pi_{:g}%", std::round(tag * 1000.0) / 10.0);
}

Json QLearningConfig::to_json() const {
  return Json{{"episodes", episodes},   {"learning_rate", learning_rate}, {"epsilon", epsilon},
              {"init_scale", init_scale}, {"init_noise", init_noise}, {"checkpoints", checkpoints},     {"seed", seed}};
}

QLearningConfig QLearningConfig::from_json(const Json& doc) {
  QLearningConfig c;
  c.episodes = doc.value("episodes", c.episodes);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.epsilon = doc.value("epsilon", c.epsilon);
  c.init_scale = doc.value("init_scale", c.init_scale);
  c.init_noise = doc.value("init_noise", c.init_noise);
  c.checkpoints = doc.value("checkpoints", c.checkpoints);
  c.seed = doc.value("seed", c.seed);
  return c;
}

void save_checkpoints(const CheckpointSet& set, const EnvironmentModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json entries = Json::array();
  for (std::size_t i = 0; i < set.checkpoints.size(); ++i) {
    const auto& c = set.checkpoints[i];
    const auto file = fmt::format("checkpoint_{}.json", i);
    save_policy_table(*c.policy, dir / file, model.action_names);
    entries.push_back(Json{{"tag", c.tag},
                           {"label", checkpoint_label(c.tag)},
                           {"episodes_completed", c.episodes_completed},
                           {"evaluation_return", c.evaluation_return},
                           {"file", file}});
  }
  Json manifest = {{"schema", kCheckpointSchema},
                   {"environment", set.environment},
                   {"config", set.config.to_json()},
                   {"checkpoints", std::move(entries)}};
  std::ofstream out(dir / "checkpoints.json", std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write checkpoint manifest in '{}'", dir.string()));
  out << manifest.dump(2) << '\n';
}

CheckpointSet load_checkpoints(const std::filesystem::path& manifest, const EnvironmentModel& model) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open checkpoint manifest '{}'", manifest.string()));
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw SchemaError(fmt::format("checkpoint manifest is not valid JSON: {}", e.what()));
  }
  if (doc.value("schema", "") != kCheckpointSchema) {
    throw SchemaError(fmt::format("checkpoint manifest must declare schema '{}'", kCheckpointSchema));
  }
  if (doc.value("environment", "") != model.name) {
    throw FactorizationMismatchError(fmt::format("checkpoints were trained on '{}', not '{}'",
                                                 doc.value("environment", ""), model.name));
  }
  CheckpointSet set{.environment = model.name,
                    .config = QLearningConfig::from_json(doc.value("config", Json::object())),
                    .checkpoints = {}};
  const auto base = manifest.parent_path();
  double previous = -1.0;
  for (const auto& entry : doc.at("checkpoints")) {
    Checkpoint c;
    c.tag = entry.at("tag").get<double>();
    if (c.tag < 0.0 || c.tag > 1.0 || c.tag <= previous) {
      throw SchemaError("checkpoint tags must be strictly increasing within [0, 1]");
    }
    previous = c.tag;
    c.episodes_completed = entry.value("episodes_completed", 0);
    c.evaluation_return = entry.value("evaluation_return", 0.0);
    c.policy = load_policy_table(base / entry.at("file").get<std::string>(), model.factorization);
    set.checkpoints.push_back(std::move(c));
  }
  return set;
}

}  // namespace stache
