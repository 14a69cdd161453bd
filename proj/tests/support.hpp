#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "stache/envs.hpp"
#include "stache/factored_space.hpp"
#include "stache/policy.hpp"

namespace testing {

using namespace stache;

inline Factorization toy_space() {
  // 5 * 4 * 3 = 60 states: one numerical, one categorical, one numerical.
  return Factorization({FactorSpec::numerical("x", 0, 4), FactorSpec::categorical("c", {std::string("a"),
                                                                                      std::string("b"),
                                                                                      std::string("c"),
                                                                                      std::string("d")}),
                        FactorSpec::numerical("y", -1, 1)});
}

inline std::vector<FactorState> all_states(const Factorization& f) {
  std::vector<FactorState> out;
  for (const auto& s : enumerate_space(f)) out.push_back(s);
  return out;
}

inline FactorState random_state(const Factorization& f, std::mt19937_64& rng) {
  std::vector<Code> codes;
  for (const auto& spec : f.factors()) {
    std::uniform_int_distribution<Code> pick(spec.min_code(), spec.max_code());
    codes.push_back(pick(rng));
  }
  return f.make_state(std::move(codes));
}

// Reference metric written from the definition, without the library's helper.
inline int reference_distance(const Factorization& f, const FactorState& a, const FactorState& b) {
  int d = 0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (f[j].is_numerical()) {
      d += std::abs(a[j] - b[j]);
    } else {
      d += a[j] != b[j] ? 1 : 0;
    }
  }
  return d;
}

// Unweighted all-pairs shortest paths by Floyd-Warshall over an adjacency
// built from the unit-distance predicate.
inline std::vector<std::vector<int>> graph_distances(const Factorization& f) {
  const auto states = all_states(f);
  const std::size_t n = states.size();
  constexpr int kInf = 1 << 28;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, kInf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (reference_distance(f, states[i], states[j]) == 1) d[i][j] = 1;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    }
  }
  return d;
}

// Deterministic pseudo-random policy keyed on the state rank.
inline std::shared_ptr<TablePolicy> scrambled_policy(const Factorization& f, int actions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ActionId> table(f.state_count());
  for (auto& a : table) a = static_cast<ActionId>(rng() % static_cast<std::uint64_t>(actions));
  return std::make_shared<TablePolicy>(f, std::move(table), PolicyInfo{"scrambled", "test", {}});
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stache_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline bool update_golden() {
  const char* v = std::getenv("STACHE_UPDATE_GOLDEN");
  return v && *v && std::string(v) != "0";
}

// Compares `actual` against the golden file, or rewrites it when STACHE_UPDATE_GOLDEN is set.
inline bool matches_golden(const std::filesystem::path& golden, const std::string& actual) {
  if (update_golden()) {
    std::filesystem::create_directories(golden.parent_path());
    std::ofstream(golden, std::ios::binary) << actual;
    return true;
  }
  return std::filesystem::exists(golden) && slurp(golden) == actual;
}

}  // namespace testing
