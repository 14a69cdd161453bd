#pragma once

#include <string>
#include <vector>

#include "stache/envs.hpp"
#include "stache/external_policy.hpp"
#include "stache/policy.hpp"

namespace stache {

/// Entry point of the `stache` executable. Returns the process exit code.
int run_cli(int argc, const char* const* argv);
/// Same, with arguments given without the program name.
int run_cli(const std::vector<std::string>& args);

/// Applies STACHE_LOG (trace, debug, info, warn, error, off) to the stderr logger.
void configure_logging();

/// `exec:CMD`, `tcp:HOST:PORT`, `vi` (value iteration on the fly) or a stache-policy/1 file.
PolicyPtr open_policy(const std::string& source, const EnvironmentModel& env,
                      const ExternalPolicyConfig& external = {});

/// Semicolon-separated state literals; an empty string yields no states.
std::vector<FactorState> parse_state_list(const Factorization& f, const std::string& text);

}  // namespace stache
