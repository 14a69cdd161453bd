#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "stache/error.hpp"
#include "stache/policy.hpp"

namespace stache {

inline constexpr const char* kPolicyRpcSchema = "stache-policy-rpc/1";

/// Bidirectional newline-delimited text channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Appends '\n'. Throws Error when the peer is gone.
  virtual void write_line(const std::string& line) = 0;
  /// Returns nullopt on timeout. Throws ChannelClosedError on end of stream.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;
  virtual std::string describe() const = 0;
};

class ChannelClosedError : public Error {
 public:
  using Error::Error;
};

/// Runs `command` through /bin/sh and talks to it over its stdin/stdout.
std::unique_ptr<LineChannel> spawn_process(const std::string& command);
/// Connects to "host:port".
std::unique_ptr<LineChannel> connect_tcp(const std::string& address);

struct ExternalPolicyConfig {
  std::size_t action_count = 0;
  std::chrono::milliseconds timeout{10'000};
  /// Extra attempts after a timeout.
  int retries = 0;
  bool handshake = true;
  /// Re-ask the endpoint on cache hits and compare, to catch non-deterministic endpoints.
  bool revalidate_cache_hits = false;
};

/// Client for the `stache-policy-rpc/1` JSON-lines protocol. Answers are
/// cached per state; a cached answer that changes raises
/// DeterminismViolationError. Concurrent callers are serialized.
class ExternalPolicy final : public Policy {
 public:
  ExternalPolicy(Factorization factorization, std::unique_ptr<LineChannel> channel, ExternalPolicyConfig config,
                 PolicyInfo info = {});

  ActionId act(const FactorState& s) const override;
  std::vector<ActionId> act_batch(std::span<const FactorState> states) const override;

  std::size_t messages_sent() const;
  std::size_t cache_size() const;

 private:
  Json exchange(const char* type, const char* key, const nlohmann::ordered_json& payload,
                const FactorState& context) const;
  ActionId validated(const Json& value, const FactorState& s) const;
  void remember(const FactorState& s, ActionId action) const;

  std::unique_ptr<LineChannel> channel_;
  ExternalPolicyConfig config_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<FactorState, ActionId, FactorStateHash> cache_;
  mutable std::uint64_t next_id_ = 1;
  mutable std::size_t messages_sent_ = 0;
};

/// `exec:COMMAND` or `tcp:HOST:PORT`.
std::shared_ptr<ExternalPolicy> open_external_policy(const std::string& endpoint, const Factorization& f,
                                                     const ExternalPolicyConfig& config);

}  // namespace stache
