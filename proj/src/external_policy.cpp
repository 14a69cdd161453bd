#include "stache/external_policy.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stache/error.hpp"

namespace stache {

namespace {

using OrderedJson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static const bool once = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

/// Buffered reader/writer over a pair of file descriptors.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, std::string description)
      : read_fd_(read_fd), write_fd_(write_fd), description_(std::move(description)) {}

  void write_line(const std::string& line) override {
    std::string data = line + "\n";
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
      const ssize_t n = do_write(p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosedError(fmt::format("write to {} failed: {}", description_, std::strerror(errno)));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = Clock::now() + timeout;
    while (true) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (remaining.count() <= 0) return std::nullopt;
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosedError(fmt::format("poll on {} failed: {}", description_, std::strerror(errno)));
      }
      if (ready == 0) return std::nullopt;
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChannelClosedError(fmt::format("read from {} failed: {}", description_, std::strerror(errno)));
      }
      if (n == 0) throw ChannelClosedError(fmt::format("{} closed the connection", description_));
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string describe() const override { return description_; }

 protected:
  virtual ssize_t do_write(const char* p, std::size_t n) { return ::write(write_fd_, p, n); }

  int read_fd_;
  int write_fd_;
  std::string description_;
  std::string buffer_;
};

class ProcessChannel final : public FdChannel {
 public:
  ProcessChannel(int read_fd, int write_fd, pid_t pid, std::string command)
      : FdChannel(read_fd, write_fd, "endpoint '" + command + "'"), pid_(pid) {}

  ~ProcessChannel() override {
    ::close(write_fd_);
    // Give the child a moment to exit on EOF before killing it.
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) {
        ::close(read_fd_);
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    ::close(read_fd_);
  }

 private:
  pid_t pid_;
};

class SocketChannel final : public FdChannel {
 public:
  SocketChannel(int fd, std::string address) : FdChannel(fd, fd, "tcp endpoint " + address) {}
  ~SocketChannel() override { ::close(read_fd_); }

 protected:
  ssize_t do_write(const char* p, std::size_t n) override { return ::send(write_fd_, p, n, MSG_NOSIGNAL); }
};

}  // namespace

std::unique_ptr<LineChannel> spawn_process(const std::string& command) {
  ignore_sigpipe();
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) throw Error(fmt::format("pipe failed: {}", std::strerror(errno)));
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(fmt::format("pipe failed: {}", std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(fmt::format("fork failed: {}", std::strerror(errno)));
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<ProcessChannel>(from_child[0], to_child[1], pid, command);
}

std::unique_ptr<LineChannel> connect_tcp(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(fmt::format("tcp address '{}' must be HOST:PORT", address));
  const std::string host = address.substr(0, colon);
  const std::string port = address.substr(colon + 1);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &result); rc != 0) {
    throw Error(fmt::format("cannot resolve '{}': {}", address, ::gai_strerror(rc)));
  }
  int fd = -1;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd < 0) throw Error(fmt::format("cannot connect to '{}'", address));
  return std::make_unique<SocketChannel>(fd, address);
}

// ---------------------------------------------------------------------------
// ExternalPolicy

namespace {

OrderedJson scalar(const Json& value) {
  if (value.is_number_integer()) return value.get<std::int64_t>();
  return value.get<std::string>();
}

OrderedJson state_object(const Factorization& f, const FactorState& s) {
  OrderedJson object = OrderedJson::object();
  for (std::size_t j = 0; j < f.size(); ++j) object[f[j].name()] = scalar(f[j].value_to_json(s[j]));
  return object;
}

}  // namespace

ExternalPolicy::ExternalPolicy(Factorization factorization, std::unique_ptr<LineChannel> channel,
                               ExternalPolicyConfig config, PolicyInfo info)
    : Policy(std::move(factorization), std::move(info)), channel_(std::move(channel)), config_(config) {
  if (config_.action_count == 0) throw Error("external policy needs the number of actions");
  if (!config_.handshake) return;
  OrderedJson hello = {{"type", "hello"},
                       {"schema", kPolicyRpcSchema},
                       {"factorization", OrderedJson::parse(this->factorization().to_json().dump())}};
  channel_->write_line(hello.dump());
  ++messages_sent_;
  std::optional<std::string> line;
  try {
    line = channel_->read_line(config_.timeout);
  } catch (const ChannelClosedError& e) {
    throw Error(fmt::format("handshake failed: {}", e.what()));
  }
  if (!line) throw Error(fmt::format("handshake with {} timed out", channel_->describe()));
  Json reply;
  try {
    reply = Json::parse(*line);
  } catch (const Json::exception&) {
    throw Error(fmt::format("handshake reply is not JSON: {}", *line));
  }
  if (reply.contains("error")) {
    throw FactorizationMismatchError(fmt::format("endpoint rejected handshake: {}", reply["error"].dump()));
  }
  if (reply.value("type", "") != "ready") throw Error(fmt::format("unexpected handshake reply: {}", *line));
}

Json ExternalPolicy::exchange(const char* type, const char* key, const OrderedJson& payload,
                              const FactorState& context) const {
  const auto where = factorization().format(context);
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    const std::uint64_t id = next_id_++;
    const OrderedJson wire = {{"id", id}, {"type", type}, {key, payload}};
    try {
      channel_->write_line(wire.dump());
      ++messages_sent_;
      while (true) {
        auto line = channel_->read_line(config_.timeout);
        if (!line) break;  // timeout; retry if allowed
        Json reply;
        try {
          reply = Json::parse(*line);
        } catch (const Json::exception&) {
          throw QueryError(fmt::format("malformed response from {}: {}", channel_->describe(), *line), where);
        }
        if (!reply.is_object() || !reply.contains("id")) {
          throw QueryError(fmt::format("response without id from {}: {}", channel_->describe(), *line), where);
        }
        if (reply["id"] != id) {
          spdlog::debug("discarding stale response {}", *line);
          continue;
        }
        if (reply.contains("error")) {
          throw QueryError(fmt::format("endpoint reported error {}", reply["error"].dump()), where);
        }
        return reply;
      }
    } catch (const ChannelClosedError& e) {
      throw QueryError(fmt::format("endpoint unavailable: {}", e.what()), where);
    }
    spdlog::warn("request {} to {} timed out (attempt {} of {})", id, channel_->describe(), attempt + 1,
                 config_.retries + 1);
  }
  throw QueryError(fmt::format("no response from {} within {} ms", channel_->describe(), config_.timeout.count()),
                   where);
}

ActionId ExternalPolicy::validated(const Json& value, const FactorState& s) const {
  if (!value.is_number_integer()) {
    throw QueryError(fmt::format("action must be an integer, got {}", value.dump()), factorization().format(s));
  }
  const auto a = value.get<std::int64_t>();
  if (a < 0 || a >= static_cast<std::int64_t>(config_.action_count)) {
    throw QueryError(fmt::format("action {} outside [0, {})", a, config_.action_count), factorization().format(s));
  }
  return static_cast<ActionId>(a);
}

void ExternalPolicy::remember(const FactorState& s, ActionId action) const {
  auto [it, inserted] = cache_.emplace(s, action);
  if (!inserted && it->second != action) {
    throw DeterminismViolationError(
        fmt::format("endpoint answered {} after previously answering {}", action, it->second),
        factorization().format(s));
  }
}

ActionId ExternalPolicy::act(const FactorState& s) const {
  factorization().validate(s);
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(s); it != cache_.end() && !config_.revalidate_cache_hits) return it->second;
  auto reply = exchange("act", "state", state_object(factorization(), s), s);
  if (!reply.contains("action")) {
    throw QueryError(fmt::format("response lacks 'action': {}", reply.dump()), factorization().format(s));
  }
  const ActionId action = validated(reply["action"], s);
  remember(s, action);
  return action;
}

std::vector<ActionId> ExternalPolicy::act_batch(std::span<const FactorState> states) const {
  if (states.empty()) return {};
  for (const auto& s : states) factorization().validate(s);
  std::lock_guard lock(mutex_);

  std::vector<FactorState> pending;
  std::unordered_map<FactorState, std::size_t, FactorStateHash> pending_index;
  for (const auto& s : states) {
    if (!config_.revalidate_cache_hits && cache_.contains(s)) continue;
    if (pending_index.emplace(s, pending.size()).second) pending.push_back(s);
  }
  if (!pending.empty()) {
    OrderedJson list = OrderedJson::array();
    for (const auto& s : pending) list.push_back(state_object(factorization(), s));
    auto reply = exchange("act_batch", "states", list, pending.front());
    const auto it = reply.find("actions");
    if (it == reply.end() || !it->is_array() || it->size() != pending.size()) {
      throw QueryError(fmt::format("batch response is not aligned with {} states: {}", pending.size(), reply.dump()),
                       factorization().format(pending.front()));
    }
    for (std::size_t i = 0; i < pending.size(); ++i) remember(pending[i], validated((*it)[i], pending[i]));
  }
  std::vector<ActionId> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(cache_.at(s));
  return out;
}

std::size_t ExternalPolicy::messages_sent() const {
  std::lock_guard lock(mutex_);
  return messages_sent_;
}

std::size_t ExternalPolicy::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::shared_ptr<ExternalPolicy> open_external_policy(const std::string& endpoint, const Factorization& f,
                                                     const ExternalPolicyConfig& config) {
  std::unique_ptr<LineChannel> channel;
  if (endpoint.starts_with("exec:")) {
    channel = spawn_process(endpoint.substr(5));
  } else if (endpoint.starts_with("tcp:")) {
    channel = connect_tcp(endpoint.substr(4));
  } else {
    throw Error(fmt::format("external endpoint '{}' must start with exec: or tcp:", endpoint));
  }
  return std::make_shared<ExternalPolicy>(f, std::move(channel), config,
                                          PolicyInfo{.name = endpoint, .source = "external", .checkpoint_tag = {}});
}

}  // namespace stache
