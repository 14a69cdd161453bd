// Test double speaking the policy wire protocol over stdio or TCP, with
// switchable faults.
//
//   fake_policy_server [--table FILE | --constant N] [--fault MODE] [--tcp PORT]
//
// MODE: none, garbage, error, silent-once, exit, flip, out-of-range, stale,
// reject-hello, misaligned.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "stache/policy.hpp"

using stache::Json;

namespace {

struct Options {
  std::string table;
  int constant = 0;
  std::string fault = "none";
  std::optional<int> tcp_port;
};

class Server {
 public:
  explicit Server(Options options) : options_(std::move(options)) {
    if (!options_.table.empty()) table_ = stache::load_policy_table(options_.table);
  }

  // Returns false to stop serving.
  bool handle(const std::string& line, std::string& out) {
    Json request;
    try {
      request = Json::parse(line);
    } catch (const Json::exception&) {
      out = R"({"error":"malformed_request"})";
      return true;
    }
    const auto type = request.value("type", "");
    if (type == "hello") {
      if (options_.fault == "reject-hello") {
        out = R"({"type":"error","error":"factorization mismatch: rejected by test double"})";
      } else if (table_ && stache::Factorization::from_json(request.at("factorization")) != table_->factorization()) {
        out = R"({"type":"error","error":"factorization mismatch"})";
      } else {
        out = R"({"type":"ready"})";
      }
      return true;
    }
    const Json id = request.value("id", Json(nullptr));
    ++requests_;
    if (options_.fault == "exit") return false;
    if (options_.fault == "silent-once" && requests_ == 1) {
      out.clear();
      return true;
    }
    if (options_.fault == "garbage") {
      out = "this is not json";
      return true;
    }
    if (options_.fault == "error") {
      out = Json{{"id", id}, {"error", "unknown_state"}}.dump();
      return true;
    }
    std::string prefix;
    if (options_.fault == "stale") prefix = Json{{"id", -1}, {"action", 0}}.dump() + "\n";

    try {
      if (type == "act") {
        out = prefix + Json{{"id", id}, {"action", answer(request.at("state"))}}.dump();
      } else if (type == "act_batch") {
        Json actions = Json::array();
        for (const auto& s : request.at("states")) actions.push_back(answer(s));
        if (options_.fault == "misaligned" && !actions.empty()) actions.erase(actions.end() - 1);
        out = prefix + Json{{"id", id}, {"actions", actions}}.dump();
      } else {
        out = Json{{"id", id}, {"error", "unknown_type"}}.dump();
      }
    } catch (const std::exception&) {
      out = Json{{"id", id}, {"error", "unknown_state"}}.dump();
    }
    return true;
  }

 private:
  int answer(const Json& state) {
    int action = options_.constant;
    if (table_) action = table_->act(table_->factorization().state_from_object(state));
    if (options_.fault == "out-of-range") return 7;
    if (options_.fault == "flip") action += seen_[state.dump()]++ % 2;
    return action;
  }

  Options options_;
  std::shared_ptr<stache::TablePolicy> table_;
  std::map<std::string, int> seen_;
  int requests_ = 0;
};

int serve_stdio(Server& server) {
  std::string line, out;
  while (std::getline(std::cin, line)) {
    if (!server.handle(line, out)) return 0;
    if (!out.empty()) std::cout << out << "\n" << std::flush;
  }
  return 0;
}

int serve_tcp(Server& server, int port) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  const int yes = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listener, 1) != 0) {
    std::perror("bind");
    return 1;
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  std::cout << ntohs(addr.sin_port) << "\n" << std::flush;

  const int fd = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (fd < 0) return 1;
  std::string buffer, out;
  char chunk[4096];
  while (true) {
    const auto n = ::read(fd, chunk, sizeof chunk);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    for (auto pos = buffer.find('\n'); pos != std::string::npos; pos = buffer.find('\n')) {
      const auto line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!server.handle(line, out)) {
        ::close(fd);
        return 0;
      }
      if (out.empty()) continue;
      out += '\n';
      if (::send(fd, out.data(), out.size(), MSG_NOSIGNAL) < 0) break;
    }
  }
  ::close(fd);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options options;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i], value = argv[i + 1];
    if (flag == "--table") {
      options.table = value;
    } else if (flag == "--constant") {
      options.constant = std::stoi(value);
    } else if (flag == "--fault") {
      options.fault = value;
    } else if (flag == "--tcp") {
      options.tcp_port = std::stoi(value);
    } else {
      std::cerr << "unknown flag " << flag << "\n";
      return 2;
    }
  }
  try {
    Server server(options);
    return options.tcp_port ? serve_tcp(server, *options.tcp_port) : serve_stdio(server);
  } catch (const std::exception& e) {
    std::cerr << "fake_policy_server: " << e.what() << "\n";
    return 1;
  }
}
