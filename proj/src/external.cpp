#include "ctxmdp/external.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <json.hpp>

namespace ctxmdp {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void transport(const std::string& what) {
  throw SummarizerError(SummarizerError::Kind::Transport, what);
}

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { std::signal(SIGPIPE, SIG_IGN); });
}

int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

}  // namespace

std::string encode_request(const ExternalRequest& request) {
  json history = json::array();
  if (request.history != nullptr) {
    for (const auto& e : request.history->entries()) {
      history.push_back(json::array({e.state.index, e.action.index, e.reward}));
    }
  }
  json signal = json::array();
  for (const auto& t : request.signal) signal.push_back(t.symbol);
  json body = {{"history", std::move(history)},
               {"signal", std::move(signal)},
               {"token_cap", request.token_cap},
               {"mode", request.compress ? "compress" : "refresh"}};
  return body.dump() + "\n";
}

ExternalResult decode_response(const std::string& line, std::int64_t token_cap) {
  json body;
  try {
    body = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SummarizerError(SummarizerError::Kind::Malformed,
                          std::string("response is not valid JSON: ") + e.what());
  }
  if (!body.is_object() || !body.contains("tokens") || !body["tokens"].is_array()) {
    throw SummarizerError(SummarizerError::Kind::Malformed,
                          "response must be an object with a \"tokens\" array");
  }
  ExternalResult result;
  for (const auto& t : body["tokens"]) {
    if (!t.is_number_unsigned() && !(t.is_number_integer() && t.get<std::int64_t>() >= 0)) {
      throw SummarizerError(SummarizerError::Kind::Malformed,
                            "response tokens must be non-negative integers");
    }
    result.summary.tokens.push_back(Token{t.get<std::uint32_t>()});
  }
  const auto cap = static_cast<std::size_t>(token_cap);
  if (result.summary.tokens.size() > cap) {
    result.summary.tokens.resize(cap);
    result.over_budget = true;
  }
  return result;
}

ExternalBridge::ExternalBridge(std::string endpoint, int timeout_ms)
    : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {
  if (timeout_ms_ <= 0) throw std::invalid_argument("external timeout must be > 0 ms");
  ignore_sigpipe_once();
}

ExternalBridge::~ExternalBridge() { disconnect(); }

void ExternalBridge::connect() {
  if (endpoint_.rfind("exec:", 0) == 0) {
    const std::string command = endpoint_.substr(5);
    int to_child[2];
    int from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) transport("pipe failed: " + std::string(std::strerror(errno)));
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      transport("pipe failed: " + std::string(std::strerror(errno)));
    }
    const pid_t pid = fork();
    if (pid < 0) transport("fork failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    child_pid_ = pid;
    return;
  }
  if (endpoint_.rfind("tcp:", 0) == 0) {
    const std::string target = endpoint_.substr(4);
    const auto colon = target.rfind(':');
    if (colon == std::string::npos) transport("tcp endpoint must be tcp:<host>:<port>");
    const std::string host = target.substr(0, colon);
    const std::string port = target.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (getaddrinfo(host.c_str(), port.c_str(), &hints, &found) != 0 || found == nullptr) {
      transport("cannot resolve " + target);
    }
    int fd = -1;
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
    for (addrinfo* ai = found; ai != nullptr && fd < 0; ai = ai->ai_next) {
      fd = socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      const int flags = fcntl(fd, F_GETFL, 0);
      fcntl(fd, F_SETFL, flags | O_NONBLOCK);
      int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
      if (rc != 0 && errno == EINPROGRESS) {
        pollfd p{fd, POLLOUT, 0};
        if (poll(&p, 1, remaining_ms(deadline)) == 1) {
          int err = 0;
          socklen_t len = sizeof(err);
          getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
          rc = err == 0 ? 0 : -1;
        } else {
          rc = -1;
        }
      }
      if (rc != 0) {
        close(fd);
        fd = -1;
        continue;
      }
      fcntl(fd, F_SETFL, flags);
    }
    freeaddrinfo(found);
    if (fd < 0) transport("cannot connect to " + target);
    write_fd_ = fd;
    read_fd_ = fd;
    return;
  }
  transport("unsupported endpoint '" + endpoint_ + "' (expected exec:<cmd> or tcp:<host>:<port>)");
}

void ExternalBridge::disconnect() {
  if (write_fd_ >= 0) close(write_fd_);
  if (read_fd_ >= 0 && read_fd_ != write_fd_) close(read_fd_);
  write_fd_ = read_fd_ = -1;
  if (child_pid_ > 0) {
    int status = 0;
    // Closing stdin normally ends a well-behaved child; otherwise terminate it.
    for (int i = 0; i < 50; ++i) {
      if (waitpid(child_pid_, &status, WNOHANG) == child_pid_) {
        child_pid_ = -1;
        break;
      }
      usleep(2000);
    }
    if (child_pid_ > 0) {
      kill(child_pid_, SIGKILL);
      waitpid(child_pid_, &status, 0);
      child_pid_ = -1;
    }
  }
  pending_.clear();
}

void ExternalBridge::write_all(const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t n;
    if (child_pid_ > 0) {
      n = write(write_fd_, data.data() + sent, data.size() - sent);
    } else {
      n = send(write_fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      transport("write to external summarizer failed: " + std::string(std::strerror(errno)));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::string ExternalBridge::read_line() {
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
  for (;;) {
    if (auto nl = pending_.find('\n'); nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return line;
    }
    pollfd p{read_fd_, POLLIN, 0};
    const int ready = poll(&p, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) {
      throw SummarizerError(SummarizerError::Kind::Timeout,
                            "no response within " + std::to_string(timeout_ms_) + " ms");
    }
    char buf[4096];
    const ssize_t n = read(read_fd_, buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) transport("external summarizer closed the stream");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

ExternalResult ExternalBridge::call(const ExternalRequest& request) {
  if (write_fd_ < 0) connect();
  write_all(encode_request(request));
  return decode_response(read_line(), request.token_cap);
}

ExternalResult external_summarize(const std::string& endpoint, const ExternalRequest& request,
                                  int timeout_ms) {
  ExternalBridge bridge(endpoint, timeout_ms);
  return bridge.call(request);
}

std::string resolve_external_endpoint(const std::string& configured) {
  if (const char* env = std::getenv("CTXMDP_EXTERNAL_SUMMARIZER"); env != nullptr && *env != '\0') {
    return env;
  }
  return configured;
}

}  // namespace ctxmdp
