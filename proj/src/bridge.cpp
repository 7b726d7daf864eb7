#include "dnaadv/bridge.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dnaadv/error.hpp"

namespace dnaadv {

using nlohmann::json;

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::string errno_text() { return std::strerror(errno); }

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

}  // namespace

Endpoint Endpoint::parse(std::string_view descriptor) {
  Endpoint e;
  if (descriptor.starts_with("exec:")) {
    e.transport = Transport::Exec;
    e.command = std::string(descriptor.substr(5));
    if (e.command.empty()) throw Error(ErrorKind::InvalidConfig, "empty exec command");
    return e;
  }
  if (descriptor.starts_with("tcp:")) {
    const std::string_view rest = descriptor.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw Error(ErrorKind::InvalidConfig, "tcp endpoint needs host:port");
    }
    e.transport = Transport::Tcp;
    e.host = std::string(rest.substr(0, colon));
    int port = 0;
    try {
      port = std::stoi(std::string(rest.substr(colon + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, "bad port in " + std::string(descriptor));
    }
    if (port < 1 || port > 65535) throw Error(ErrorKind::InvalidConfig, "port out of range");
    e.port = static_cast<std::uint16_t>(port);
    return e;
  }
  throw Error(ErrorKind::InvalidConfig, "endpoint must start with exec: or tcp: (got '" + std::string(descriptor) + "')");
}

std::string Endpoint::str() const {
  if (transport == Transport::Exec) return "exec:" + command;
  return "tcp:" + host + ":" + std::to_string(port);
}

LineChannel::LineChannel(int read_fd, int write_fd, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns_fds) {}

LineChannel::~LineChannel() {
  if (!owns_) return;
  if (write_fd_ >= 0) ::close(write_fd_);
  if (read_fd_ >= 0 && read_fd_ != write_fd_) ::close(read_fd_);
}

void LineChannel::write_line(const std::string& line) {
  std::string data = line;
  data.push_back('\n');
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::ProtocolError, "write failed: " + errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
}

bool LineChannel::read_line(std::string& line, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::ProtocolError, "poll failed: " + errno_text());
    }
    if (ready == 0) throw Error(ErrorKind::Timeout, "no response within " + std::to_string(timeout.count()) + " ms");
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorKind::ProtocolError, "read failed: " + errno_text());
    }
    if (n == 0) {
      if (buffer_.empty()) return false;
      buffer_.clear();
      throw Error(ErrorKind::ProtocolError, "stream closed mid-line");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ExternalOracle::ExternalOracle(const Endpoint& endpoint, const BridgeOptions& options)
    : endpoint_(endpoint), options_(options) {
  if (options_.num_classes < 2) throw Error(ErrorKind::InvalidConfig, "bridge needs at least two classes");
  if (options_.max_batch == 0) throw Error(ErrorKind::InvalidConfig, "max_batch must be >= 1");
  ignore_sigpipe();
  if (endpoint_.transport == Endpoint::Transport::Exec) {
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error(ErrorKind::ConnectFailed, "pipe: " + errno_text());
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error(ErrorKind::ConnectFailed, "pipe: " + errno_text());
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorKind::ConnectFailed, "fork: " + errno_text());
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", endpoint_.command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    child_pid_ = pid;
    channel_ = std::make_unique<LineChannel>(from_child[0], to_child[1]);
    return;
  }
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint_.port);
  if (::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorKind::ConnectFailed, "cannot resolve " + endpoint_.host);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorKind::ConnectFailed, "cannot connect to " + endpoint_.str());
  channel_ = std::make_unique<LineChannel>(fd, fd);
}

ExternalOracle::~ExternalOracle() {
  channel_.reset();  // closing the sidecar's stdin asks it to exit
  if (child_pid_ > 0) {
    for (int i = 0; i < 100; ++i) {
      int status = 0;
      if (::waitpid(child_pid_, &status, WNOHANG) == child_pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(child_pid_, SIGKILL);
    ::waitpid(child_pid_, nullptr, 0);
  }
}

std::vector<Probs> ExternalOracle::request(std::span<const DnaSequence> batch) const {
  const std::int64_t id = next_id_++;
  json req;
  req["id"] = id;
  req["op"] = "predict";
  json seqs = json::array();
  for (const auto& s : batch) seqs.push_back(s.str());
  req["sequences"] = std::move(seqs);
  channel_->write_line(req.dump());

  std::string line;
  for (;;) {
    if (!channel_->read_line(line, options_.timeout)) {
      int status = 0;
      if (child_pid_ > 0 && ::waitpid(child_pid_, &status, WNOHANG) == child_pid_ && WIFEXITED(status) &&
          WEXITSTATUS(status) == 127) {
        throw Error(ErrorKind::ConnectFailed, "sidecar could not start: " + endpoint_.command);
      }
      throw Error(ErrorKind::ProtocolError, "server closed the stream");
    }
    json resp;
    try {
      resp = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(ErrorKind::ProtocolError, "malformed response line");
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer()) {
      throw Error(ErrorKind::ProtocolError, "response without integer id");
    }
    const auto rid = resp["id"].get<std::int64_t>();
    if (rid < id) continue;  // late answer to a request that timed out
    if (rid != id) throw Error(ErrorKind::ProtocolError, "response id " + std::to_string(rid) + " unexpected");
    if (resp.contains("error")) {
      throw Error(ErrorKind::ProtocolError, "server error: " + resp["error"].dump());
    }
    const json& probs = resp.value("probs", json());
    if (!probs.is_array() || probs.size() != batch.size()) {
      throw Error(ErrorKind::ProtocolError, "response holds the wrong number of probability vectors");
    }
    std::vector<Probs> out;
    out.reserve(batch.size());
    for (const json& row : probs) {
      if (!row.is_array() || row.size() != static_cast<std::size_t>(options_.num_classes)) {
        throw Error(ErrorKind::ProtocolError, "probability vector of wrong length");
      }
      Probs p;
      for (const json& v : row) {
        if (!v.is_number()) throw Error(ErrorKind::ProtocolError, "non-numeric probability");
        p.push_back(v.get<double>());
      }
      out.push_back(std::move(p));
    }
    return out;
  }
}

std::vector<Probs> ExternalOracle::predict_batch(std::span<const DnaSequence> batch) const {
  std::lock_guard lock(mutex_);
  std::vector<Probs> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); i += options_.max_batch) {
    auto part = request(batch.subspan(i, std::min(options_.max_batch, batch.size() - i)));
    for (auto& p : part) out.push_back(std::move(p));
  }
  return out;
}

std::unique_ptr<ExternalOracle> connect_external(const Endpoint& endpoint, const BridgeOptions& options) {
  return std::make_unique<ExternalOracle>(endpoint, options);
}

std::unique_ptr<ExternalOracle> connect_external(std::string_view descriptor, const BridgeOptions& options) {
  return connect_external(Endpoint::parse(descriptor), options);
}

std::string handle_bridge_request(const ProbOracle& oracle, const std::string& line) {
  json id = nullptr;
  try {
    const json req = json::parse(line);
    if (!req.is_object()) throw std::runtime_error("request must be an object");
    if (req.contains("id")) id = req["id"];
    if (req.value("op", std::string()) != "predict") throw std::runtime_error("unsupported op");
    const json& seqs = req.at("sequences");
    if (!seqs.is_array()) throw std::runtime_error("sequences must be an array");
    std::vector<DnaSequence> batch;
    batch.reserve(seqs.size());
    for (const json& s : seqs) batch.push_back(DnaSequence::parse_query(s.get<std::string>()));
    json probs = json::array();
    for (const auto& p : oracle.predict(batch)) probs.push_back(p);
    return json{{"id", id}, {"probs", std::move(probs)}}.dump();
  } catch (const std::exception& e) {
    return json{{"id", id}, {"error", e.what()}}.dump();
  }
}

void serve_stream(const ProbOracle& oracle, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_bridge_request(oracle, line) << '\n';
    out.flush();
  }
}

void serve_tcp(const ProbOracle& oracle, std::uint16_t port, const std::function<void(std::uint16_t)>& on_bound,
               const std::atomic<bool>& stop) {
  ignore_sigpipe();
  const int lfd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (lfd < 0) throw Error(ErrorKind::IoError, "socket: " + errno_text());
  const int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 16) != 0) {
    const std::string msg = errno_text();
    ::close(lfd);
    throw Error(ErrorKind::IoError, "bind/listen: " + msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_bound) on_bound(ntohs(addr.sin_port));

  std::vector<std::thread> workers;
  while (!stop.load()) {
    pollfd pfd{lfd, POLLIN, 0};
    if (::poll(&pfd, 1, 100) <= 0) continue;
    const int cfd = ::accept4(lfd, nullptr, nullptr, SOCK_CLOEXEC);
    if (cfd < 0) continue;
    workers.emplace_back([&oracle, &stop, cfd] {
      LineChannel channel(cfd, cfd);
      std::string line;
      try {
        while (!stop.load()) {
          try {
            if (!channel.read_line(line, std::chrono::milliseconds(100))) break;
          } catch (const Error& e) {
            if (e.kind() == ErrorKind::Timeout) continue;
            break;
          }
          if (line.empty()) continue;
          channel.write_line(handle_bridge_request(oracle, line));
        }
      } catch (const Error&) {
        // peer went away
      }
    });
  }
  for (auto& t : workers) t.join();
  ::close(lfd);
}

std::vector<Probs> UniformOracle::predict_batch(std::span<const DnaSequence> batch) const {
  return std::vector<Probs>(batch.size(), Probs(static_cast<std::size_t>(num_classes_), 1.0 / num_classes_));
}

}  // namespace dnaadv
