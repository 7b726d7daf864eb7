#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>

#include "dnaadv/model.hpp"

namespace dnaadv {

/// "exec:<shell command>" spawns a sidecar and talks over its stdin/stdout;
/// "tcp:<host>:<port>" connects to a listening server.
struct Endpoint {
  enum class Transport { Exec, Tcp };
  Transport transport = Transport::Exec;
  std::string command;
  std::string host;
  std::uint16_t port = 0;

  static Endpoint parse(std::string_view descriptor);
  std::string str() const;
};

struct BridgeOptions {
  int num_classes = 2;
  std::chrono::milliseconds timeout{10000};
  /// Sequences per request line; larger batches are split.
  std::size_t max_batch = 256;
};

/// Newline-delimited duplex channel over a pair of file descriptors.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, bool owns_fds = true);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  void write_line(const std::string& line);
  /// Returns false on clean end of stream before any byte of a new line.
  /// Throws Timeout when no complete line arrives in time, ProtocolError
  /// when the stream ends mid-line.
  bool read_line(std::string& line, std::chrono::milliseconds timeout);

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
  std::string buffer_;
};

/// Black-box oracle speaking the bridge protocol. One request is in flight
/// per connection at a time.
class ExternalOracle final : public ProbOracle {
 public:
  ExternalOracle(const Endpoint& endpoint, const BridgeOptions& options);
  ~ExternalOracle() override;

  int num_classes() const override { return options_.num_classes; }
  const Endpoint& endpoint() const noexcept { return endpoint_; }

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;

 private:
  std::vector<Probs> request(std::span<const DnaSequence> batch) const;

  Endpoint endpoint_;
  BridgeOptions options_;
  mutable std::mutex mutex_;
  mutable std::unique_ptr<LineChannel> channel_;
  mutable std::int64_t next_id_ = 1;
  int child_pid_ = -1;
};

std::unique_ptr<ExternalOracle> connect_external(const Endpoint& endpoint, const BridgeOptions& options = {});
std::unique_ptr<ExternalOracle> connect_external(std::string_view descriptor, const BridgeOptions& options = {});

/// Answers one request line; never throws for bad input, returning an error
/// response instead.
std::string handle_bridge_request(const ProbOracle& oracle, const std::string& line);

/// Serves requests from `in` until end of stream.
void serve_stream(const ProbOracle& oracle, std::istream& in, std::ostream& out);

/// Listens on 127.0.0.1:port (0 picks a free port), reports the bound port
/// through `on_bound`, and serves each connection on its own thread until
/// `stop` becomes true.
void serve_tcp(const ProbOracle& oracle, std::uint16_t port, const std::function<void(std::uint16_t)>& on_bound,
               const std::atomic<bool>& stop);

/// Constant oracle returning 1/C for every class.
class UniformOracle final : public ProbOracle {
 public:
  explicit UniformOracle(int num_classes) : num_classes_(num_classes) {}
  int num_classes() const override { return num_classes_; }

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;

 private:
  int num_classes_;
};

}  // namespace dnaadv
