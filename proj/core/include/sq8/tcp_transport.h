#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include "sq8/transport.h"

namespace sq8 {

inline constexpr uint16_t kProtocolSuiteVersion = 1;

struct Endpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;

  // "host:port"
  static Endpoint parse(const std::string& text);
};

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& where);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  uint16_t port() const { return port_; }
  // Returns a connected socket; throws TransportError on timeout.
  int accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

struct TcpOptions {
  int ring_bits = 72;
  std::chrono::milliseconds connect_timeout{30000};
  // Use this already-bound socket instead of binding endpoints[self].
  TcpListener* listener = nullptr;
};

// Lower-numbered parties listen, higher-numbered parties connect. Each new
// connection starts with a handshake of (party id, k, suite version); any
// mismatch aborts with ConfigError.
std::unique_ptr<PartyNet> connect_tcp(PartyId self, const std::array<Endpoint, 3>& endpoints,
                                      const TcpOptions& options);

// A channel over an already-connected, already-handshaken socket.
std::unique_ptr<Channel> make_tcp_channel(int fd, int peer);

}  // namespace sq8
