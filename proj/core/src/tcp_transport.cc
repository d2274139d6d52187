#include "sq8/tcp_transport.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "sq8/errors.h"

namespace sq8 {

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError(fmt::format("endpoint '{}' is not host:port", text));
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) {
    throw ConfigError(fmt::format("port {} out of range", port));
  }
  e.port = static_cast<uint16_t>(port);
  return e;
}

namespace {

sockaddr_in resolve(const Endpoint& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw ConfigError(fmt::format("cannot resolve host '{}'", e.host));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  freeaddrinfo(res);
  addr.sin_port = htons(e.port);
  return addr;
}

// Returns false on EOF before the first byte; throws on partial reads.
bool read_exact(int fd, uint8_t* buf, size_t n, int peer) {
  size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw FramingError(peer, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(peer, fmt::format("recv failed: {}", std::strerror(errno)));
    }
    got += static_cast<size_t>(r);
  }
  return true;
}

void write_all(int fd, const uint8_t* buf, size_t n, int peer) {
  size_t put = 0;
  while (put < n) {
    const ssize_t w = ::send(fd, buf + put, n - put, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(peer, fmt::format("send failed: {}", std::strerror(errno)));
    }
    put += static_cast<size_t>(w);
  }
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

class TcpChannel final : public Channel {
 public:
  TcpChannel(int fd, int peer) : fd_(fd), peer_(peer) {
    set_nodelay(fd_);
    reader_ = std::thread([this] { read_loop(); });
  }

  ~TcpChannel() override {
    close();
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
  }

  void send(const WireMessage& msg) override {
    const auto frame = encode_frame(msg);
    std::lock_guard lock(send_mu_);
    if (shut_) throw TransportError(peer_, "send on closed channel");
    write_all(fd_, frame.data(), frame.size(), peer_);
  }

  WireMessage recv() override {
    auto frame = incoming_.pop();
    if (!frame) {
      if (incoming_.framing_failure()) throw FramingError(peer_, incoming_.close_reason());
      throw TransportError(peer_, "peer disconnected: " + incoming_.close_reason());
    }
    return decode_frame(*frame, peer_);
  }

  void close() override {
    {
      std::lock_guard lock(send_mu_);
      if (shut_) return;
      shut_ = true;
    }
    ::shutdown(fd_, SHUT_RDWR);
    incoming_.close("channel closed locally");
  }

  int peer() const override { return peer_; }

 private:
  // Draining the socket on a dedicated thread keeps large simultaneous
  // sends in both directions from deadlocking on full kernel buffers.
  void read_loop() {
    try {
      for (;;) {
        std::vector<uint8_t> frame(kFrameHeaderBytes);
        if (!read_exact(fd_, frame.data(), kFrameHeaderBytes, peer_)) {
          incoming_.close("connection closed by peer");
          return;
        }
        uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= uint32_t{frame[i]} << (8 * i);
        if (len > kMaxFramePayload) {
          incoming_.close(fmt::format("declared payload length {} exceeds limit", len), true);
          return;
        }
        frame.resize(kFrameHeaderBytes + len);
        if (len > 0 && !read_exact(fd_, frame.data() + kFrameHeaderBytes, len, peer_)) {
          incoming_.close("connection closed mid-frame", true);
          return;
        }
        incoming_.push(std::move(frame));
      }
    } catch (const FramingError& e) {
      incoming_.close(e.what(), true);
    } catch (const std::exception& e) {
      incoming_.close(e.what());
    }
  }

  int fd_;
  int peer_;
  std::mutex send_mu_;
  bool shut_ = false;
  FrameQueue incoming_;
  std::thread reader_;
};

struct Handshake {
  uint8_t party;
  uint16_t ring_bits;
  uint16_t version;
};

constexpr uint8_t kHandshakeMagic[4] = {'S', 'Q', '8', 'H'};

void send_handshake(int fd, const Handshake& h, int peer) {
  uint8_t buf[9];
  std::memcpy(buf, kHandshakeMagic, 4);
  buf[4] = h.party;
  buf[5] = static_cast<uint8_t>(h.ring_bits);
  buf[6] = static_cast<uint8_t>(h.ring_bits >> 8);
  buf[7] = static_cast<uint8_t>(h.version);
  buf[8] = static_cast<uint8_t>(h.version >> 8);
  write_all(fd, buf, sizeof buf, peer);
}

Handshake recv_handshake(int fd, int peer) {
  uint8_t buf[9];
  if (!read_exact(fd, buf, sizeof buf, peer)) {
    throw TransportError(peer, "connection closed during handshake");
  }
  if (std::memcmp(buf, kHandshakeMagic, 4) != 0) {
    throw FramingError(peer, "bad handshake magic");
  }
  return {buf[4], static_cast<uint16_t>(buf[5] | (buf[6] << 8)),
          static_cast<uint16_t>(buf[7] | (buf[8] << 8))};
}

void check_handshake(const Handshake& got, int expected_party, int ring_bits) {
  if (expected_party != 0 && got.party != expected_party) {
    throw ConfigError(fmt::format("handshake: expected party {}, got {}", expected_party, got.party));
  }
  if (got.ring_bits != ring_bits) {
    throw ConfigError(fmt::format("handshake with party {}: ring width {} != local {}", got.party,
                                  got.ring_bits, ring_bits));
  }
  if (got.version != kProtocolSuiteVersion) {
    throw ConfigError(fmt::format("handshake with party {}: suite version {} != local {}",
                                  got.party, got.version, kProtocolSuiteVersion));
  }
}

// Bounds handshake reads so a peer that never answers cannot hang setup.
void set_recv_timeout(int fd, std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

int connect_with_retry(const Endpoint& e, std::chrono::milliseconds timeout, int peer) {
  const auto addr = resolve(e);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(peer, "socket() failed");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      return fd;
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TransportError(peer, fmt::format("could not connect to {}:{}", e.host, e.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

}  // namespace

TcpListener::TcpListener(const Endpoint& where) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(0, "socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = resolve(where);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw TransportError(0, fmt::format("bind {}:{} failed: {}", where.host, where.port, err));
  }
  if (::listen(fd_, 8) != 0) {
    ::close(fd_);
    throw TransportError(0, "listen() failed");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

int TcpListener::accept(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r <= 0) throw TransportError(0, "timed out waiting for peer connection");
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TransportError(0, "accept() failed");
  return fd;
}

std::unique_ptr<Channel> make_tcp_channel(int fd, int peer) {
  return std::make_unique<TcpChannel>(fd, peer);
}

std::unique_ptr<PartyNet> connect_tcp(PartyId self, const std::array<Endpoint, 3>& endpoints,
                                      const TcpOptions& options) {
  std::unique_ptr<TcpListener> owned;
  TcpListener* listener = options.listener;
  const Handshake mine{static_cast<uint8_t>(self.value()), static_cast<uint16_t>(options.ring_bits),
                       kProtocolSuiteVersion};

  std::array<std::unique_ptr<Channel>, 3> channels;

  // Dial lower-numbered parties first.
  for (int p = 1; p < self.value(); ++p) {
    const int fd = connect_with_retry(endpoints[p - 1], options.connect_timeout, p);
    try {
      set_recv_timeout(fd, options.connect_timeout);
      send_handshake(fd, mine, p);
      check_handshake(recv_handshake(fd, p), p, options.ring_bits);
      set_recv_timeout(fd, std::chrono::milliseconds(0));
    } catch (...) {
      ::close(fd);
      throw;
    }
    channels[p - 1] = make_tcp_channel(fd, p);
  }

  const int expected_incoming = 3 - self.value();
  if (expected_incoming > 0 && listener == nullptr) {
    owned = std::make_unique<TcpListener>(endpoints[self.index()]);
    listener = owned.get();
  }
  for (int i = 0; i < expected_incoming; ++i) {
    const int fd = listener->accept(options.connect_timeout);
    int peer = 0;
    try {
      set_recv_timeout(fd, options.connect_timeout);
      const Handshake theirs = recv_handshake(fd, 0);
      peer = theirs.party;
      if (peer <= self.value() || peer > 3 || channels[peer - 1]) {
        throw ConfigError(fmt::format("party {} received unexpected connection from party {}",
                                      self.value(), peer));
      }
      check_handshake(theirs, peer, options.ring_bits);
      send_handshake(fd, mine, peer);
      set_recv_timeout(fd, std::chrono::milliseconds(0));
    } catch (...) {
      // Let the dialing side see the rejection rather than a hang.
      ::close(fd);
      throw;
    }
    channels[peer - 1] = make_tcp_channel(fd, peer);
  }

  return std::make_unique<PartyNet>(self, std::move(channels[self.next().index()]),
                                    std::move(channels[self.prev().index()]));
}

}  // namespace sq8
