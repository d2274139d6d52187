#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <sodium.h>

namespace sq8 {

// Parties are numbered 1..3; indexes wrap around modulo 3.
class PartyId {
 public:
  constexpr PartyId() = default;
  explicit PartyId(int id);

  constexpr int value() const noexcept { return id_; }
  constexpr int index() const noexcept { return id_ - 1; }
  constexpr PartyId next() const noexcept { return PartyId(Unchecked{}, 1 + (id_ % 3)); }
  constexpr PartyId prev() const noexcept { return PartyId(Unchecked{}, 1 + ((id_ + 1) % 3)); }

  friend constexpr bool operator==(PartyId, PartyId) = default;

 private:
  struct Unchecked {};
  constexpr PartyId(Unchecked, int id) : id_(id) {}
  int id_ = 1;
};

struct WireMessage {
  uint32_t round_tag = 0;
  std::vector<uint8_t> payload;
};

// 4-byte LE payload length, 4-byte LE round tag, payload.
inline constexpr size_t kFrameHeaderBytes = 8;
inline constexpr uint32_t kMaxFramePayload = 1u << 30;

std::vector<uint8_t> encode_frame(const WireMessage& msg);
// Throws FramingError (attributed to `peer`) on malformed input.
WireMessage decode_frame(std::span<const uint8_t> frame, int peer);

struct PeerStats {
  uint64_t bytes_sent = 0;      // payload bytes only
  uint64_t frames = 0;
  uint64_t framing_bytes = 0;   // headers, accounted separately
  uint64_t bytes_received = 0;
};

struct CommStats {
  std::array<PeerStats, 3> peers{};  // indexed by PartyId::index()
  uint64_t rounds = 0;

  uint64_t bytes_sent() const;
  uint64_t frames() const;
  CommStats operator-(const CommStats& before) const;
};

// [{party, peer, bytes_sent, frames, rounds}, ...] for the two peers of `self`.
nlohmann::json stats_to_json(PartyId self, const CommStats& stats);

// Blocking FIFO of raw frames shared by both backends.
class FrameQueue {
 public:
  void push(std::vector<uint8_t> frame);
  // Blocks until a frame is available; nullopt once closed and drained.
  std::optional<std::vector<uint8_t>> pop();
  void close(std::string reason = "channel closed", bool framing = false);
  bool closed() const;
  const std::string& close_reason() const { return reason_; }
  bool framing_failure() const { return framing_; }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<uint8_t>> frames_;
  bool closed_ = false;
  bool framing_ = false;
  std::string reason_;
};

// One endpoint of a point-to-point ordered channel.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const WireMessage& msg) = 0;
  virtual WireMessage recv() = 0;
  virtual void close() = 0;
  virtual int peer() const = 0;
};

// A party's view of the network: one channel per peer, with payload/round
// instrumentation and a running digest of everything sent and received.
class PartyNet {
 public:
  PartyNet(PartyId self, std::unique_ptr<Channel> to_next, std::unique_ptr<Channel> to_prev);
  ~PartyNet();
  PartyNet(const PartyNet&) = delete;
  PartyNet& operator=(const PartyNet&) = delete;

  PartyId self() const { return self_; }

  void send(PartyId peer, std::vector<uint8_t> payload);
  std::vector<uint8_t> recv(PartyId peer);

  // Symmetric one-round step with a single peer.
  std::vector<uint8_t> exchange(PartyId peer, std::vector<uint8_t> payload);
  // Send to one peer, receive from another, as one round.
  std::vector<uint8_t> pass(PartyId to, std::vector<uint8_t> payload, PartyId from);
  // Closes a round built from individual send/recv calls.
  void end_round() { ++stats_.rounds; }

  const CommStats& stats() const { return stats_; }
  void reset_stats() { stats_ = CommStats{}; }

  // BLAKE2b-256 over (direction, peer, tag, payload) of every frame so far.
  std::array<uint8_t, 32> transcript_digest() const;

  void close();

 private:
  Channel& channel(PartyId peer);
  void absorb(uint8_t direction, PartyId peer, const WireMessage& msg);

  PartyId self_;
  std::unique_ptr<Channel> to_next_;
  std::unique_ptr<Channel> to_prev_;
  CommStats stats_;
  std::array<uint32_t, 3> last_tag_in_{};
  crypto_generichash_state transcript_;
};

// Three in-process parties wired with queue channels.
std::array<std::unique_ptr<PartyNet>, 3> make_local_network();

// A connected pair of in-process channel endpoints; `a` talks to `peer_b`.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_local_channel_pair(int id_a,
                                                                                      int id_b);

std::string hex(std::span<const uint8_t> bytes);

}  // namespace sq8
