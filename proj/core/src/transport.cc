#include "sq8/transport.h"

#include <cstring>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sq8/errors.h"

namespace sq8 {

PartyId::PartyId(int id) : id_(id) {
  if (id < 1 || id > 3) {
    throw ConfigError(fmt::format("party id {} not in {{1,2,3}}", id));
  }
}

namespace {

void put_u32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t{p[i]} << (8 * i);
  return v;
}

}  // namespace

std::vector<uint8_t> encode_frame(const WireMessage& msg) {
  if (msg.payload.size() > kMaxFramePayload) {
    throw ConfigError(fmt::format("payload of {} bytes exceeds frame limit", msg.payload.size()));
  }
  std::vector<uint8_t> out(kFrameHeaderBytes + msg.payload.size());
  put_u32(out.data(), static_cast<uint32_t>(msg.payload.size()));
  put_u32(out.data() + 4, msg.round_tag);
  if (!msg.payload.empty()) {
    std::memcpy(out.data() + kFrameHeaderBytes, msg.payload.data(), msg.payload.size());
  }
  return out;
}

WireMessage decode_frame(std::span<const uint8_t> frame, int peer) {
  if (frame.size() < kFrameHeaderBytes) {
    throw FramingError(peer, fmt::format("short frame header ({} bytes)", frame.size()));
  }
  const uint32_t len = get_u32(frame.data());
  if (len > kMaxFramePayload) {
    throw FramingError(peer, fmt::format("declared payload length {} exceeds limit", len));
  }
  if (frame.size() != kFrameHeaderBytes + len) {
    throw FramingError(peer, fmt::format("declared payload length {} but frame carries {}", len,
                                         frame.size() - kFrameHeaderBytes));
  }
  WireMessage msg;
  msg.round_tag = get_u32(frame.data() + 4);
  msg.payload.assign(frame.begin() + kFrameHeaderBytes, frame.end());
  return msg;
}

uint64_t CommStats::bytes_sent() const {
  uint64_t total = 0;
  for (const auto& p : peers) total += p.bytes_sent;
  return total;
}

uint64_t CommStats::frames() const {
  uint64_t total = 0;
  for (const auto& p : peers) total += p.frames;
  return total;
}

CommStats CommStats::operator-(const CommStats& before) const {
  CommStats d;
  for (size_t i = 0; i < peers.size(); ++i) {
    d.peers[i].bytes_sent = peers[i].bytes_sent - before.peers[i].bytes_sent;
    d.peers[i].frames = peers[i].frames - before.peers[i].frames;
    d.peers[i].framing_bytes = peers[i].framing_bytes - before.peers[i].framing_bytes;
    d.peers[i].bytes_received = peers[i].bytes_received - before.peers[i].bytes_received;
  }
  d.rounds = rounds - before.rounds;
  return d;
}

nlohmann::json stats_to_json(PartyId self, const CommStats& stats) {
  auto out = nlohmann::json::array();
  for (PartyId peer : {self.next(), self.prev()}) {
    const auto& p = stats.peers[peer.index()];
    out.push_back({{"party", self.value()},
                   {"peer", peer.value()},
                   {"bytes_sent", p.bytes_sent},
                   {"frames", p.frames},
                   {"rounds", stats.rounds}});
  }
  return out;
}

void FrameQueue::push(std::vector<uint8_t> frame) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    frames_.push_back(std::move(frame));
  }
  cv_.notify_one();
}

std::optional<std::vector<uint8_t>> FrameQueue::pop() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !frames_.empty() || closed_; });
  if (frames_.empty()) return std::nullopt;
  auto f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

void FrameQueue::close(std::string reason, bool framing) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    closed_ = true;
    reason_ = std::move(reason);
    framing_ = framing;
  }
  cv_.notify_all();
}

bool FrameQueue::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

namespace {

class LocalChannel final : public Channel {
 public:
  LocalChannel(int peer, std::shared_ptr<FrameQueue> out, std::shared_ptr<FrameQueue> in)
      : peer_(peer), out_(std::move(out)), in_(std::move(in)) {}
  ~LocalChannel() override { close(); }

  void send(const WireMessage& msg) override {
    if (out_->closed()) {
      throw TransportError(peer_, "send on closed channel");
    }
    out_->push(encode_frame(msg));
  }

  WireMessage recv() override {
    auto frame = in_->pop();
    if (!frame) {
      if (in_->framing_failure()) throw FramingError(peer_, in_->close_reason());
      throw TransportError(peer_, "peer disconnected: " + in_->close_reason());
    }
    return decode_frame(*frame, peer_);
  }

  void close() override {
    out_->close("peer closed the channel");
    in_->close("channel closed locally");
  }

  int peer() const override { return peer_; }

 private:
  int peer_;
  std::shared_ptr<FrameQueue> out_;
  std::shared_ptr<FrameQueue> in_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_local_channel_pair(int id_a,
                                                                                      int id_b) {
  auto ab = std::make_shared<FrameQueue>();
  auto ba = std::make_shared<FrameQueue>();
  return {std::make_unique<LocalChannel>(id_b, ab, ba), std::make_unique<LocalChannel>(id_a, ba, ab)};
}

std::array<std::unique_ptr<PartyNet>, 3> make_local_network() {
  // Channel (i, i+1) for each i.
  std::array<std::unique_ptr<Channel>, 3> to_next;
  std::array<std::unique_ptr<Channel>, 3> to_prev;
  for (int i = 1; i <= 3; ++i) {
    PartyId a(i);
    PartyId b = a.next();
    auto [ea, eb] = make_local_channel_pair(a.value(), b.value());
    to_next[a.index()] = std::move(ea);
    to_prev[b.index()] = std::move(eb);
  }
  std::array<std::unique_ptr<PartyNet>, 3> nets;
  for (int i = 0; i < 3; ++i) {
    nets[i] = std::make_unique<PartyNet>(PartyId(i + 1), std::move(to_next[i]), std::move(to_prev[i]));
  }
  return nets;
}

PartyNet::PartyNet(PartyId self, std::unique_ptr<Channel> to_next, std::unique_ptr<Channel> to_prev)
    : self_(self), to_next_(std::move(to_next)), to_prev_(std::move(to_prev)) {
  if (sodium_init() < 0) {
    throw ConfigError("libsodium initialisation failed");
  }
  crypto_generichash_init(&transcript_, nullptr, 0, 32);
}

PartyNet::~PartyNet() { close(); }

void PartyNet::close() {
  if (to_next_) to_next_->close();
  if (to_prev_) to_prev_->close();
}

Channel& PartyNet::channel(PartyId peer) {
  if (peer == self_.next()) return *to_next_;
  if (peer == self_.prev()) return *to_prev_;
  throw ConfigError(fmt::format("party {} has no channel to itself", self_.value()));
}

void PartyNet::absorb(uint8_t direction, PartyId peer, const WireMessage& msg) {
  uint8_t head[10];
  head[0] = direction;
  head[1] = static_cast<uint8_t>(peer.value());
  put_u32(head + 2, msg.round_tag);
  put_u32(head + 6, static_cast<uint32_t>(msg.payload.size()));
  crypto_generichash_update(&transcript_, head, sizeof head);
  if (!msg.payload.empty()) {
    crypto_generichash_update(&transcript_, msg.payload.data(), msg.payload.size());
  }
}

void PartyNet::send(PartyId peer, std::vector<uint8_t> payload) {
  WireMessage msg{static_cast<uint32_t>(stats_.rounds), std::move(payload)};
  channel(peer).send(msg);
  auto& s = stats_.peers[peer.index()];
  s.bytes_sent += msg.payload.size();
  s.frames += 1;
  s.framing_bytes += kFrameHeaderBytes;
  absorb(0, peer, msg);
}

std::vector<uint8_t> PartyNet::recv(PartyId peer) {
  WireMessage msg = channel(peer).recv();
  if (msg.round_tag < last_tag_in_[peer.index()]) {
    throw FramingError(peer.value(), fmt::format("round tag went backwards ({} after {})",
                                                 msg.round_tag, last_tag_in_[peer.index()]));
  }
  last_tag_in_[peer.index()] = msg.round_tag;
  stats_.peers[peer.index()].bytes_received += msg.payload.size();
  absorb(1, peer, msg);
  return std::move(msg.payload);
}

std::vector<uint8_t> PartyNet::exchange(PartyId peer, std::vector<uint8_t> payload) {
  send(peer, std::move(payload));
  auto in = recv(peer);
  ++stats_.rounds;
  return in;
}

std::vector<uint8_t> PartyNet::pass(PartyId to, std::vector<uint8_t> payload, PartyId from) {
  send(to, std::move(payload));
  auto in = recv(from);
  ++stats_.rounds;
  return in;
}

std::array<uint8_t, 32> PartyNet::transcript_digest() const {
  crypto_generichash_state copy = transcript_;
  std::array<uint8_t, 32> out{};
  crypto_generichash_final(&copy, out.data(), out.size());
  return out;
}

std::string hex(std::span<const uint8_t> bytes) {
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) s += fmt::format("{:02x}", b);
  return s;
}

}  // namespace sq8
