#include "sq8/session.h"

#include <fmt/format.h>

#include "sq8/errors.h"

namespace sq8 {

PartySession::PartySession(std::unique_ptr<PartyNet> net, const SessionOptions& options)
    : net_(std::move(net)), options_(options), ring_(options.ring_bits) {
  if (!net_) throw ConfigError("session needs a network");
  if (options_.ring_bits < kMinRingBits) {
    throw ConfigError(fmt::format("protocols need k >= {}, got {}", kMinRingBits, options_.ring_bits));
  }
  const PartyId me = net_->self();
  if (options_.deterministic_seed) {
    const uint64_t seed = *options_.deterministic_seed;
    // k_j is held by P_{j-1} and P_j.
    prev_ = Prg(derive_key(seed, "pair", me.value()));
    next_ = Prg(derive_key(seed, "pair", me.next().value()));
    own_ = Prg(derive_key(seed, "party", me.value()));
  } else {
    const PrgKey mine = random_key();
    std::vector<uint8_t> payload(mine.begin(), mine.end());
    auto got = net_->pass(me.next(), std::move(payload), me.prev());
    if (got.size() != sizeof(PrgKey)) {
      throw FramingError(me.prev().value(), "malformed key-setup message");
    }
    PrgKey theirs{};
    std::copy(got.begin(), got.end(), theirs.begin());
    next_ = Prg(mine);
    prev_ = Prg(theirs);
    own_ = Prg(random_key());
    net_->reset_stats();
  }
}

}  // namespace sq8
