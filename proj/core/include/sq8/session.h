#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sq8/bit_vec.h"
#include "sq8/prg.h"
#include "sq8/ring.h"
#include "sq8/transport.h"

namespace sq8 {

// Replicated 2-of-3 share over Z_{2^k}: party P_i holds (x_i, x_{i+1}) with
// x = x_1 + x_2 + x_3.
struct RepShare {
  u128 first = 0;
  u128 second = 0;

  friend bool operator==(const RepShare&, const RepShare&) = default;
};

// Replicated share of n bits over Z_2, bit-sliced: lane j of `first` is
// party P_i's x_i bit for element j.
struct BinShare {
  BitVec first;
  BitVec second;

  size_t size() const { return first.size(); }
};

enum class TruncMode { probabilistic, exact };
enum class ProbProtocol { black_box, three_party };

struct SessionOptions {
  int ring_bits = kDefaultRingBits;
  TruncMode trunc_mode = TruncMode::probabilistic;
  ProbProtocol prob_protocol = ProbProtocol::three_party;
  size_t dabit_batch = 1024;
  // Open also cross-checks the redundant component (doubles open traffic).
  bool consistency_checks = false;
  // Derive every key from this seed instead of fresh randomness. Insecure.
  std::optional<uint64_t> deterministic_seed;
};

// Random bits shared in both the binary and the arithmetic domain.
struct DaBitPool {
  BinShare binary;
  std::vector<RepShare> arith;

  size_t size() const { return arith.size(); }
};

// One party's protocol state. Single-threaded with respect to protocol
// sequencing: every party must issue the same sequence of protocol calls.
class PartySession {
 public:
  PartySession(std::unique_ptr<PartyNet> net, const SessionOptions& options);
  PartySession(const PartySession&) = delete;
  PartySession& operator=(const PartySession&) = delete;

  PartyId id() const { return net_->self(); }
  const Ring& ring() const { return ring_; }
  const SessionOptions& options() const { return options_; }
  SessionOptions& options() { return options_; }
  PartyNet& net() { return *net_; }
  const PartyNet& net() const { return *net_; }

  // Key k_i, shared with the previous party.
  Prg& prg_prev() { return prev_; }
  // Key k_{i+1}, shared with the next party.
  Prg& prg_next() { return next_; }
  // Private randomness.
  Prg& prg_own() { return own_; }

  DaBitPool& dabits() { return dabits_; }

 private:
  std::unique_ptr<PartyNet> net_;
  SessionOptions options_;
  Ring ring_;
  Prg prev_;
  Prg next_;
  Prg own_;
  DaBitPool dabits_;
};

}  // namespace sq8
