#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sq8/ring.h"

namespace sq8 {

using PrgKey = std::array<uint8_t, 32>;

// ChaCha20 keystream generator. Every draw uses a fresh nonce taken from an
// internal call counter, so two holders of the same key produce identical
// streams as long as they issue the same sequence of draws.
class Prg {
 public:
  Prg() = default;
  explicit Prg(const PrgKey& key) : key_(key) {}

  void bytes(std::span<uint8_t> out);
  std::vector<u128> ring(const Ring& r, size_t n);
  // n random bits packed into ceil(n/64) words; bits past n are zero.
  std::vector<uint64_t> bit_words(size_t n);
  uint64_t u64();

  uint64_t calls() const { return counter_; }

 private:
  PrgKey key_{};
  uint64_t counter_ = 0;
};

// BLAKE2b-256(seed || label || index); used to expand one master seed into
// per-pair and per-party keys in deterministic mode.
PrgKey derive_key(uint64_t seed, std::string_view label, uint64_t index);

PrgKey random_key();

}  // namespace sq8
