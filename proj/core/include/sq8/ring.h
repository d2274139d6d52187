#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sq8 {

using u128 = unsigned __int128;
using i128 = __int128;

// Plain ring arithmetic accepts any 1 <= k <= 128; sessions need k >= 8.
inline constexpr int kMinRingBits = 8;
inline constexpr int kMaxRingBits = 128;
inline constexpr int kDefaultRingBits = 72;

// Arithmetic in Z_{2^k}. Values are kept canonical (bits >= k cleared); the
// 128-bit container wraps modulo 2^128 and 2^k divides 2^128, so masking after
// every operation is enough.
class Ring {
 public:
  explicit Ring(int k = kDefaultRingBits);

  int bits() const noexcept { return k_; }
  int bytes() const noexcept { return (k_ + 7) / 8; }
  u128 mask() const noexcept { return mask_; }

  u128 reduce(u128 v) const noexcept { return v & mask_; }
  u128 add(u128 a, u128 b) const noexcept { return (a + b) & mask_; }
  u128 sub(u128 a, u128 b) const noexcept { return (a - b) & mask_; }
  u128 mul(u128 a, u128 b) const noexcept { return (a * b) & mask_; }
  u128 neg(u128 a) const noexcept { return (u128{0} - a) & mask_; }

  bool msb(u128 a) const noexcept { return (a >> (k_ - 1)) & 1; }
  bool bit(u128 a, int i) const noexcept { return (a >> i) & 1; }

  // Two's-complement embedding of a signed integer.
  u128 from_signed(i128 v) const noexcept { return static_cast<u128>(v) & mask_; }
  i128 to_signed(u128 a) const noexcept;

  // 2^e for 0 <= e < k.
  u128 pow2(int e) const;

  // ceil(k/8) little-endian bytes per element.
  void encode(std::span<const u128> values, std::vector<uint8_t>& out) const;
  std::vector<u128> decode(std::span<const uint8_t> bytes) const;

  friend bool operator==(const Ring&, const Ring&) = default;

 private:
  int k_;
  u128 mask_;
};

// Self-describing element of Z_{2^k}.
class RingElement {
 public:
  RingElement(u128 value, int k);

  u128 value() const noexcept { return value_; }
  int width() const noexcept { return k_; }

  friend RingElement operator+(const RingElement& a, const RingElement& b);
  friend RingElement operator-(const RingElement& a, const RingElement& b);
  friend RingElement operator*(const RingElement& a, const RingElement& b);
  friend bool operator==(const RingElement&, const RingElement&) = default;

 private:
  u128 value_;
  int k_;
};

// Little-endian bits b_0..b_{k-1}.
std::vector<uint8_t> bit_decompose(const RingElement& a);
RingElement bit_recompose(std::span<const uint8_t> bits);

std::string to_string(u128 v);

}  // namespace sq8
