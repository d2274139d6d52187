#include "sq8/ring.h"

#include <algorithm>

#include <fmt/format.h>

#include "sq8/errors.h"

namespace sq8 {

Ring::Ring(int k) : k_(k) {
  if (k < 1 || k > kMaxRingBits) {
    throw ConfigError(fmt::format("ring width {} outside [1, {}]", k, kMaxRingBits));
  }
  mask_ = k == 128 ? ~u128{0} : (u128{1} << k) - 1;
}

i128 Ring::to_signed(u128 a) const noexcept {
  a &= mask_;
  if (k_ < 128 && msb(a)) {
    a |= ~mask_;
  }
  return static_cast<i128>(a);
}

u128 Ring::pow2(int e) const {
  if (e < 0 || e >= k_) {
    throw ConfigError(fmt::format("2^{} not representable in Z_2^{}", e, k_));
  }
  return u128{1} << e;
}

void Ring::encode(std::span<const u128> values, std::vector<uint8_t>& out) const {
  const int nb = bytes();
  const size_t base = out.size();
  out.resize(base + values.size() * nb);
  uint8_t* p = out.data() + base;
  for (u128 v : values) {
    for (int j = 0; j < nb; ++j) {
      *p++ = static_cast<uint8_t>(v >> (8 * j));
    }
  }
}

std::vector<u128> Ring::decode(std::span<const uint8_t> bytes_in) const {
  const size_t nb = static_cast<size_t>(bytes());
  if (bytes_in.size() % nb != 0) {
    throw ShapeError(fmt::format("{} bytes is not a whole number of {}-byte ring elements",
                                 bytes_in.size(), nb));
  }
  std::vector<u128> out(bytes_in.size() / nb);
  const uint8_t* p = bytes_in.data();
  for (auto& v : out) {
    u128 x = 0;
    for (size_t j = 0; j < nb; ++j) {
      x |= u128{*p++} << (8 * j);
    }
    v = x & mask_;
  }
  return out;
}

RingElement::RingElement(u128 value, int k) : value_(Ring(k).reduce(value)), k_(k) {}

namespace {

int common_width(const RingElement& a, const RingElement& b) {
  if (a.width() != b.width()) {
    throw ConfigError(fmt::format("ring width mismatch: {} vs {}", a.width(), b.width()));
  }
  return a.width();
}

}  // namespace

RingElement operator+(const RingElement& a, const RingElement& b) {
  const int k = common_width(a, b);
  return {Ring(k).add(a.value(), b.value()), k};
}

RingElement operator-(const RingElement& a, const RingElement& b) {
  const int k = common_width(a, b);
  return {Ring(k).sub(a.value(), b.value()), k};
}

RingElement operator*(const RingElement& a, const RingElement& b) {
  const int k = common_width(a, b);
  return {Ring(k).mul(a.value(), b.value()), k};
}

std::vector<uint8_t> bit_decompose(const RingElement& a) {
  std::vector<uint8_t> bits(a.width());
  for (int i = 0; i < a.width(); ++i) {
    bits[i] = static_cast<uint8_t>((a.value() >> i) & 1);
  }
  return bits;
}

RingElement bit_recompose(std::span<const uint8_t> bits) {
  u128 v = 0;
  for (size_t i = 0; i < bits.size(); ++i) {
    v |= u128{bits[i] & 1u} << i;
  }
  return {v, static_cast<int>(bits.size())};
}

std::string to_string(u128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v != 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

}  // namespace sq8
