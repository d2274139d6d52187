#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sq8 {

// Packed bit vector, 64 lanes per word, little-endian lane order. Unused high
// bits of the last word are kept zero.
class BitVec {
 public:
  BitVec() = default;
  explicit BitVec(size_t n) : size_(n), words_((n + 63) / 64) {}
  BitVec(size_t n, std::vector<uint64_t> words);

  size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::span<const uint64_t> words() const { return words_; }
  std::span<uint64_t> words() { return words_; }

  bool get(size_t i) const { return (words_[i / 64] >> (i % 64)) & 1; }
  void set(size_t i, bool v) {
    const uint64_t m = uint64_t{1} << (i % 64);
    if (v) words_[i / 64] |= m; else words_[i / 64] &= ~m;
  }

  BitVec& operator^=(const BitVec& o);
  BitVec& operator&=(const BitVec& o);
  friend BitVec operator^(BitVec a, const BitVec& b) { return a ^= b; }
  friend BitVec operator&(BitVec a, const BitVec& b) { return a &= b; }
  BitVec operator~() const;

  void append(const BitVec& o);
  BitVec slice(size_t offset, size_t len) const;

  // ceil(n/64) little-endian 8-byte words.
  std::vector<uint8_t> to_bytes() const;
  static BitVec from_bytes(std::span<const uint8_t> bytes, size_t n);

  friend bool operator==(const BitVec&, const BitVec&) = default;

 private:
  void trim();

  size_t size_ = 0;
  std::vector<uint64_t> words_;
};

}  // namespace sq8
