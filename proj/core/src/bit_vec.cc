#include "sq8/bit_vec.h"

#include <fmt/format.h>

#include "sq8/errors.h"

namespace sq8 {

BitVec::BitVec(size_t n, std::vector<uint64_t> words) : size_(n), words_(std::move(words)) {
  if (words_.size() != (n + 63) / 64) {
    throw ShapeError(fmt::format("{} words cannot hold exactly {} bits", words_.size(), n));
  }
  trim();
}

void BitVec::trim() {
  if (size_ % 64 != 0 && !words_.empty()) {
    words_.back() &= (uint64_t{1} << (size_ % 64)) - 1;
  }
}

BitVec& BitVec::operator^=(const BitVec& o) {
  if (o.size_ != size_) throw ShapeError(fmt::format("bit length {} vs {}", size_, o.size_));
  for (size_t i = 0; i < words_.size(); ++i) words_[i] ^= o.words_[i];
  return *this;
}

BitVec& BitVec::operator&=(const BitVec& o) {
  if (o.size_ != size_) throw ShapeError(fmt::format("bit length {} vs {}", size_, o.size_));
  for (size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
  return *this;
}

BitVec BitVec::operator~() const {
  BitVec r = *this;
  for (auto& w : r.words_) w = ~w;
  r.trim();
  return r;
}

void BitVec::append(const BitVec& o) {
  if (o.size_ == 0) return;
  const size_t shift = size_ % 64;
  const size_t new_size = size_ + o.size_;
  if (shift == 0) {
    words_.insert(words_.end(), o.words_.begin(), o.words_.end());
  } else {
    words_.resize((new_size + 63) / 64, 0);
    size_t base = size_ / 64;
    for (size_t i = 0; i < o.words_.size(); ++i) {
      const uint64_t w = o.words_[i];
      words_[base + i] |= w << shift;
      if (base + i + 1 < words_.size()) words_[base + i + 1] |= w >> (64 - shift);
    }
  }
  size_ = new_size;
  words_.resize((size_ + 63) / 64);
  trim();
}

BitVec BitVec::slice(size_t offset, size_t len) const {
  if (offset + len > size_) {
    throw ShapeError(fmt::format("slice [{}, {}) out of {} bits", offset, offset + len, size_));
  }
  BitVec r(len);
  const size_t shift = offset % 64;
  const size_t base = offset / 64;
  for (size_t i = 0; i < r.words_.size(); ++i) {
    uint64_t w = words_[base + i] >> shift;
    if (shift != 0 && base + i + 1 < words_.size()) w |= words_[base + i + 1] << (64 - shift);
    r.words_[i] = w;
  }
  r.trim();
  return r;
}

std::vector<uint8_t> BitVec::to_bytes() const {
  std::vector<uint8_t> out(words_.size() * 8);
  for (size_t i = 0; i < words_.size(); ++i) {
    for (int j = 0; j < 8; ++j) out[8 * i + j] = static_cast<uint8_t>(words_[i] >> (8 * j));
  }
  return out;
}

BitVec BitVec::from_bytes(std::span<const uint8_t> bytes, size_t n) {
  const size_t nwords = (n + 63) / 64;
  if (bytes.size() != nwords * 8) {
    throw ShapeError(fmt::format("{} bytes do not encode {} packed bits", bytes.size(), n));
  }
  std::vector<uint64_t> words(nwords);
  for (size_t i = 0; i < nwords; ++i) {
    uint64_t w = 0;
    for (int j = 0; j < 8; ++j) w |= uint64_t{bytes[8 * i + j]} << (8 * j);
    words[i] = w;
  }
  return BitVec(n, std::move(words));
}

}  // namespace sq8
