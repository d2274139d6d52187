#include "sq8/prg.h"

#include <cstring>

#include <sodium.h>

#include "sq8/errors.h"

namespace sq8 {

void Prg::bytes(std::span<uint8_t> out) {
  uint8_t nonce[crypto_stream_chacha20_NONCEBYTES] = {};
  const uint64_t n = counter_++;
  for (int i = 0; i < 8; ++i) nonce[i] = static_cast<uint8_t>(n >> (8 * i));
  crypto_stream_chacha20(out.data(), out.size(), nonce, key_.data());
}

std::vector<u128> Prg::ring(const Ring& r, size_t n) {
  std::vector<u128> out(n);
  if (n == 0) return out;
  bytes({reinterpret_cast<uint8_t*>(out.data()), n * sizeof(u128)});
  for (auto& v : out) v = r.reduce(v);
  return out;
}

std::vector<uint64_t> Prg::bit_words(size_t n) {
  std::vector<uint64_t> out((n + 63) / 64);
  if (out.empty()) return out;
  bytes({reinterpret_cast<uint8_t*>(out.data()), out.size() * sizeof(uint64_t)});
  if (n % 64 != 0) out.back() &= (uint64_t{1} << (n % 64)) - 1;
  return out;
}

uint64_t Prg::u64() {
  uint64_t v = 0;
  bytes({reinterpret_cast<uint8_t*>(&v), sizeof v});
  return v;
}

PrgKey derive_key(uint64_t seed, std::string_view label, uint64_t index) {
  if (sodium_init() < 0) throw ConfigError("libsodium initialisation failed");
  std::vector<uint8_t> msg(16 + label.size());
  for (int i = 0; i < 8; ++i) msg[i] = static_cast<uint8_t>(seed >> (8 * i));
  std::memcpy(msg.data() + 8, label.data(), label.size());
  for (int i = 0; i < 8; ++i) msg[8 + label.size() + i] = static_cast<uint8_t>(index >> (8 * i));
  PrgKey key{};
  crypto_generichash(key.data(), key.size(), msg.data(), msg.size(), nullptr, 0);
  return key;
}

PrgKey random_key() {
  if (sodium_init() < 0) throw ConfigError("libsodium initialisation failed");
  PrgKey key{};
  randombytes_buf(key.data(), key.size());
  return key;
}

}  // namespace sq8
