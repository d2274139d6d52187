#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sq8/model.h"

namespace sq8::oracle {

// Cleartext integer-only inference. `activations[i]` is the output of layer i
// in HWC (or flat) order; the final ARGMAX_OUTPUT layer has an empty entry.
struct Reference {
  size_t label = 0;
  std::vector<std::vector<uint8_t>> activations;
};

Reference reference_infer(const Sq8Model& model, const Image& input);

// clamp(z3 + floor((m_prime * s + 2^{shift-1}) / 2^shift), lo, hi)
int requantize(int64_t s, const quant::FixedMultiplier& fm, int z3, int lo, int hi);

// floor((sum * round(2^31 / n) + 2^30) / 2^31)
int average(int64_t sum, size_t n);

// Golden dump: "SQ8G", u32 label, u32 layer count, then per layer a u32
// length and that many bytes.
std::vector<uint8_t> dump_golden(const Reference& ref);
Reference load_golden(std::span<const uint8_t> bytes);
// Content address of a dump: first 16 bytes of its BLAKE2b hash, hex.
std::string golden_name(std::span<const uint8_t> dump);

// Exhaustive expected-value tables for ring widths k <= 16 (k <= 12 for the
// 2^{2k}-entry pair tables). Values are indexed by their unsigned ring
// encoding.
inline constexpr int kMaxPairTableBits = 12;
std::vector<uint64_t> floor_div_table(int k, int m);   // floor(x / 2^m), x unsigned
std::vector<uint8_t> msb_table(int k);
// [a < b] on two's-complement values; entry a * 2^k + b.
std::vector<uint8_t> less_than_table(int k);
// clamp(x, lo, hi) on two's-complement values, ring encoded.
std::vector<uint64_t> clamp_table(int k, int64_t lo, int64_t hi);
// a * b mod 2^k; entry a * 2^k + b.
std::vector<uint64_t> mul_table(int k);

}  // namespace sq8::oracle
