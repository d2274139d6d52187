#pragma once

#include <span>
#include <vector>

#include "sq8/session.h"

namespace sq8::bin {

BinShare zeros(size_t n);

// Local and free.
BinShare bxor(const BinShare& a, const BinShare& b);
// Public constant folded into component 1 (P_1's first, P_3's second).
BinShare xor_const(PartyId me, const BinShare& a, const BitVec& c);

// Replicated AND over Z_2; one round, ceil(n/64) words per party.
BinShare band(PartySession& s, const BinShare& a, const BinShare& b);

// Evaluates several AND gate groups as a single communication round.
std::vector<BinShare> band_layer(PartySession& s,
                                 std::span<const std::pair<const BinShare*, const BinShare*>> gates);

BitVec open(PartySession& s, const BinShare& a);

// Every party shares n private bits in one round; result[j] belongs to P_{j+1}.
std::array<BinShare, 3> input_all(PartySession& s, const BitVec& mine);

// Concatenation / slicing along the lane axis.
BinShare concat(const BinShare& a, const BinShare& b);
BinShare slice(const BinShare& a, size_t offset, size_t len);

// Bit k-1 of each shared value. The three replicated components are turned
// into binary sharings without interaction, reduced to two operands by one
// carry-save layer, and the carry into the top bit comes out of a
// Kogge-Stone prefix tree pruned to the MSB. 2 + ceil(log2(k-2)) rounds.
BinShare msb(PartySession& s, std::span<const RepShare> x);

// Number of rounds msb() uses at ring width k.
int msb_rounds(int k);
// AND gates per value in msb() at ring width k.
size_t msb_and_gates(int k);

// [a < b] for two's-complement values with |a - b| < 2^{k-1}.
BinShare less_than(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b);

// Tops up the daBit pool to at least `n` entries; generation is batched in
// multiples of the session's dabit_batch.
void ensure_dabits(PartySession& s, size_t n);
// Generates exactly n fresh daBits.
DaBitPool make_dabits(PartySession& s, size_t n);

// Binary shared bits to arithmetic shares via one masked binary opening.
std::vector<RepShare> bit_to_arith(PartySession& s, const BinShare& b);

// s * (a1 - a0) + a0 for shared bits s; one multiplication round.
std::vector<RepShare> select(PartySession& s, std::span<const RepShare> bits,
                             std::span<const RepShare> a1, std::span<const RepShare> a0);

// min(max(x, lo), hi) for public lo <= hi (ring-encoded two's complement).
// Both comparisons share one adder batch and both selections one round.
std::vector<RepShare> clamp(PartySession& s, std::span<const RepShare> x, u128 lo, u128 hi);

}  // namespace sq8::bin
