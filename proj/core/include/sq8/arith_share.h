#pragma once

#include <array>
#include <span>
#include <vector>

#include "sq8/session.h"

namespace sq8::arith {

// ---- local (communication-free) operations ---------------------------------

inline RepShare add(const Ring& r, const RepShare& a, const RepShare& b) {
  return {r.add(a.first, b.first), r.add(a.second, b.second)};
}

inline RepShare sub(const Ring& r, const RepShare& a, const RepShare& b) {
  return {r.sub(a.first, b.first), r.sub(a.second, b.second)};
}

inline RepShare neg(const Ring& r, const RepShare& a) { return {r.neg(a.first), r.neg(a.second)}; }

inline RepShare mul_const(const Ring& r, const RepShare& a, u128 c) {
  return {r.mul(a.first, c), r.mul(a.second, c)};
}

// A public constant lives in component x_1, held by P_1 (as first) and P_3
// (as second).
inline RepShare add_const(PartyId me, const Ring& r, const RepShare& a, u128 c) {
  RepShare out = a;
  if (me.value() == 1) out.first = r.add(out.first, c);
  if (me.value() == 3) out.second = r.add(out.second, c);
  return out;
}

inline RepShare constant(PartyId me, const Ring& r, u128 c) { return add_const(me, r, {}, c); }

// x_i y_i + x_i y_{i+1} + x_{i+1} y_i: this party's additive share of x*y.
inline u128 cross_term(const Ring& r, const RepShare& a, const RepShare& b) {
  return r.reduce(a.first * (b.first + b.second) + a.second * b.first);
}

// Session-bound conveniences.
RepShare add_const(PartySession& s, const RepShare& a, u128 c);
RepShare constant(PartySession& s, u128 c);
std::vector<RepShare> add(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b);
std::vector<RepShare> sub(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b);

// ---- sharing and opening ---------------------------------------------------

// `values` is read only at `owner` and must hold n elements there.
std::vector<RepShare> input(PartySession& s, PartyId owner, std::span<const u128> values, size_t n);

// Every party shares n values of its own in one round; result[j] holds the
// sharings of party j+1's values.
std::array<std::vector<RepShare>, 3> input_all(PartySession& s, std::span<const u128> mine);

// One round; each party sends one ring element per value.
std::vector<u128> open(PartySession& s, std::span<const RepShare> shares);
u128 open(PartySession& s, const RepShare& share);

// Non-interactive sharing of a uniformly random value.
std::vector<RepShare> random(PartySession& s, size_t n);

// ---- multiplication --------------------------------------------------------

// Turns per-party additive terms t_i (summing to the secret) into replicated
// shares: re-randomise with a PRG zero sharing, send to P_{i-1}, receive from
// P_{i+1}. One ring element per value per party.
std::vector<RepShare> reshare(PartySession& s, std::vector<u128> terms);

std::vector<RepShare> mul(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b);
RepShare mul(PartySession& s, const RepShare& a, const RepShare& b);

// Inner product; same traffic as a single mul whatever the length.
RepShare dot(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b);
// `rows` inner products of length `len`, a and b row-major; one round total.
std::vector<RepShare> dot_batch(PartySession& s, std::span<const RepShare> a,
                                std::span<const RepShare> b, size_t rows, size_t len);

// a XOR b for shared bits: a + b - 2ab.
std::vector<RepShare> xor_bits(PartySession& s, std::span<const RepShare> a,
                               std::span<const RepShare> b);

// Uniform shared bits: every party input-shares a private bit, then the three
// are XORed together (two multiplication rounds).
std::vector<RepShare> rand_bits(PartySession& s, size_t n);

// ---- conversion ------------------------------------------------------------

// 2-out-of-2 additive sharing between P_1 (x_1 + x_2) and P_2 (x_3). P_3 gets
// an empty vector.
std::vector<u128> to_two_party(PartySession& s, std::span<const RepShare> shares);

}  // namespace sq8::arith
