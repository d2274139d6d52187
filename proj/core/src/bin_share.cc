#include "sq8/bin_share.h"

#include <fmt/format.h>

#include "sq8/arith_share.h"
#include "sq8/errors.h"

namespace sq8::bin {

BinShare zeros(size_t n) { return {BitVec(n), BitVec(n)}; }

BinShare bxor(const BinShare& a, const BinShare& b) {
  return {a.first ^ b.first, a.second ^ b.second};
}

BinShare xor_const(PartyId me, const BinShare& a, const BitVec& c) {
  BinShare out = a;
  if (me.value() == 1) out.first ^= c;
  if (me.value() == 3) out.second ^= c;
  return out;
}

BinShare concat(const BinShare& a, const BinShare& b) {
  BinShare out = a;
  out.first.append(b.first);
  out.second.append(b.second);
  return out;
}

BinShare slice(const BinShare& a, size_t offset, size_t len) {
  return {a.first.slice(offset, len), a.second.slice(offset, len)};
}

BinShare band(PartySession& s, const BinShare& a, const BinShare& b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("AND operands of {} and {} bits", a.size(), b.size()));
  }
  const size_t n = a.size();
  const PartyId me = s.id();
  BitVec t = (a.first & b.first) ^ (a.first & b.second) ^ (a.second & b.first);
  t ^= BitVec(n, s.prg_prev().bit_words(n));
  t ^= BitVec(n, s.prg_next().bit_words(n));
  const auto got = s.net().pass(me.prev(), t.to_bytes(), me.next());
  BitVec next_part;
  try {
    next_part = BitVec::from_bytes(got, n);
  } catch (const ShapeError& e) {
    throw FramingError(me.next().value(), e.what());
  }
  return {std::move(t), std::move(next_part)};
}

std::vector<BinShare> band_layer(PartySession& s,
                                 std::span<const std::pair<const BinShare*, const BinShare*>> gates) {
  BinShare lhs = zeros(0);
  BinShare rhs = zeros(0);
  for (const auto& [l, r] : gates) {
    if (l->size() != r->size()) {
      throw ShapeError(fmt::format("AND operands of {} and {} bits", l->size(), r->size()));
    }
    lhs = concat(lhs, *l);
    rhs = concat(rhs, *r);
  }
  const BinShare prod = band(s, lhs, rhs);
  std::vector<BinShare> out;
  out.reserve(gates.size());
  size_t off = 0;
  for (const auto& g : gates) {
    out.push_back(slice(prod, off, g.first->size()));
    off += g.first->size();
  }
  return out;
}

BitVec open(PartySession& s, const BinShare& a) {
  const PartyId me = s.id();
  const size_t n = a.size();
  const auto got = s.net().pass(me.next(), a.first.to_bytes(), me.prev());
  BitVec missing;
  try {
    missing = BitVec::from_bytes(got, n);
  } catch (const ShapeError& e) {
    throw FramingError(me.prev().value(), e.what());
  }
  return a.first ^ a.second ^ missing;
}

std::array<BinShare, 3> input_all(PartySession& s, const BitVec& mine) {
  const PartyId me = s.id();
  const size_t n = mine.size();
  std::array<BinShare, 3> out;
  std::array<BitVec, 3> part;
  for (int o = 1; o <= 3; ++o) {
    const PartyId owner(o);
    if (owner == me) {
      BitVec x0(n, s.prg_prev().bit_words(n));
      BitVec x1(n, s.prg_next().bit_words(n));
      part[owner.index()] = mine ^ x0 ^ x1;
      out[owner.index()] = {std::move(x0), std::move(x1)};
    } else if (me == owner.next()) {
      part[owner.index()] = BitVec(n, s.prg_prev().bit_words(n));
    } else {
      part[owner.index()] = BitVec(n, s.prg_next().bit_words(n));
    }
  }
  const auto payload = part[me.index()].to_bytes();
  s.net().send(me.next(), payload);
  s.net().send(me.prev(), payload);
  BitVec from_prev;
  BitVec from_next;
  try {
    from_prev = BitVec::from_bytes(s.net().recv(me.prev()), n);
  } catch (const ShapeError& e) {
    throw FramingError(me.prev().value(), e.what());
  }
  try {
    from_next = BitVec::from_bytes(s.net().recv(me.next()), n);
  } catch (const ShapeError& e) {
    throw FramingError(me.next().value(), e.what());
  }
  s.net().end_round();
  out[me.prev().index()] = {part[me.prev().index()], from_prev};
  out[me.next().index()] = {from_next, part[me.next().index()]};
  return out;
}

namespace {

int ceil_log2(size_t n) {
  int l = 0;
  while ((size_t{1} << l) < n) ++l;
  return l;
}

// Bit plane j of a list of ring values.
BitVec plane(std::span<const u128> values, int j) {
  BitVec out(values.size());
  auto w = out.words();
  for (size_t i = 0; i < values.size(); ++i) {
    w[i / 64] |= static_cast<uint64_t>((values[i] >> j) & 1) << (i % 64);
  }
  return out;
}

}  // namespace

int msb_rounds(int k) { return 2 + ceil_log2(static_cast<size_t>(k - 2)); }

size_t msb_and_gates(int k) {
  size_t gates = static_cast<size_t>(k - 1) + static_cast<size_t>(k - 2);
  // Prefix tree: each merge costs two ANDs, one when the lower group is the
  // lowest (its propagate is never needed).
  size_t groups = static_cast<size_t>(k - 2);
  while (groups > 1) {
    gates += 2 * (groups / 2) - 1;
    groups = (groups + 1) / 2;
  }
  return gates;
}

BinShare msb(PartySession& s, std::span<const RepShare> x) {
  const int k = s.ring().bits();
  const size_t n = x.size();
  const int me = s.id().value();

  std::vector<u128> firsts(n), seconds(n);
  for (size_t i = 0; i < n; ++i) {
    firsts[i] = x[i].first;
    seconds[i] = x[i].second;
  }

  // Binary sharing of component c: P_c holds it as first, P_{c-1} as second.
  auto component = [&](int c, int j) -> BinShare {
    if (c == me) return {plane(firsts, j), BitVec(n)};
    if (c == 1 + (me % 3)) return {BitVec(n), plane(seconds, j)};
    return zeros(n);
  };

  std::vector<BinShare> sum(k);
  std::vector<BinShare> a_xor_c(k - 1), b_xor_c(k - 1), cs(k - 1);
  for (int j = 0; j < k; ++j) {
    BinShare a = component(1, j);
    BinShare b = component(2, j);
    BinShare c = component(3, j);
    sum[j] = bxor(bxor(a, b), c);
    if (j < k - 1) {
      a_xor_c[j] = bxor(a, c);
      b_xor_c[j] = bxor(b, c);
      cs[j] = std::move(c);
    }
  }

  // Carry-save layer: carry_j = maj(a, b, c) = ((a^c) & (b^c)) ^ c.
  std::vector<std::pair<const BinShare*, const BinShare*>> gates;
  for (int j = 0; j < k - 1; ++j) gates.emplace_back(&a_xor_c[j], &b_xor_c[j]);
  auto carry = band_layer(s, gates);
  for (int j = 0; j < k - 1; ++j) carry[j] = bxor(carry[j], cs[j]);

  // Two-operand addition A + B with A = sum, B = carry << 1. B_0 = 0, so no
  // carry leaves position 0 and only positions 1..k-2 feed the top carry.
  struct Group {
    BinShare g;
    BinShare p;
    bool lowest;
  };
  std::vector<Group> groups;
  {
    gates.clear();
    for (int j = 1; j <= k - 2; ++j) gates.emplace_back(&sum[j], &carry[j - 1]);
    auto g = band_layer(s, gates);
    for (int j = 1; j <= k - 2; ++j) {
      groups.push_back({std::move(g[j - 1]), bxor(sum[j], carry[j - 1]), j == 1});
    }
  }

  while (groups.size() > 1) {
    gates.clear();
    const size_t pairs = groups.size() / 2;
    for (size_t t = 0; t < pairs; ++t) {
      const Group& lo = groups[2 * t];
      const Group& hi = groups[2 * t + 1];
      gates.emplace_back(&hi.p, &lo.g);
      if (!lo.lowest) gates.emplace_back(&hi.p, &lo.p);
    }
    auto prod = band_layer(s, gates);
    std::vector<Group> next;
    size_t idx = 0;
    for (size_t t = 0; t < pairs; ++t) {
      Group& lo = groups[2 * t];
      Group& hi = groups[2 * t + 1];
      Group merged;
      merged.g = bxor(hi.g, prod[idx++]);
      merged.lowest = lo.lowest;
      merged.p = lo.lowest ? zeros(n) : std::move(prod[idx++]);
      next.push_back(std::move(merged));
    }
    if (groups.size() % 2 == 1) next.push_back(std::move(groups.back()));
    groups = std::move(next);
  }

  BinShare top = bxor(sum[k - 1], carry[k - 2]);
  if (!groups.empty()) top = bxor(top, groups[0].g);
  return top;
}

BinShare less_than(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b) {
  return msb(s, arith::sub(s, a, b));
}

DaBitPool make_dabits(PartySession& s, size_t n) {
  BitVec mine(n, s.prg_own().bit_words(n));
  std::vector<u128> mine_arith(n);
  for (size_t i = 0; i < n; ++i) mine_arith[i] = mine.get(i);

  const auto shared_bin = input_all(s, mine);
  const auto shared_arith = arith::input_all(s, mine_arith);

  DaBitPool out;
  out.binary = bxor(bxor(shared_bin[0], shared_bin[1]), shared_bin[2]);
  const auto x12 = arith::xor_bits(s, shared_arith[0], shared_arith[1]);
  out.arith = arith::xor_bits(s, x12, shared_arith[2]);
  return out;
}

void ensure_dabits(PartySession& s, size_t n) {
  DaBitPool& pool = s.dabits();
  if (pool.size() >= n) return;
  const size_t batch = std::max<size_t>(s.options().dabit_batch, 1);
  const size_t missing = n - pool.size();
  const size_t want = ((missing + batch - 1) / batch) * batch;
  DaBitPool fresh = make_dabits(s, want);
  if (pool.size() == 0) {
    pool = std::move(fresh);
  } else {
    pool.binary = concat(pool.binary, fresh.binary);
    pool.arith.insert(pool.arith.end(), fresh.arith.begin(), fresh.arith.end());
  }
}

std::vector<RepShare> bit_to_arith(PartySession& s, const BinShare& b) {
  const size_t n = b.size();
  ensure_dabits(s, n);
  DaBitPool& pool = s.dabits();
  const BinShare r_bin = slice(pool.binary, 0, n);
  const std::vector<RepShare> r_arith(pool.arith.begin(), pool.arith.begin() + n);
  pool.binary = slice(pool.binary, n, pool.size() - n);
  pool.arith.erase(pool.arith.begin(), pool.arith.begin() + n);

  const BitVec c = open(s, bxor(b, r_bin));
  const Ring& r = s.ring();
  std::vector<RepShare> out(n);
  for (size_t i = 0; i < n; ++i) {
    // b = c ^ r = c + r - 2cr
    out[i] = c.get(i) ? arith::add_const(s.id(), r, arith::neg(r, r_arith[i]), 1) : r_arith[i];
  }
  return out;
}

std::vector<RepShare> select(PartySession& s, std::span<const RepShare> bits,
                             std::span<const RepShare> a1, std::span<const RepShare> a0) {
  if (bits.size() != a1.size() || bits.size() != a0.size()) {
    throw ShapeError(fmt::format("select over {} bits with operands of {} and {}", bits.size(),
                                 a1.size(), a0.size()));
  }
  const auto diff = arith::sub(s, a1, a0);
  const auto prod = arith::mul(s, bits, diff);
  return arith::add(s, prod, a0);
}

std::vector<RepShare> clamp(PartySession& s, std::span<const RepShare> x, u128 lo, u128 hi) {
  const Ring& r = s.ring();
  const PartyId me = s.id();
  const size_t n = x.size();
  if (r.to_signed(lo) > r.to_signed(hi)) {
    throw ConfigError("clamp range with lo > hi");
  }
  // [x < lo] = msb(x - lo), [hi < x] = msb(hi - x), in one adder batch.
  std::vector<RepShare> diffs(2 * n);
  std::vector<RepShare> deltas(2 * n);
  for (size_t i = 0; i < n; ++i) {
    diffs[i] = arith::add_const(me, r, x[i], r.neg(lo));
    diffs[n + i] = arith::add_const(me, r, arith::neg(r, x[i]), hi);
    deltas[i] = arith::add_const(me, r, arith::neg(r, x[i]), lo);
    deltas[n + i] = diffs[n + i];
  }
  const auto bits = bit_to_arith(s, msb(s, diffs));
  // lo <= hi makes the two bits exclusive, so both corrections can be added.
  const auto prod = arith::mul(s, bits, deltas);
  std::vector<RepShare> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i] = arith::add(r, arith::add(r, x[i], prod[i]), prod[n + i]);
  }
  return out;
}

}  // namespace sq8::bin
