#include "sq8/arith_share.h"

#include <fmt/format.h>

#include "sq8/errors.h"

namespace sq8::arith {

namespace {

void check_same_length(size_t a, size_t b) {
  if (a != b) throw ShapeError(fmt::format("operand lengths differ: {} vs {}", a, b));
}

std::vector<uint8_t> encode(const Ring& r, std::span<const u128> v) {
  std::vector<uint8_t> out;
  r.encode(v, out);
  return out;
}

std::vector<u128> decode_n(const Ring& r, std::span<const uint8_t> bytes, size_t n, PartyId from) {
  auto v = r.decode(bytes);
  if (v.size() != n) {
    throw FramingError(from.value(), fmt::format("expected {} ring elements, got {}", n, v.size()));
  }
  return v;
}

}  // namespace

RepShare add_const(PartySession& s, const RepShare& a, u128 c) {
  return add_const(s.id(), s.ring(), a, s.ring().reduce(c));
}

RepShare constant(PartySession& s, u128 c) { return constant(s.id(), s.ring(), s.ring().reduce(c)); }

std::vector<RepShare> add(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b) {
  check_same_length(a.size(), b.size());
  std::vector<RepShare> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = add(s.ring(), a[i], b[i]);
  return out;
}

std::vector<RepShare> sub(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b) {
  check_same_length(a.size(), b.size());
  std::vector<RepShare> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = sub(s.ring(), a[i], b[i]);
  return out;
}

std::vector<RepShare> input(PartySession& s, PartyId owner, std::span<const u128> values, size_t n) {
  const Ring& r = s.ring();
  const PartyId me = s.id();
  std::vector<RepShare> out(n);
  if (me == owner) {
    if (values.size() != n) {
      throw ShapeError(fmt::format("owner provided {} values for an input of {}", values.size(), n));
    }
    // x_o from k_o (shared with P_{o-1}), x_{o+1} from k_{o+1} (shared with P_{o+1}).
    const auto x0 = s.prg_prev().ring(r, n);
    const auto x1 = s.prg_next().ring(r, n);
    std::vector<u128> x2(n);
    for (size_t i = 0; i < n; ++i) {
      x2[i] = r.sub(r.sub(r.reduce(values[i]), x0[i]), x1[i]);
      out[i] = {x0[i], x1[i]};
    }
    const auto payload = encode(r, x2);
    s.net().send(me.next(), payload);
    s.net().send(me.prev(), payload);
    s.net().end_round();
  } else if (me == owner.next()) {
    const auto x1 = s.prg_prev().ring(r, n);
    const auto x2 = decode_n(r, s.net().recv(owner), n, owner);
    s.net().end_round();
    for (size_t i = 0; i < n; ++i) out[i] = {x1[i], x2[i]};
  } else {
    const auto x0 = s.prg_next().ring(r, n);
    const auto x2 = decode_n(r, s.net().recv(owner), n, owner);
    s.net().end_round();
    for (size_t i = 0; i < n; ++i) out[i] = {x2[i], x0[i]};
  }
  return out;
}

std::array<std::vector<RepShare>, 3> input_all(PartySession& s, std::span<const u128> mine) {
  const Ring& r = s.ring();
  const PartyId me = s.id();
  const size_t n = mine.size();
  std::array<std::vector<RepShare>, 3> out;
  std::array<std::vector<u128>, 3> own_component;  // the PRG-derived part per owner

  for (int o = 1; o <= 3; ++o) {
    const PartyId owner(o);
    if (owner == me) {
      const auto x0 = s.prg_prev().ring(r, n);
      const auto x1 = s.prg_next().ring(r, n);
      std::vector<u128> x2(n);
      out[owner.index()].resize(n);
      for (size_t i = 0; i < n; ++i) {
        x2[i] = r.sub(r.sub(r.reduce(mine[i]), x0[i]), x1[i]);
        out[owner.index()][i] = {x0[i], x1[i]};
      }
      own_component[owner.index()] = std::move(x2);
    } else if (me == owner.next()) {
      own_component[owner.index()] = s.prg_prev().ring(r, n);
    } else {
      own_component[owner.index()] = s.prg_next().ring(r, n);
    }
  }

  const auto payload = encode(r, own_component[me.index()]);
  s.net().send(me.next(), payload);
  s.net().send(me.prev(), payload);
  const auto from_prev = decode_n(r, s.net().recv(me.prev()), n, me.prev());
  const auto from_next = decode_n(r, s.net().recv(me.next()), n, me.next());
  s.net().end_round();

  // Owner P_{i-1}: I am its next, holding (x_{o+1}, x_{o+2}).
  const auto& prg_prev_part = own_component[me.prev().index()];
  out[me.prev().index()].resize(n);
  for (size_t i = 0; i < n; ++i) out[me.prev().index()][i] = {prg_prev_part[i], from_prev[i]};
  // Owner P_{i+1}: I am its prev, holding (x_{o+2}, x_o).
  const auto& prg_next_part = own_component[me.next().index()];
  out[me.next().index()].resize(n);
  for (size_t i = 0; i < n; ++i) out[me.next().index()][i] = {from_next[i], prg_next_part[i]};
  return out;
}

std::vector<u128> open(PartySession& s, std::span<const RepShare> shares) {
  const Ring& r = s.ring();
  const PartyId me = s.id();
  const size_t n = shares.size();
  std::vector<u128> firsts(n);
  for (size_t i = 0; i < n; ++i) firsts[i] = shares[i].first;
  const auto payload = encode(r, firsts);

  std::vector<u128> missing;
  if (s.options().consistency_checks) {
    s.net().send(me.next(), payload);
    s.net().send(me.prev(), payload);
    missing = decode_n(r, s.net().recv(me.prev()), n, me.prev());
    const auto echo = decode_n(r, s.net().recv(me.next()), n, me.next());
    s.net().end_round();
    for (size_t i = 0; i < n; ++i) {
      if (echo[i] != shares[i].second) {
        throw ConsistencyError(fmt::format(
            "party {} and party {} disagree on a shared component (element {})", me.value(),
            me.next().value(), i));
      }
    }
  } else {
    missing = decode_n(r, s.net().pass(me.next(), payload, me.prev()), n, me.prev());
  }

  std::vector<u128> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i] = r.add(r.add(shares[i].first, shares[i].second), missing[i]);
  }
  return out;
}

u128 open(PartySession& s, const RepShare& share) { return open(s, std::span(&share, 1))[0]; }

std::vector<RepShare> random(PartySession& s, size_t n) {
  const auto a = s.prg_prev().ring(s.ring(), n);
  const auto b = s.prg_next().ring(s.ring(), n);
  std::vector<RepShare> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {a[i], b[i]};
  return out;
}

std::vector<RepShare> reshare(PartySession& s, std::vector<u128> terms) {
  const Ring& r = s.ring();
  const PartyId me = s.id();
  const size_t n = terms.size();
  // alpha_i = F(k_i) - F(k_{i+1}) sums to zero over the three parties.
  const auto a = s.prg_prev().ring(r, n);
  const auto b = s.prg_next().ring(r, n);
  for (size_t i = 0; i < n; ++i) terms[i] = r.sub(r.add(terms[i], a[i]), b[i]);
  const auto got = decode_n(r, s.net().pass(me.prev(), encode(r, terms), me.next()), n, me.next());
  std::vector<RepShare> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {terms[i], got[i]};
  return out;
}

std::vector<RepShare> mul(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b) {
  check_same_length(a.size(), b.size());
  std::vector<u128> t(a.size());
  for (size_t i = 0; i < a.size(); ++i) t[i] = cross_term(s.ring(), a[i], b[i]);
  return reshare(s, std::move(t));
}

RepShare mul(PartySession& s, const RepShare& a, const RepShare& b) {
  return mul(s, std::span(&a, 1), std::span(&b, 1))[0];
}

RepShare dot(PartySession& s, std::span<const RepShare> a, std::span<const RepShare> b) {
  check_same_length(a.size(), b.size());
  if (a.empty()) throw ShapeError("dot product of empty vectors");
  return dot_batch(s, a, b, 1, a.size())[0];
}

std::vector<RepShare> dot_batch(PartySession& s, std::span<const RepShare> a,
                                std::span<const RepShare> b, size_t rows, size_t len) {
  if (a.size() != rows * len || b.size() != rows * len) {
    throw ShapeError(fmt::format("dot batch of {}x{} needs {} elements per operand, got {} and {}",
                                 rows, len, rows * len, a.size(), b.size()));
  }
  const Ring& r = s.ring();
  std::vector<u128> t(rows);
  for (size_t row = 0; row < rows; ++row) {
    u128 acc = 0;
    const RepShare* pa = a.data() + row * len;
    const RepShare* pb = b.data() + row * len;
    for (size_t j = 0; j < len; ++j) {
      acc += pa[j].first * (pb[j].first + pb[j].second) + pa[j].second * pb[j].first;
    }
    t[row] = r.reduce(acc);
  }
  return reshare(s, std::move(t));
}

std::vector<RepShare> xor_bits(PartySession& s, std::span<const RepShare> a,
                               std::span<const RepShare> b) {
  const Ring& r = s.ring();
  const auto ab = mul(s, a, b);
  std::vector<RepShare> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    out[i] = sub(r, add(r, a[i], b[i]), mul_const(r, ab[i], 2));
  }
  return out;
}

std::vector<RepShare> rand_bits(PartySession& s, size_t n) {
  const auto words = s.prg_own().bit_words(n);
  std::vector<u128> mine(n);
  for (size_t i = 0; i < n; ++i) mine[i] = (words[i / 64] >> (i % 64)) & 1;
  const auto shared = input_all(s, mine);
  const auto b12 = xor_bits(s, shared[0], shared[1]);
  return xor_bits(s, b12, shared[2]);
}

std::vector<u128> to_two_party(PartySession& s, std::span<const RepShare> shares) {
  const Ring& r = s.ring();
  std::vector<u128> out;
  if (s.id().value() == 1) {
    out.resize(shares.size());
    for (size_t i = 0; i < shares.size(); ++i) out[i] = r.add(shares[i].first, shares[i].second);
  } else if (s.id().value() == 2) {
    out.resize(shares.size());
    for (size_t i = 0; i < shares.size(); ++i) out[i] = shares[i].second;
  }
  return out;
}

}  // namespace sq8::arith
