#include "sq8/trunc.h"

#include <fmt/format.h>

#include "sq8/arith_share.h"
#include "sq8/bin_share.h"
#include "sq8/errors.h"

namespace sq8::trunc {

namespace {

void check_shift(const Ring& r, int m) {
  if (m <= 0 || m >= r.bits() - 1) {
    throw ConfigError(fmt::format("truncation by {} bits needs 0 < m < k-1 = {}", m, r.bits() - 1));
  }
}

struct MaskBits {
  std::vector<RepShare> r;       // sum_i r_i 2^i
  std::vector<RepShare> top;     // r_{k-1}
  std::vector<RepShare> middle;  // sum_{i=m}^{k-2} r_i 2^{i-m}
  std::vector<RepShare> low;     // sum_{i<m} r_i 2^i
};

MaskBits mask_from_bits(PartySession& s, size_t n, int m) {
  const Ring& ring = s.ring();
  const int k = ring.bits();
  const auto bits = arith::rand_bits(s, n * static_cast<size_t>(k));
  MaskBits out;
  out.r.resize(n);
  out.top.resize(n);
  out.middle.resize(n);
  out.low.resize(n);
  for (size_t e = 0; e < n; ++e) {
    const RepShare* b = bits.data() + e * k;
    RepShare r{}, mid{}, low{};
    for (int i = 0; i < k; ++i) {
      r = arith::add(ring, r, arith::mul_const(ring, b[i], u128{1} << i));
      if (i < m) low = arith::add(ring, low, arith::mul_const(ring, b[i], u128{1} << i));
      if (i >= m && i <= k - 2) {
        mid = arith::add(ring, mid, arith::mul_const(ring, b[i], u128{1} << (i - m)));
      }
    }
    out.r[e] = r;
    out.top[e] = b[k - 1];
    out.middle[e] = mid;
    out.low[e] = low;
  }
  return out;
}

// c' - middle + (r_{k-1} XOR c_{k-1}) 2^{k-m-1}
std::vector<RepShare> finish_pr(PartySession& s, std::span<const u128> c, const MaskBits& mask,
                                int m) {
  const Ring& ring = s.ring();
  const int k = ring.bits();
  const PartyId me = s.id();
  const u128 low_mask = (u128{1} << (k - m - 1)) - 1;
  const u128 top_weight = u128{1} << (k - m - 1);
  std::vector<RepShare> out(c.size());
  for (size_t e = 0; e < c.size(); ++e) {
    const u128 c_shift = (c[e] >> m) & low_mask;
    const bool c_top = ring.msb(c[e]);
    const RepShare b =
        c_top ? arith::add_const(me, ring, arith::neg(ring, mask.top[e]), 1) : mask.top[e];
    RepShare y = arith::mul_const(ring, b, top_weight);
    y = arith::sub(ring, y, mask.middle[e]);
    out[e] = arith::add_const(me, ring, y, c_shift);
  }
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

std::vector<RepShare> trunc_pr(PartySession& s, std::span<const RepShare> x, int m) {
  const Ring& ring = s.ring();
  check_shift(ring, m);
  const size_t n = x.size();
  const MaskBits mask = mask_from_bits(s, n, m);
  std::vector<RepShare> masked(n);
  for (size_t e = 0; e < n; ++e) masked[e] = arith::add(ring, x[e], mask.r[e]);
  const auto c = arith::open(s, masked);
  return finish_pr(s, c, mask, m);
}

std::vector<RepShare> trunc_pr_sp(PartySession& s, std::span<const RepShare> x, int m,
                                  TruncPrSpTrace* trace) {
  const Ring& ring = s.ring();
  check_shift(ring, m);
  const int k = ring.bits();
  const size_t n = x.size();
  const PartyId me = s.id();
  const PartyId p1(1), p2(2), p3(3);
  const u128 mid_mask = (u128{1} << (k - m - 1)) - 1;
  std::vector<RepShare> out(n);

  if (me == p3) {
    // Dealer: r from k random bits, 2-out-of-2 sharings, output masks.
    const auto r = s.prg_own().ring(ring, n);
    const auto r1 = s.prg_own().ring(ring, n);
    const auto top1 = s.prg_own().ring(ring, n);
    const auto mid1 = s.prg_own().ring(ring, n);
    const auto y1 = s.prg_own().ring(ring, n);
    const auto y3 = s.prg_own().ring(ring, n);
    std::vector<u128> to_p1(4 * n), to_p2(4 * n);
    for (size_t e = 0; e < n; ++e) {
      const u128 top = ring.msb(r[e]) ? 1 : 0;
      const u128 mid = (r[e] >> m) & mid_mask;
      to_p1[4 * e + 0] = r1[e];
      to_p1[4 * e + 1] = top1[e];
      to_p1[4 * e + 2] = mid1[e];
      to_p1[4 * e + 3] = y1[e];
      to_p2[4 * e + 0] = ring.sub(r[e], r1[e]);
      to_p2[4 * e + 1] = ring.sub(top, top1[e]);
      to_p2[4 * e + 2] = ring.sub(mid, mid1[e]);
      to_p2[4 * e + 3] = y3[e];
      out[e] = {y3[e], y1[e]};
    }
    std::vector<uint8_t> b1, b2;
    ring.encode(to_p1, b1);
    ring.encode(to_p2, b2);
    s.net().send(p1, std::move(b1));
    s.net().send(p2, std::move(b2));
    s.net().end_round();
    if (trace) {
      trace->y_prime.clear();
      trace->y_tilde.clear();
      trace->y_hat.assign(n, 0);
    }
    return out;
  }

  const PartyId other = me == p1 ? p2 : p1;
  const auto dealt = decode_n(ring, s.net().recv(p3), 4 * n, p3);
  s.net().end_round();

  // Two-party truncation on the 2-out-of-2 view of x.
  const auto x2 = arith::to_two_party(s, x);
  std::vector<u128> c_part(n);
  for (size_t e = 0; e < n; ++e) c_part[e] = ring.add(x2[e], dealt[4 * e + 0]);
  std::vector<uint8_t> cb;
  ring.encode(c_part, cb);
  const auto c_other = decode_n(ring, s.net().exchange(other, std::move(cb)), n, other);

  const u128 top_weight = u128{1} << (k - m - 1);
  std::vector<u128> y_prime(n), y_hat(n), diff(n);
  for (size_t e = 0; e < n; ++e) {
    const u128 c = ring.add(c_part[e], c_other[e]);
    const u128 c_shift = (c >> m) & mid_mask;
    const bool c_top = ring.msb(c);
    // b = r_{k-1} XOR c_{k-1} = c_{k-1} + r_{k-1} (1 - 2 c_{k-1})
    const u128 top_share = dealt[4 * e + 1];
    u128 b = c_top ? ring.neg(top_share) : top_share;
    if (c_top && me == p1) b = ring.add(b, 1);
    u128 y = ring.sub(ring.mul(b, top_weight), dealt[4 * e + 2]);
    if (me == p1) y = ring.add(y, c_shift);
    y_prime[e] = y;
    y_hat[e] = dealt[4 * e + 3];
    diff[e] = ring.sub(y, y_hat[e]);
  }

  std::vector<uint8_t> db;
  ring.encode(diff, db);
  const auto y_tilde = decode_n(ring, s.net().exchange(other, std::move(db)), n, other);

  for (size_t e = 0; e < n; ++e) {
    const u128 mixed = ring.add(diff[e], y_tilde[e]);
    out[e] = me == p1 ? RepShare{y_hat[e], mixed} : RepShare{mixed, y_hat[e]};
  }
  if (trace) {
    trace->y_prime = std::move(y_prime);
    trace->y_hat = std::move(y_hat);
    trace->y_tilde = y_tilde;
  }
  return out;
}

std::vector<RepShare> trunc_exact(PartySession& s, std::span<const RepShare> x, int m) {
  const Ring& ring = s.ring();
  check_shift(ring, m);
  const size_t n = x.size();
  const PartyId me = s.id();
  const MaskBits mask = mask_from_bits(s, n, m);
  std::vector<RepShare> masked(n);
  for (size_t e = 0; e < n; ++e) masked[e] = arith::add(ring, x[e], mask.r[e]);
  const auto c = arith::open(s, masked);
  auto y = finish_pr(s, c, mask, m);

  // Carry out of the low m bits: [c mod 2^m < r mod 2^m].
  const u128 low_mask = (u128{1} << m) - 1;
  std::vector<RepShare> c_low(n);
  for (size_t e = 0; e < n; ++e) c_low[e] = arith::constant(me, ring, c[e] & low_mask);
  const auto carry = bin::bit_to_arith(s, bin::less_than(s, c_low, mask.low));
  for (size_t e = 0; e < n; ++e) y[e] = arith::sub(ring, y[e], carry[e]);
  return y;
}

std::vector<RepShare> trunc(PartySession& s, std::span<const RepShare> x, int m, TruncMode mode) {
  if (mode == TruncMode::exact) return trunc_exact(s, x, m);
  if (s.options().prob_protocol == ProbProtocol::three_party) return trunc_pr_sp(s, x, m);
  return trunc_pr(s, x, m);
}

std::vector<RepShare> trunc_priv(PartySession& s, std::span<const RepShare> x,
                                 std::span<const RepShare> pow, int bound, TruncMode mode) {
  const auto scaled = arith::mul(s, pow, x);
  return trunc(s, scaled, bound, mode);
}

namespace {

std::vector<RepShare> lifted_trunc(PartySession& s, std::vector<RepShare> v, int m, TruncMode mode) {
  const Ring& ring = s.ring();
  const int k = ring.bits();
  if (m > k - 2) {
    throw ConfigError(fmt::format("signed rounding by {} bits needs m <= k-2 = {}", m, k - 2));
  }
  const u128 lift = u128{1} << (k - 2);
  const u128 add = ring.add(lift, u128{1} << (m - 1));
  for (auto& e : v) e = arith::add_const(s.id(), ring, e, add);
  auto y = trunc(s, v, m, mode);
  const u128 drop = ring.neg(u128{1} << (k - 2 - m));
  for (auto& e : y) e = arith::add_const(s.id(), ring, e, drop);
  return y;
}

}  // namespace

std::vector<RepShare> round_nearest(PartySession& s, std::span<const RepShare> x,
                                    std::span<const RepShare> pow, int bound, TruncMode mode) {
  check_shift(s.ring(), bound);
  return lifted_trunc(s, arith::mul(s, pow, x), bound, mode);
}

std::vector<RepShare> round_nearest_public(PartySession& s, std::span<const RepShare> x, int m,
                                           TruncMode mode) {
  check_shift(s.ring(), m);
  return lifted_trunc(s, std::vector<RepShare>(x.begin(), x.end()), m, mode);
}

int trunc_rounds(int k, TruncMode mode, ProbProtocol protocol) {
  // rand_bits: one input round + two XOR multiplications; then one opening.
  const int masked_open = 4;
  if (mode == TruncMode::exact) {
    // + comparison adder + daBit conversion (refill: 2 input + 2 mul rounds).
    return masked_open + bin::msb_rounds(k) + 1 + 4;
  }
  return protocol == ProbProtocol::three_party ? 3 : masked_open;
}

}  // namespace sq8::trunc
