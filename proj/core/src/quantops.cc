#include "sq8/quantops.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sq8/arith_share.h"
#include "sq8/bin_share.h"
#include "sq8/errors.h"
#include "sq8/trunc.h"

namespace sq8::quant {

void validate(const QuantParams& qp) {
  if (!std::isfinite(qp.scale) || qp.scale <= 0) {
    throw ConfigError(fmt::format("quantization scale {} is not positive", qp.scale));
  }
  if (qp.zero_point < 0 || qp.zero_point > 255) {
    throw ConfigError(fmt::format("zero point {} outside [0, 255]", qp.zero_point));
  }
}

int quantize(double alpha, const QuantParams& qp) {
  const double q = std::round(alpha / qp.scale) + qp.zero_point;
  return static_cast<int>(std::clamp(q, 0.0, 255.0));
}

double dequantize(int q, const QuantParams& qp) { return qp.scale * (q - qp.zero_point); }

FixedMultiplier normalize_multiplier(double m) {
  if (!(m > 0) || !(m < 1) || !std::isfinite(m)) {
    throw UnsupportedMultiplierError(fmt::format("multiplier {} outside (0, 1)", m));
  }
  int e = 0;
  const double mm = std::frexp(m, &e);  // m = mm * 2^e, mm in [0.5, 1)
  int n = -e;
  int64_t q = std::llround(std::ldexp(mm, 31));
  if (q == (int64_t{1} << 31)) {
    // mm rounded up to 1.0: keep m_prime within 32 signed bits.
    q /= 2;
    --n;
  }
  if (n + 31 > 62) {
    throw UnsupportedMultiplierError(fmt::format("multiplier {} too small to represent", m));
  }
  return {static_cast<int32_t>(q), n + 31};
}

void validate(const FixedMultiplier& fm, int bound) {
  if (fm.m_prime < (int32_t{1} << 30)) {
    throw UnsupportedMultiplierError(
        fmt::format("m_prime {} not in [2^30, 2^31)", fm.m_prime));
  }
  if (fm.shift <= 0 || fm.shift > bound) {
    throw UnsupportedMultiplierError(
        fmt::format("shift {} not in [1, L={}]", fm.shift, bound));
  }
}

std::vector<RepShare> secure_conv_dot(PartySession& s, std::span<const RepShare> acts,
                                      std::span<const RepShare> weights,
                                      std::span<const RepShare> biases, const RepShare& z1,
                                      const RepShare& z2, const DotRows& rows) {
  const Ring& r = s.ring();
  const size_t n = rows.rows();
  if (rows.bias.size() != n || rows.act.size() != rows.weight.size() ||
      rows.row_start.back() != rows.act.size()) {
    throw ShapeError("inconsistent dot row map");
  }
  // Centre each operand once; terms reference them by index.
  std::vector<RepShare> a(acts.size()), w(weights.size());
  for (size_t i = 0; i < acts.size(); ++i) a[i] = arith::sub(r, acts[i], z1);
  for (size_t i = 0; i < weights.size(); ++i) w[i] = arith::sub(r, weights[i], z2);

  std::vector<u128> terms(n);
  for (size_t row = 0; row < n; ++row) {
    u128 acc = 0;
    for (uint32_t j = rows.row_start[row]; j < rows.row_start[row + 1]; ++j) {
      acc += arith::cross_term(r, a.at(rows.act[j]), w.at(rows.weight[j]));
    }
    terms[row] = r.reduce(acc);
  }
  auto out = arith::reshare(s, std::move(terms));
  for (size_t row = 0; row < n; ++row) out[row] = arith::add(r, out[row], biases[rows.bias[row]]);
  return out;
}

RepShare secure_conv_dot(PartySession& s, std::span<const RepShare> window_a,
                         std::span<const RepShare> window_b, const RepShare& z1,
                         const RepShare& z2, const RepShare& bias) {
  if (window_a.size() != window_b.size()) {
    throw ShapeError(fmt::format("window lengths {} and {} differ", window_a.size(),
                                 window_b.size()));
  }
  DotRows rows;
  for (uint32_t i = 0; i < window_a.size(); ++i) rows.add_term(i, i);
  rows.end_row(0);
  const RepShare b[1] = {bias};
  return secure_conv_dot(s, window_a, window_b, b, z1, z2, rows)[0];
}

std::vector<RepShare> quantized_output_stage(PartySession& s, std::span<const RepShare> acc,
                                             const SharedMultiplier& mult, const RepShare& z3,
                                             int lo, int hi, TruncMode mode,
                                             std::vector<RepShare>* pre_clamp) {
  const Ring& r = s.ring();
  const size_t n = acc.size();
  const std::vector<RepShare> m(n, mult.m_prime), pow(n, mult.pow);
  const auto scaled = arith::mul(s, acc, m);
  auto rounded = trunc::round_nearest(s, scaled, pow, mult.bound, mode);
  for (auto& v : rounded) v = arith::add(r, v, z3);
  if (pre_clamp) *pre_clamp = rounded;
  return bin::clamp(s, rounded, r.from_signed(lo), r.from_signed(hi));
}

std::vector<RepShare> max_pool(PartySession& s, std::span<const RepShare> values,
                               const Windows& windows) {
  std::vector<std::vector<RepShare>> live(windows.size());
  for (size_t w = 0; w < windows.size(); ++w) {
    if (windows[w].empty()) throw ShapeError(fmt::format("max pool window {} is empty", w));
    for (uint32_t idx : windows[w]) live[w].push_back(values[idx]);
  }
  for (;;) {
    std::vector<RepShare> left, right;
    for (const auto& lane : live) {
      for (size_t i = 0; i + 1 < lane.size(); i += 2) {
        left.push_back(lane[i]);
        right.push_back(lane[i + 1]);
      }
    }
    if (left.empty()) break;
    // max(l, r) = r if l < r else l
    const auto bits = bin::bit_to_arith(s, bin::less_than(s, left, right));
    const auto winners = bin::select(s, bits, right, left);
    size_t next = 0;
    for (auto& lane : live) {
      std::vector<RepShare> merged;
      for (size_t i = 0; i + 1 < lane.size(); i += 2) merged.push_back(winners[next++]);
      if (lane.size() % 2 == 1) merged.push_back(lane.back());
      lane = std::move(merged);
    }
  }
  std::vector<RepShare> out(windows.size());
  for (size_t w = 0; w < windows.size(); ++w) out[w] = live[w][0];
  return out;
}

uint64_t avg_reciprocal(size_t n) {
  if (n == 0) throw ShapeError("average pool window is empty");
  return ((uint64_t{1} << kAvgReciprocalBits) + n / 2) / n;
}

std::vector<RepShare> avg_pool(PartySession& s, std::span<const RepShare> values,
                               const Windows& windows, TruncMode mode) {
  const Ring& r = s.ring();
  std::vector<RepShare> scaled(windows.size());
  for (size_t w = 0; w < windows.size(); ++w) {
    RepShare sum{};
    for (uint32_t idx : windows[w]) sum = arith::add(r, sum, values[idx]);
    scaled[w] = arith::mul_const(r, sum, avg_reciprocal(windows[w].size()));
  }
  return trunc::round_nearest_public(s, scaled, kAvgReciprocalBits, mode);
}

size_t secure_argmax(PartySession& s, std::span<const RepShare> scores) {
  if (scores.empty()) throw ShapeError("argmax of an empty vector");
  const Ring& r = s.ring();
  std::vector<RepShare> value(scores.begin(), scores.end());
  std::vector<RepShare> index(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) index[i] = arith::constant(s.id(), r, i);

  while (value.size() > 1) {
    const size_t pairs = value.size() / 2;
    std::vector<RepShare> lv(pairs), rv(pairs);
    for (size_t p = 0; p < pairs; ++p) {
      lv[p] = value[2 * p];
      rv[p] = value[2 * p + 1];
    }
    // The right (higher index) entry wins only if strictly larger.
    const auto bits = bin::bit_to_arith(s, bin::less_than(s, lv, rv));
    std::vector<RepShare> sel(2 * pairs), a1(2 * pairs), a0(2 * pairs);
    for (size_t p = 0; p < pairs; ++p) {
      sel[p] = sel[pairs + p] = bits[p];
      a1[p] = rv[p];
      a0[p] = lv[p];
      a1[pairs + p] = index[2 * p + 1];
      a0[pairs + p] = index[2 * p];
    }
    const auto chosen = bin::select(s, sel, a1, a0);
    std::vector<RepShare> nv(chosen.begin(), chosen.begin() + pairs);
    std::vector<RepShare> ni(chosen.begin() + pairs, chosen.end());
    if (value.size() % 2 == 1) {
      nv.push_back(value.back());
      ni.push_back(index.back());
    }
    value = std::move(nv);
    index = std::move(ni);
  }
  const u128 opened = arith::open(s, index[0]);
  if (opened >= scores.size()) throw ConsistencyError("argmax index out of range");
  return static_cast<size_t>(opened);
}

}  // namespace sq8::quant
