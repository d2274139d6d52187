#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "harness.h"
#include "sq8/arith_share.h"
#include "sq8/errors.h"
#include "sq8/quantops.h"

using namespace sq8;
using namespace sq8::quant;
using sq8::testing::options_for;
using sq8::testing::reveal;

namespace {

const PartyId P1(1), P2(2);

std::vector<u128> to_ring(const Ring& r, const std::vector<int64_t>& v) {
  std::vector<u128> out;
  for (int64_t x : v) out.push_back(r.from_signed(x));
  return out;
}

// Cleartext model of the output stage.
int64_t stage_oracle(int64_t s, const FixedMultiplier& fm, int64_t z3, int lo, int hi) {
  const i128 prod = static_cast<i128>(fm.m_prime) * s + (i128{1} << (fm.shift - 1));
  i128 q = prod >> fm.shift;  // arithmetic shift: floor
  q += z3;
  return static_cast<int64_t>(std::clamp<i128>(q, lo, hi));
}

struct StageResult {
  std::vector<int64_t> out, pre;
};

StageResult run_stage(const std::vector<int64_t>& acc, const FixedMultiplier& fm, int bound, int z3,
                      int lo, int hi, TruncMode mode, int k = 72, uint64_t seed = 7) {
  const Ring r(k);
  std::array<std::vector<RepShare>, 3> pre;
  auto out = run_parties(options_for(k, seed), [&](PartySession& s) {
    const auto a = arith::input(s, P1, to_ring(r, acc), acc.size());
    const std::vector<u128> secrets = {static_cast<u128>(fm.m_prime),
                                       r.pow2(bound - fm.shift), static_cast<u128>(z3)};
    const auto sec = arith::input(s, P2, secrets, 3);
    const SharedMultiplier mult{sec[0], sec[1], bound};
    std::vector<RepShare> pc;
    auto o = quantized_output_stage(s, a, mult, sec[2], lo, hi, mode, &pc);
    pre[s.id().index()] = pc;
    return o;
  });
  StageResult res;
  for (u128 v : reveal(r, out)) res.out.push_back(static_cast<int64_t>(r.to_signed(v)));
  for (u128 v : reveal(r, pre)) res.pre.push_back(static_cast<int64_t>(r.to_signed(v)));
  return res;
}

}  // namespace

TEST(Quantize, Examples) {
  const QuantParams qp{0.5, 10};
  EXPECT_EQ(quantize(0.0, qp), 10);
  EXPECT_EQ(quantize(1.0, qp), 12);
  EXPECT_EQ(quantize(-100.0, qp), 0);
  EXPECT_EQ(quantize(1e9, qp), 255);
  EXPECT_DOUBLE_EQ(dequantize(12, qp), 1.0);
  EXPECT_DOUBLE_EQ(dequantize(10, qp), 0.0);
}

TEST(Quantize, RoundTripIsIdentityOnAllCodes) {
  for (double scale : {1.0 / 255, 0.02, 0.1, 3.0}) {
    for (int z = 0; z <= 255; z += 17) {
      const QuantParams qp{scale, z};
      for (int q = 0; q <= 255; ++q) EXPECT_EQ(quantize(dequantize(q, qp), qp), q);
    }
  }
}

TEST(Quantize, RejectsBadParams) {
  EXPECT_THROW(validate(QuantParams{0.0, 0}), ConfigError);
  EXPECT_THROW(validate(QuantParams{-1.0, 0}), ConfigError);
  EXPECT_THROW(validate(QuantParams{NAN, 0}), ConfigError);
  EXPECT_THROW(validate(QuantParams{1.0, 256}), ConfigError);
  EXPECT_THROW(validate(QuantParams{1.0, -1}), ConfigError);
  EXPECT_NO_THROW(validate(QuantParams{1.0, 255}));
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_multiplier(0.25), (FixedMultiplier{1 << 30, 32}));
  EXPECT_EQ(normalize_multiplier(0.5), (FixedMultiplier{1 << 30, 31}));
  EXPECT_EQ(normalize_multiplier(0.75), (FixedMultiplier{3 << 29, 31}));
  EXPECT_EQ(normalize_multiplier(0.25).n(), 1);
}

TEST(Normalize, RoundingUpToOneHalvesMantissa) {
  const double m = std::nextafter(0.5, 0.0);  // mantissa rounds to 2^31
  const auto fm = normalize_multiplier(m);
  EXPECT_EQ(fm, (FixedMultiplier{1 << 30, 31}));
}

TEST(Normalize, RandomRelativeError) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> expo(-20.0, -0.01);
  for (int i = 0; i < 1000; ++i) {
    const double m = std::exp2(expo(gen));
    const auto fm = normalize_multiplier(m);
    EXPECT_GE(fm.m_prime, 1 << 30);
    const double approx = std::ldexp(static_cast<double>(fm.m_prime), -fm.shift);
    EXPECT_LE(std::abs(approx - m) / m, std::exp2(-30)) << m;
  }
}

TEST(Normalize, RejectsOutOfRange) {
  for (double m : {0.0, 1.0, 1.5, -0.25, static_cast<double>(NAN), static_cast<double>(INFINITY)}) {
    EXPECT_THROW(normalize_multiplier(m), UnsupportedMultiplierError) << m;
  }
  EXPECT_THROW(validate(FixedMultiplier{1 << 30, 40}, 36), UnsupportedMultiplierError);
  EXPECT_THROW(validate(FixedMultiplier{100, 31}, 36), UnsupportedMultiplierError);
  EXPECT_NO_THROW(validate(FixedMultiplier{1 << 30, 36}, 36));
}

TEST(OutputStage, ZeroAccumulatorGivesZeroPoint) {
  const auto fm = normalize_multiplier(0.0123);
  const auto exact = run_stage({0, 0, 0}, fm, 40, 37, 0, 255, TruncMode::exact);
  for (auto v : exact.out) EXPECT_EQ(v, 37);
  // The +1/2 rounding offset is itself a tie for the probabilistic truncation.
  const auto prob = run_stage({0, 0, 0}, fm, 40, 37, 0, 255, TruncMode::probabilistic);
  for (auto v : prob.out) EXPECT_TRUE(v == 37 || v == 38) << v;
}

TEST(OutputStage, ExactMatchesCleartext) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int64_t> sdist(-(int64_t{1} << 24), int64_t{1} << 24);
  const auto fm = normalize_multiplier(0.00017);
  const int bound = fm.shift + 3;
  std::vector<int64_t> acc(64);
  for (auto& v : acc) v = sdist(gen);
  acc[0] = 0;
  acc[1] = -1;
  const auto res = run_stage(acc, fm, bound, 120, 0, 255, TruncMode::exact);
  for (size_t i = 0; i < acc.size(); ++i) {
    EXPECT_EQ(res.out[i], stage_oracle(acc[i], fm, 120, 0, 255)) << acc[i];
    EXPECT_EQ(res.pre[i], stage_oracle(acc[i], fm, 120, INT32_MIN, INT32_MAX)) << acc[i];
  }
}

TEST(OutputStage, ProbabilisticWithinOneBeforeClamp) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<int64_t> sdist(-(int64_t{1} << 22), int64_t{1} << 22);
  const auto fm = normalize_multiplier(0.0004);
  std::vector<int64_t> acc(256);
  for (auto& v : acc) v = sdist(gen);
  const auto res = run_stage(acc, fm, fm.shift, 128, 0, 255, TruncMode::probabilistic);
  for (size_t i = 0; i < acc.size(); ++i) {
    const int64_t want = stage_oracle(acc[i], fm, 128, INT32_MIN, INT32_MAX);
    EXPECT_LE(std::abs(res.pre[i] - want), 1) << acc[i];
    EXPECT_EQ(res.out[i], std::clamp<int64_t>(res.pre[i], 0, 255));
  }
}

TEST(OutputStage, ClampRange) {
  const auto fm = normalize_multiplier(0.5);
  const auto res = run_stage({-1000, 0, 20, 1000}, fm, 31, 10, 10, 30, TruncMode::exact);
  EXPECT_EQ(res.out, (std::vector<int64_t>{10, 10, 20, 30}));
}

TEST(ConvDot, ZeroWindowsGiveBias) {
  const Ring r(72);
  auto out = run_parties(options_for(72), [&](PartySession& s) {
    // activations all equal z1, weights all equal z2
    const std::vector<u128> a(9, 17), w(9, 200), b = {r.from_signed(-55)};
    const auto sa = arith::input(s, P1, a, 9);
    const auto sw = arith::input(s, P2, w, 9);
    const auto sb = arith::input(s, P2, b, 1);
    const auto z1 = arith::constant(s, 17), z2 = arith::constant(s, 200);
    return std::vector<RepShare>{secure_conv_dot(s, sa, sw, z1, z2, sb[0])};
  });
  EXPECT_EQ(r.to_signed(reveal(r, out)[0]), -55);
}

TEST(ConvDot, SingleTerm) {
  const Ring r(72);
  auto out = run_parties(options_for(72), [&](PartySession& s) {
    const std::vector<u128> a = {3}, w = {250}, b = {1000};
    const auto sa = arith::input(s, P1, a, 1);
    const auto sw = arith::input(s, P2, w, 1);
    const auto sb = arith::input(s, P2, b, 1);
    return std::vector<RepShare>{
        secure_conv_dot(s, sa, sw, arith::constant(s, 3), arith::constant(s, 128), sb[0])};
  });
  EXPECT_EQ(r.to_signed(reveal(r, out)[0]), 1000);
}

TEST(ConvDot, MatchesCleartextRows) {
  const Ring r(72);
  std::mt19937_64 gen(5);
  const size_t rows = 20, len = 27;
  std::vector<u128> a(len + rows), w(rows * len), b(rows);
  for (auto& v : a) v = gen() % 256;
  for (auto& v : w) v = gen() % 256;
  for (auto& v : b) v = r.from_signed(static_cast<int64_t>(gen() % 20001) - 10000);
  DotRows map;
  for (uint32_t row = 0; row < rows; ++row) {
    for (uint32_t j = 0; j < len; ++j) map.add_term(row + j, row * len + j);
    map.end_row(row);
  }
  auto out = run_parties(options_for(72), [&](PartySession& s) {
    const auto sa = arith::input(s, P1, a, a.size());
    const auto sw = arith::input(s, P2, w, w.size());
    const auto sb = arith::input(s, P2, b, b.size());
    return secure_conv_dot(s, sa, sw, sb, arith::constant(s, 99), arith::constant(s, 131), map);
  });
  const auto got = reveal(r, out);
  for (size_t row = 0; row < rows; ++row) {
    int64_t want = static_cast<int64_t>(r.to_signed(b[row]));
    for (size_t j = 0; j < len; ++j) {
      want += (static_cast<int64_t>(a[row + j]) - 99) * (static_cast<int64_t>(w[row * len + j]) - 131);
    }
    EXPECT_EQ(r.to_signed(got[row]), want);
  }
}

TEST(ConvDot, TrafficIndependentOfWindowLength) {
  for (size_t n : {9u, 576u, 4608u}) {
    auto sent = run_parties(options_for(72), [&](PartySession& s) {
      const auto sa = arith::random(s, n);
      const auto sw = arith::random(s, n);
      const auto zero = arith::constant(s, 0);
      const auto before = s.net().stats();
      secure_conv_dot(s, sa, sw, zero, zero, zero);
      const auto d = s.net().stats() - before;
      EXPECT_EQ(d.rounds, 1u);
      return d.bytes_sent();
    });
    for (auto b : sent) EXPECT_EQ(b, 9u) << n;
  }
}

TEST(ConvDot, LengthMismatch) {
  EXPECT_THROW(run_parties(options_for(72),
                           [&](PartySession& s) {
                             const auto a = arith::random(s, 3), b = arith::random(s, 4);
                             secure_conv_dot(s, a, b, a[0], a[0], a[0]);
                           }),
               ShapeError);
}

TEST(MaxPool, RandomWindows) {
  const Ring r(72);
  std::mt19937_64 gen(6);
  const size_t windows = 10000;
  std::vector<u128> v(4 * windows);
  for (auto& x : v) x = gen() % 256;
  Windows win(windows);
  for (uint32_t w = 0; w < windows; ++w) win[w] = {4 * w, 4 * w + 1, 4 * w + 2, 4 * w + 3};
  auto out = run_parties(options_for(72), [&](PartySession& s) {
    const auto sv = arith::input(s, P1, v, v.size());
    return max_pool(s, sv, win);
  });
  const auto got = reveal(r, out);
  for (size_t w = 0; w < windows; ++w) {
    EXPECT_EQ(got[w], std::max({v[4 * w], v[4 * w + 1], v[4 * w + 2], v[4 * w + 3]}));
  }
}

TEST(MaxPool, IdenticalValuesAndRaggedWindows) {
  const Ring r(72);
  const std::vector<u128> v = {7, 7, 7, 7, 1, 9, 3};
  const Windows win = {{0, 1, 2, 3}, {4}, {4, 5, 6}, {6, 4}};
  auto out = run_parties(options_for(72), [&](PartySession& s) {
    return max_pool(s, arith::input(s, P1, v, v.size()), win);
  });
  EXPECT_EQ(reveal(r, out), (std::vector<u128>{7, 1, 9, 3}));
}

TEST(AvgPool, Examples) {
  const Ring r(72);
  const std::vector<u128> v = {4, 6, 7, 9, 1, 2, 0, 0, 0, 255, 255, 254};
  const Windows win = {{0, 1, 2, 3}, {4, 5}, {6, 7, 8}, {9, 10, 11}, {4}};
  for (auto mode : {TruncMode::exact, TruncMode::probabilistic}) {
    auto out = run_parties(options_for(72), [&](PartySession& s) {
      return avg_pool(s, arith::input(s, P1, v, v.size()), win, mode);
    });
    const auto got = reveal(r, out);
    // 26/4 = 6.5 -> 7, 3/2 = 1.5 -> 2, 0, 764/3 = 254.67 -> 255, 1
    const std::vector<u128> want = {7, 2, 0, 255, 1};
    for (size_t i = 0; i < want.size(); ++i) {
      if (mode == TruncMode::exact) {
        EXPECT_EQ(got[i], want[i]) << i;
      } else {
        EXPECT_LE(got[i] > want[i] ? got[i] - want[i] : want[i] - got[i], 1u) << i;
      }
    }
  }
}

TEST(AvgPool, ExactMatchesRoundedMeanForAllSums) {
  const Ring r(72);
  for (size_t n : {2u, 3u, 4u, 7u, 9u, 25u, 49u}) {
    std::vector<u128> v;
    Windows win;
    for (uint32_t sum = 0; sum <= 255 * n; sum += (n > 9 ? 7 : 1)) {
      std::vector<uint32_t> w;
      uint32_t left = sum;
      for (size_t j = 0; j < n; ++j) {
        const uint32_t take = std::min<uint32_t>(left, 255);
        w.push_back(static_cast<uint32_t>(v.size()));
        v.push_back(take);
        left -= take;
      }
      win.push_back(w);
    }
    auto out = run_parties(options_for(72), [&](PartySession& s) {
      return avg_pool(s, arith::input(s, P1, v, v.size()), win, TruncMode::exact);
    });
    const auto got = reveal(r, out);
    for (size_t w = 0; w < win.size(); ++w) {
      u128 sum = 0;
      for (auto idx : win[w]) sum += v[idx];
      const auto want = static_cast<u128>(std::floor(static_cast<double>(sum) / n + 0.5));
      EXPECT_EQ(got[w], want) << "n=" << n << " sum=" << static_cast<uint64_t>(sum);
    }
  }
}

TEST(Argmax, SingleElement) {
  auto idx = run_parties(options_for(72), [&](PartySession& s) {
    const std::vector<u128> v = {42};
    return secure_argmax(s, arith::input(s, P1, v, 1));
  });
  for (auto i : idx) EXPECT_EQ(i, 0u);
}

TEST(Argmax, Increasing) {
  std::vector<u128> v(1000);
  for (size_t i = 0; i < v.size(); ++i) v[i] = i;
  auto idx = run_parties(options_for(72), [&](PartySession& s) {
    return secure_argmax(s, arith::input(s, P1, v, v.size()));
  });
  for (auto i : idx) EXPECT_EQ(i, 999u);
}

TEST(Argmax, RandomWithTiesPicksFirstOccurrence) {
  std::mt19937_64 gen(8);
  const int trials = 1000;
  std::vector<std::vector<u128>> cases(trials);
  for (auto& c : cases) {
    c.resize(1 + gen() % 12);
    for (auto& x : c) x = gen() % 6;  // frequent ties
  }
  auto got = run_parties(options_for(72), [&](PartySession& s) {
    std::vector<size_t> out;
    for (const auto& c : cases) out.push_back(secure_argmax(s, arith::input(s, P1, c, c.size())));
    return out;
  });
  for (int t = 0; t < trials; ++t) {
    const auto& c = cases[t];
    const size_t want = std::max_element(c.begin(), c.end()) - c.begin();
    for (int p = 0; p < 3; ++p) EXPECT_EQ(got[p][t], want) << t;
  }
}

TEST(Argmax, InvariantUnderConstantShift) {
  std::mt19937_64 gen(9);
  std::vector<u128> v(37);
  for (auto& x : v) x = gen() % 200;
  auto got = run_parties(options_for(72), [&](PartySession& s) {
    const auto sv = arith::input(s, P1, v, v.size());
    std::vector<RepShare> shifted;
    for (const auto& x : sv) shifted.push_back(arith::add_const(s, x, 55));
    return std::pair{secure_argmax(s, sv), secure_argmax(s, shifted)};
  });
  EXPECT_EQ(got[0].first, got[0].second);
  EXPECT_EQ(got[0].first, static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
}
