#include <gtest/gtest.h>

#include <random>

#include <boost/multiprecision/cpp_int.hpp>

#include "sq8/errors.h"
#include "sq8/ring.h"

using namespace sq8;
using boost::multiprecision::cpp_int;

namespace {

cpp_int big(u128 v) {
  cpp_int out = static_cast<uint64_t>(v >> 64);
  out <<= 64;
  out += static_cast<uint64_t>(v);
  return out;
}

u128 random_u128(std::mt19937_64& g) { return (u128{g()} << 64) | g(); }

}  // namespace

TEST(Ring, AddWrapsAtK8) {
  RingElement a(200, 8), b(100, 8);
  EXPECT_EQ((a + b).value(), 44u);
}

TEST(Ring, AddIdentityAtK72) {
  std::mt19937_64 g(1);
  Ring r(72);
  for (int i = 0; i < 100; ++i) {
    const u128 x = r.reduce(random_u128(g));
    EXPECT_TRUE((RingElement(x, 72) + RingElement(0, 72)).value() == x);
  }
}

TEST(Ring, AddExhaustiveK8) {
  Ring r(8);
  for (unsigned a = 0; a < 256; ++a)
    for (unsigned b = 0; b < 256; ++b) ASSERT_TRUE(r.add(a, b) == ((a + b) & 255u));
}

TEST(Ring, MulWrapsAtK8) { EXPECT_EQ((RingElement(16, 8) * RingElement(16, 8)).value(), 0u); }

TEST(Ring, MulIdentityAtK72) {
  std::mt19937_64 g(2);
  Ring r(72);
  for (int i = 0; i < 100; ++i) {
    const u128 x = r.reduce(random_u128(g));
    EXPECT_TRUE((RingElement(x, 72) * RingElement(1, 72)).value() == x);
  }
}

TEST(Ring, WidthMismatchIsConfigError) {
  EXPECT_THROW(RingElement(1, 8) + RingElement(1, 16), ConfigError);
  EXPECT_THROW(RingElement(1, 8) * RingElement(1, 16), ConfigError);
  EXPECT_THROW(RingElement(1, 8) - RingElement(1, 16), ConfigError);
}

TEST(Ring, ArithmeticMatchesBigIntegers) {
  std::mt19937_64 g(3);
  for (int k : {8, 16, 31, 64, 72, 100, 128}) {
    Ring r(k);
    const cpp_int mod = cpp_int(1) << k;
    for (int i = 0; i < 500; ++i) {
      const u128 a = r.reduce(random_u128(g)), b = r.reduce(random_u128(g));
      ASSERT_EQ(big(r.add(a, b)), (big(a) + big(b)) % mod);
      ASSERT_EQ(big(r.mul(a, b)), (big(a) * big(b)) % mod);
      ASSERT_EQ(big(r.sub(a, b)), (big(a) + mod - big(b)) % mod);
    }
  }
}

TEST(Ring, BitDecomposeSmall) {
  EXPECT_EQ(bit_decompose(RingElement(5, 4)), (std::vector<uint8_t>{1, 0, 1, 0}));
  EXPECT_EQ(bit_decompose(RingElement(0, 4)), (std::vector<uint8_t>{0, 0, 0, 0}));
}

TEST(Ring, DecomposeRoundTripK8) {
  for (unsigned a = 0; a < 256; ++a) {
    const auto bits = bit_decompose(RingElement(a, 8));
    ASSERT_EQ(bits.size(), 8u);
    ASSERT_TRUE(bit_recompose(bits).value() == a);
    ASSERT_EQ(bit_recompose(bits).width(), 8);
  }
}

TEST(Ring, SignedConversion) {
  Ring r(72);
  EXPECT_TRUE(r.to_signed(r.from_signed(-5)) == -5);
  EXPECT_TRUE(r.to_signed(r.from_signed(12345)) == 12345);
  EXPECT_TRUE(r.msb(r.from_signed(-1)));
  EXPECT_FALSE(r.msb(r.from_signed(1)));
}

TEST(Ring, EncodeUsesCeilKOver8Bytes) {
  for (int k : {8, 9, 16, 72, 128}) {
    Ring r(k);
    std::mt19937_64 g(k);
    std::vector<u128> v(33);
    for (auto& x : v) x = r.reduce(random_u128(g));
    std::vector<uint8_t> bytes;
    r.encode(v, bytes);
    EXPECT_EQ(bytes.size(), v.size() * static_cast<size_t>((k + 7) / 8));
    EXPECT_TRUE(r.decode(bytes) == v);
  }
}

TEST(Ring, DecodeRejectsPartialElement) {
  Ring r(72);
  std::vector<uint8_t> bytes(10);
  EXPECT_THROW(r.decode(bytes), ShapeError);
}

TEST(Ring, RejectsBadWidth) {
  EXPECT_THROW(Ring(0), ConfigError);
  EXPECT_NO_THROW(Ring(4));
  EXPECT_THROW(Ring(129), ConfigError);
}

TEST(Ring, Pow2Bounds) {
  Ring r(16);
  EXPECT_TRUE(r.pow2(15) == (u128{1} << 15));
  EXPECT_THROW(r.pow2(16), ConfigError);
}
