#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sq8/session.h"

namespace sq8::quant {

// real = scale * (q - zero_point)
struct QuantParams {
  double scale = 1.0;
  int32_t zero_point = 0;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

// Throws ConfigError unless scale is finite and positive and z in [0, 255].
void validate(const QuantParams& qp);

// Round to nearest (ties away from zero), then clamp to [0, 255].
int quantize(double alpha, const QuantParams& qp);
double dequantize(int q, const QuantParams& qp);

// m ~= m_prime * 2^-shift, with m = 2^-n * m'' (m'' in [0.5, 1)) and
// shift = n + 31. m_prime lies in [2^30, 2^31).
struct FixedMultiplier {
  int32_t m_prime = 0;
  int shift = 0;

  int n() const { return shift - 31; }
  friend bool operator==(const FixedMultiplier&, const FixedMultiplier&) = default;
};

// Throws UnsupportedMultiplierError unless 0 < m < 1.
FixedMultiplier normalize_multiplier(double m);

// Checks m_prime in [2^30, 2^31] and 0 < shift <= bound.
void validate(const FixedMultiplier& fm, int bound);

// A layer's secret rescale factor: shares of m_prime and of 2^{L - shift}.
struct SharedMultiplier {
  RepShare m_prime;
  RepShare pow;
  int bound = 0;  // L
};

// Row r of a lowered convolution: terms act[j], weight[j] for j in
// [row_start[r], row_start[r+1]) plus bias[r]. Indexes refer to the
// activation, weight and bias buffers passed alongside.
struct DotRows {
  std::vector<uint32_t> row_start{0};
  std::vector<uint32_t> act;
  std::vector<uint32_t> weight;
  std::vector<uint32_t> bias;

  size_t rows() const { return row_start.size() - 1; }
  void add_term(uint32_t a, uint32_t w) {
    act.push_back(a);
    weight.push_back(w);
  }
  void end_row(uint32_t b) {
    bias.push_back(b);
    row_start.push_back(static_cast<uint32_t>(act.size()));
  }
};

// s_r = sum_j (a_j - z1)(w_j - z2) + bias_r for every row, one round in
// total: each party sends one ring element per row whatever the row lengths.
std::vector<RepShare> secure_conv_dot(PartySession& s, std::span<const RepShare> acts,
                                      std::span<const RepShare> weights,
                                      std::span<const RepShare> biases, const RepShare& z1,
                                      const RepShare& z2, const DotRows& rows);

// Single window convenience form.
RepShare secure_conv_dot(PartySession& s, std::span<const RepShare> window_a,
                         std::span<const RepShare> window_b, const RepShare& z1,
                         const RepShare& z2, const RepShare& bias);

// c = clamp(z3 + round(m_prime * s / 2^shift), lo, hi), ties up, evaluated as
// round_nearest(pow * (m_prime * s), L). If `pre_clamp` is given it receives
// z3 + round(...) before clamping.
std::vector<RepShare> quantized_output_stage(PartySession& s, std::span<const RepShare> acc,
                                             const SharedMultiplier& mult, const RepShare& z3,
                                             int lo, int hi, TruncMode mode,
                                             std::vector<RepShare>* pre_clamp = nullptr);

// Windows are lists of indexes into `values`; every window must be non-empty.
using Windows = std::vector<std::vector<uint32_t>>;

// Balanced tournament of less_than + select per window, all windows of one
// tournament level batched together.
std::vector<RepShare> max_pool(PartySession& s, std::span<const RepShare> values,
                               const Windows& windows);

// round(sum / n) with ties up, n = window size, via a 31-bit public
// reciprocal round(2^31 / n) and a public-shift rounding truncation.
std::vector<RepShare> avg_pool(PartySession& s, std::span<const RepShare> values,
                               const Windows& windows, TruncMode mode);

// Reciprocal used by avg_pool for a window of n elements.
uint64_t avg_reciprocal(size_t n);
inline constexpr int kAvgReciprocalBits = 31;

// Index of the largest score, lowest index on ties. Only the index is opened.
size_t secure_argmax(PartySession& s, std::span<const RepShare> scores);

}  // namespace sq8::quant
