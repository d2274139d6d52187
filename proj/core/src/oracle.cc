#include "sq8/oracle.h"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>
#include <sodium.h>

#include "sq8/errors.h"

namespace sq8::oracle {

namespace {

using Act = std::vector<uint8_t>;

struct Ctx {
  const Sq8Model& m;
  const LayerSpec& l;
  const TensorInfo& in;
  const TensorInfo& out;
};

// Visits every in-bounds input position of output (oy, ox)'s window.
template <class F>
void for_window(const LayerSpec& l, std::span<const uint32_t> in_dims, uint32_t oy, uint32_t ox, F&& f) {
  const auto gh = axis_geometry(in_dims[0], l.filter_h, l.stride_h, l.padding);
  const auto gw = axis_geometry(in_dims[1], l.filter_w, l.stride_w, l.padding);
  for (uint32_t fy = 0; fy < l.filter_h; ++fy) {
    const int64_t iy = int64_t{oy} * l.stride_h + fy - gh.pad_before;
    if (iy < 0 || iy >= in_dims[0]) continue;
    for (uint32_t fx = 0; fx < l.filter_w; ++fx) {
      const int64_t ix = int64_t{ox} * l.stride_w + fx - gw.pad_before;
      if (ix < 0 || ix >= in_dims[1]) continue;
      f(fy, fx, static_cast<uint32_t>(iy), static_cast<uint32_t>(ix));
    }
  }
}

Act conv(const Ctx& c, const Act& a) {
  const auto& w = c.m.tensor(c.l.weights);
  const auto& b = c.m.tensor(c.l.bias);
  const int z1 = c.in.quant.zero_point, z2 = w.quant.zero_point, z3 = c.out.quant.zero_point;
  const uint32_t H = c.out.dims[0], W = c.out.dims[1], O = c.out.dims[2], C = c.in.dims[2];
  const uint32_t IW = c.in.dims[1];
  const bool dw = c.l.kind == LayerKind::depthwise_conv_2d;
  Act out(size_t{H} * W * O);
  for (uint32_t oy = 0; oy < H; ++oy) {
    for (uint32_t ox = 0; ox < W; ++ox) {
      for (uint32_t o = 0; o < O; ++o) {
        int64_t s = b.i32[o];
        for_window(c.l, c.in.dims, oy, ox, [&](uint32_t fy, uint32_t fx, uint32_t iy, uint32_t ix) {
          const size_t base = (size_t{iy} * IW + ix) * C;
          if (dw) {
            const uint32_t ch = o / c.l.depth_multiplier;
            const size_t wi = (size_t{fy} * c.l.filter_w + fx) * O + o;
            s += (int64_t{a[base + ch]} - z1) * (int64_t{w.u8[wi]} - z2);
          } else {
            const size_t wbase = ((size_t{o} * c.l.filter_h + fy) * c.l.filter_w + fx) * C;
            for (uint32_t ch = 0; ch < C; ++ch) {
              s += (int64_t{a[base + ch]} - z1) * (int64_t{w.u8[wbase + ch]} - z2);
            }
          }
        });
        out[(size_t{oy} * W + ox) * O + o] =
            static_cast<uint8_t>(requantize(s, c.l.fixed, z3, c.l.clamp_lo, c.l.clamp_hi));
      }
    }
  }
  return out;
}

Act fully_connected(const Ctx& c, const Act& a) {
  const auto& w = c.m.tensor(c.l.weights);
  const auto& b = c.m.tensor(c.l.bias);
  const int z1 = c.in.quant.zero_point, z2 = w.quant.zero_point, z3 = c.out.quant.zero_point;
  const size_t O = w.dims[0], I = w.dims[1];
  Act out(O);
  for (size_t o = 0; o < O; ++o) {
    int64_t s = b.i32[o];
    for (size_t i = 0; i < I; ++i) s += (int64_t{a[i]} - z1) * (int64_t{w.u8[o * I + i]} - z2);
    out[o] = static_cast<uint8_t>(requantize(s, c.l.fixed, z3, c.l.clamp_lo, c.l.clamp_hi));
  }
  return out;
}

Act pool(const Ctx& c, const Act& a) {
  const uint32_t H = c.out.dims[0], W = c.out.dims[1], C = c.out.dims[2], IW = c.in.dims[1];
  Act out(size_t{H} * W * C);
  for (uint32_t oy = 0; oy < H; ++oy) {
    for (uint32_t ox = 0; ox < W; ++ox) {
      for (uint32_t ch = 0; ch < C; ++ch) {
        int64_t sum = 0, best = -1;
        size_t n = 0;
        for_window(c.l, c.in.dims, oy, ox, [&](uint32_t, uint32_t, uint32_t iy, uint32_t ix) {
          const int64_t v = a[(size_t{iy} * IW + ix) * C + ch];
          sum += v;
          best = std::max(best, v);
          ++n;
        });
        out[(size_t{oy} * W + ox) * C + ch] =
            static_cast<uint8_t>(c.l.kind == LayerKind::max_pool_2d ? best : average(sum, n));
      }
    }
  }
  return out;
}

}  // namespace

int requantize(int64_t s, const quant::FixedMultiplier& fm, int z3, int lo, int hi) {
  const i128 prod = i128{fm.m_prime} * s + (i128{1} << (fm.shift - 1));
  const i128 q = (prod >> fm.shift) + z3;  // >> on signed values floors
  return static_cast<int>(std::clamp<i128>(q, lo, hi));
}

int average(int64_t sum, size_t n) {
  const u128 r = quant::avg_reciprocal(n);
  const u128 v = static_cast<u128>(sum) * r + (u128{1} << (quant::kAvgReciprocalBits - 1));
  return static_cast<int>(v >> quant::kAvgReciprocalBits);
}

Reference reference_infer(const Sq8Model& m, const Image& input) {
  const auto& in0 = m.tensor(m.header.input_tensor);
  if (input.dims != in0.dims || input.data.size() != in0.elements()) {
    throw ShapeError(fmt::format("image shape does not match the model input"));
  }
  std::vector<std::pair<uint32_t, Act>> live;  // tensor id -> values
  auto value = [&](uint32_t id) -> const Act& {
    for (const auto& [tid, v] : live) {
      if (tid == id) return v;
    }
    throw TopologyError(fmt::format("tensor {} has no value", id));
  };
  live.emplace_back(m.header.input_tensor, input.data);

  Reference ref;
  for (const auto& l : m.layers) {
    const Act& a = value(l.input);
    if (l.kind == LayerKind::argmax_output) {
      ref.label = static_cast<size_t>(std::max_element(a.begin(), a.end()) - a.begin());
      ref.activations.emplace_back();
      break;
    }
    const Ctx c{m, l, m.tensor(l.input), m.tensor(l.output)};
    Act out;
    switch (l.kind) {
      case LayerKind::conv_2d:
      case LayerKind::depthwise_conv_2d: out = conv(c, a); break;
      case LayerKind::fully_connected: out = fully_connected(c, a); break;
      case LayerKind::average_pool_2d:
      case LayerKind::max_pool_2d: out = pool(c, a); break;
      case LayerKind::reshape: out = a; break;
      default: throw TopologyError(fmt::format("{} is not supported", to_string(l.kind)));
    }
    ref.activations.push_back(out);
    live.emplace_back(l.output, std::move(out));
  }
  return ref;
}

std::vector<uint8_t> dump_golden(const Reference& ref) {
  std::vector<uint8_t> out = {'S', 'Q', '8', 'G'};
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  u32(static_cast<uint32_t>(ref.label));
  u32(static_cast<uint32_t>(ref.activations.size()));
  for (const auto& a : ref.activations) {
    u32(static_cast<uint32_t>(a.size()));
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

Reference load_golden(std::span<const uint8_t> bytes) {
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (bytes.size() - pos < n) throw ModelFormatError("golden dump truncated");
  };
  auto u32 = [&] {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{bytes[pos + i]} << (8 * i);
    pos += 4;
    return v;
  };
  need(4);
  if (std::memcmp(bytes.data(), "SQ8G", 4) != 0) throw ModelFormatError("golden dump: bad magic");
  pos = 4;
  Reference ref;
  ref.label = u32();
  const uint32_t n = u32();
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t len = u32();
    need(len);
    ref.activations.emplace_back(bytes.begin() + pos, bytes.begin() + pos + len);
    pos += len;
  }
  if (pos != bytes.size()) throw ModelFormatError("golden dump: trailing bytes");
  return ref;
}

std::string golden_name(std::span<const uint8_t> dump) {
  uint8_t h[16];
  crypto_generichash(h, sizeof h, dump.data(), dump.size(), nullptr, 0);
  std::string hex(2 * sizeof h + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), h, sizeof h);
  hex.pop_back();
  return hex;
}

namespace {

void check_small(int k, int limit = 16) {
  if (k < 1 || k > limit) {
    throw ConfigError(fmt::format("truth table needs 1 <= k <= {}, got {}", limit, k));
  }
}

int64_t signed_of(uint64_t v, int k) {
  return v >= (uint64_t{1} << (k - 1)) ? static_cast<int64_t>(v) - (int64_t{1} << k)
                                       : static_cast<int64_t>(v);
}

}  // namespace

std::vector<uint64_t> floor_div_table(int k, int m) {
  check_small(k);
  std::vector<uint64_t> t(size_t{1} << k);
  for (uint64_t x = 0; x < t.size(); ++x) t[x] = x >> m;
  return t;
}

std::vector<uint8_t> msb_table(int k) {
  check_small(k);
  std::vector<uint8_t> t(size_t{1} << k);
  for (uint64_t x = 0; x < t.size(); ++x) t[x] = (x >> (k - 1)) & 1;
  return t;
}

std::vector<uint8_t> less_than_table(int k) {
  check_small(k, kMaxPairTableBits);
  const size_t n = size_t{1} << k;
  std::vector<uint8_t> t(n * n);
  for (uint64_t a = 0; a < n; ++a) {
    for (uint64_t b = 0; b < n; ++b) t[a * n + b] = signed_of(a, k) < signed_of(b, k);
  }
  return t;
}

std::vector<uint64_t> clamp_table(int k, int64_t lo, int64_t hi) {
  check_small(k);
  const uint64_t mask = (uint64_t{1} << k) - 1;
  std::vector<uint64_t> t(size_t{1} << k);
  for (uint64_t x = 0; x < t.size(); ++x) {
    t[x] = static_cast<uint64_t>(std::clamp(signed_of(x, k), lo, hi)) & mask;
  }
  return t;
}

std::vector<uint64_t> mul_table(int k) {
  check_small(k, kMaxPairTableBits);
  const size_t n = size_t{1} << k;
  const uint64_t mask = n - 1;
  std::vector<uint64_t> t(n * n);
  for (uint64_t a = 0; a < n; ++a) {
    for (uint64_t b = 0; b < n; ++b) t[a * n + b] = (a * b) & mask;
  }
  return t;
}

}  // namespace sq8::oracle
