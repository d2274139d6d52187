#include "sq8/engine.h"

#include <chrono>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sq8/arith_share.h"
#include "sq8/bin_share.h"
#include "sq8/errors.h"
#include "sq8/trunc.h"

namespace sq8::engine {

namespace {

constexpr int kDaBitRefillRounds = 4;  // two input rounds + two XOR multiplications

int ceil_log2(size_t n) {
  int l = 0;
  while ((size_t{1} << l) < n) ++l;
  return l;
}

// less_than + bit_to_arith (with a possible refill) + one multiplication.
int compare_select_rounds(int k) { return bin::msb_rounds(k) + 1 + kDaBitRefillRounds + 1; }

template <class F>
void for_window(const LayerSpec& l, std::span<const uint32_t> in, uint32_t oy, uint32_t ox, F&& f) {
  const auto gh = axis_geometry(in[0], l.filter_h, l.stride_h, l.padding);
  const auto gw = axis_geometry(in[1], l.filter_w, l.stride_w, l.padding);
  for (uint32_t fy = 0; fy < l.filter_h; ++fy) {
    const int64_t iy = int64_t{oy} * l.stride_h + fy - gh.pad_before;
    if (iy < 0 || iy >= in[0]) continue;
    for (uint32_t fx = 0; fx < l.filter_w; ++fx) {
      const int64_t ix = int64_t{ox} * l.stride_w + fx - gw.pad_before;
      if (ix < 0 || ix >= in[1]) continue;  // padding contributes nothing
      f(fy, fx, static_cast<uint32_t>(iy), static_cast<uint32_t>(ix));
    }
  }
}

void lower_conv(const Sq8Model& m, const LayerSpec& l, LayerPlan& lp) {
  const auto& in = m.tensor(l.input).dims;
  const auto& out = m.tensor(l.output).dims;
  const uint32_t H = out[0], W = out[1], O = out[2], C = in[2], IW = in[1];
  const bool dw = l.kind == LayerKind::depthwise_conv_2d;
  for (uint32_t oy = 0; oy < H; ++oy) {
    for (uint32_t ox = 0; ox < W; ++ox) {
      for (uint32_t o = 0; o < O; ++o) {
        for_window(l, in, oy, ox, [&](uint32_t fy, uint32_t fx, uint32_t iy, uint32_t ix) {
          const uint32_t base = (iy * IW + ix) * C;
          if (dw) {
            lp.rows.add_term(base + o / l.depth_multiplier, (fy * l.filter_w + fx) * O + o);
          } else {
            const uint32_t wbase = ((o * l.filter_h + fy) * l.filter_w + fx) * C;
            for (uint32_t c = 0; c < C; ++c) lp.rows.add_term(base + c, wbase + c);
          }
        });
        lp.rows.end_row(o);
      }
    }
  }
}

void lower_fc(const Sq8Model& m, const LayerSpec& l, LayerPlan& lp) {
  const auto& w = m.tensor(l.weights).dims;
  const uint32_t O = w[0], I = w[1];
  for (uint32_t o = 0; o < O; ++o) {
    for (uint32_t i = 0; i < I; ++i) lp.rows.add_term(i, o * I + i);
    lp.rows.end_row(o);
  }
}

void lower_pool(const Sq8Model& m, const LayerSpec& l, LayerPlan& lp) {
  const auto& in = m.tensor(l.input).dims;
  const auto& out = m.tensor(l.output).dims;
  const uint32_t H = out[0], W = out[1], C = out[2], IW = in[1];
  for (uint32_t oy = 0; oy < H; ++oy) {
    for (uint32_t ox = 0; ox < W; ++ox) {
      for (uint32_t c = 0; c < C; ++c) {
        std::vector<uint32_t> win;
        for_window(l, in, oy, ox, [&](uint32_t, uint32_t, uint32_t iy, uint32_t ix) {
          win.push_back((iy * IW + ix) * C + c);
        });
        if (win.empty()) throw ShapeError(fmt::format("layer {}: pooling window is all padding", lp.index));
        lp.window = std::max(lp.window, win.size());
        lp.windows.push_back(std::move(win));
      }
    }
  }
}

CommStats since(const PartySession& s, const CommStats& before) { return s.net().stats() - before; }

}  // namespace

size_t ExecutionPlan::trunc_batches() const {
  size_t n = 0;
  for (const auto& l : layers) {
    n += l.kind == LayerKind::conv_2d || l.kind == LayerKind::depthwise_conv_2d ||
         l.kind == LayerKind::fully_connected || l.kind == LayerKind::average_pool_2d;
  }
  return n;
}

int ExecutionPlan::estimated_rounds() const {
  int r = input_rounds;
  for (const auto& l : layers) r += l.estimated_rounds;
  return r;
}

ExecutionPlan plan(const Sq8Model& m, const SessionOptions& options) {
  validate_structure(m);
  const int k = options.ring_bits;
  if (static_cast<int>(m.header.ring_bits_required) > k) {
    throw HeadroomError(fmt::format("model needs k >= {}, session has k = {}",
                                    m.header.ring_bits_required, k));
  }
  ExecutionPlan p;
  p.ring_bits = k;
  p.mode = options.trunc_mode;
  p.protocol = options.prob_protocol;
  p.input_shape = m.header.input_shape;
  p.input_tensor = m.header.input_tensor;

  const int trunc = trunc::trunc_rounds(k, p.mode, p.protocol);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    LayerPlan lp;
    lp.index = i;
    lp.kind = l.kind;
    lp.input = l.input;
    lp.output = l.output;
    lp.clamp_lo = l.clamp_lo;
    lp.clamp_hi = l.clamp_hi;
    switch (l.kind) {
      case LayerKind::conv_2d:
      case LayerKind::depthwise_conv_2d:
      case LayerKind::fully_connected:
        if (l.kind == LayerKind::fully_connected) {
          lower_fc(m, l, lp);
        } else {
          lower_conv(m, l, lp);
        }
        lp.outputs = lp.rows.rows();
        lp.window = window_size(m, l);
        // dot, m' multiplication, 2^{L-l} multiplication, truncation, clamp
        lp.estimated_rounds = 1 + 1 + 1 + trunc + compare_select_rounds(k);
        break;
      case LayerKind::max_pool_2d:
        lower_pool(m, l, lp);
        lp.outputs = lp.windows.size();
        lp.estimated_rounds = ceil_log2(lp.window) * compare_select_rounds(k);
        break;
      case LayerKind::average_pool_2d:
        lower_pool(m, l, lp);
        lp.outputs = lp.windows.size();
        lp.estimated_rounds = trunc;
        break;
      case LayerKind::reshape:
        lp.outputs = m.tensor(l.output).elements();
        break;
      case LayerKind::argmax_output:
        lp.window = m.tensor(l.input).elements();
        lp.outputs = 1;
        lp.estimated_rounds = ceil_log2(lp.window) * compare_select_rounds(k) + 1;
        break;
      case LayerKind::relu6:
        throw TopologyError("unfused RELU6 layer");
    }
    p.layers.push_back(std::move(lp));
  }
  return p;
}

std::vector<RepShare> share_input(PartySession& s, const ExecutionPlan& p, const Image* image,
                                  PartyId owner) {
  size_t n = 1;
  for (auto d : p.input_shape) n *= d;
  std::vector<u128> values;
  if (s.id() == owner) {
    if (!image) throw ConfigError("the input owner must supply the image");
    if (image->dims != p.input_shape || image->data.size() != n) {
      throw ShapeError(fmt::format("image dims do not match the model input"));
    }
    values.assign(image->data.begin(), image->data.end());
  }
  return arith::input(s, owner, values, n);
}

namespace {

InferenceReport run(PartySession& s, const SharedModel& model, const ExecutionPlan& p,
                    std::span<const RepShare> input, bool timed) {
  using clock = std::chrono::steady_clock;
  if (model.ring_bits != s.ring().bits() || p.ring_bits != s.ring().bits()) {
    throw ConfigError(fmt::format("shares are over k={}, plan k={}, session k={}", model.ring_bits,
                                  p.ring_bits, s.ring().bits()));
  }
  if (model.layers.size() != p.layers.size()) throw ConfigError("shared model does not match the plan");
  size_t n_in = 1;
  for (auto d : p.input_shape) n_in *= d;
  if (input.size() != n_in) throw ShapeError("input share count does not match the model input");

  InferenceReport rep;
  rep.party = s.id().value();
  std::map<uint32_t, std::vector<RepShare>> live;
  live[p.input_tensor].assign(input.begin(), input.end());

  for (const auto& lp : p.layers) {
    const auto before = s.net().stats();
    const auto t0 = clock::now();
    const auto& in = live.at(lp.input);
    std::vector<RepShare> out;
    try {
      switch (lp.kind) {
        case LayerKind::conv_2d:
        case LayerKind::depthwise_conv_2d:
        case LayerKind::fully_connected: {
          const auto& sl = model.layers[lp.index];
          const auto acc = quant::secure_conv_dot(s, in, sl.weights, sl.bias, sl.z_in, sl.z_w, lp.rows);
          out = quant::quantized_output_stage(s, acc, sl.mult, sl.z_out, lp.clamp_lo, lp.clamp_hi, p.mode);
          break;
        }
        case LayerKind::max_pool_2d:
          out = quant::max_pool(s, in, lp.windows);
          break;
        case LayerKind::average_pool_2d:
          out = quant::avg_pool(s, in, lp.windows, p.mode);
          break;
        case LayerKind::reshape:
          out = in;
          break;
        case LayerKind::argmax_output:
          rep.result.label = quant::secure_argmax(s, in);
          break;
        case LayerKind::relu6:
          throw TopologyError("unfused RELU6 layer");
      }
    } catch (const TransportError& e) {
      throw TransportError(e.peer(), fmt::format("party {} layer {} ({}): {}", s.id().value(),
                                                 lp.index, to_string(lp.kind), e.what()));
    }
    LayerStats ls;
    ls.index = lp.index;
    ls.kind = lp.kind;
    ls.outputs = lp.outputs;
    ls.comm = since(s, before);
    ls.estimated_rounds = lp.estimated_rounds;
    if (timed) ls.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    rep.layers.push_back(ls);
    rep.result.activations.push_back(out);
    if (lp.output != kNoTensor) live[lp.output] = std::move(out);
  }
  return rep;
}

}  // namespace

InferenceResult infer(PartySession& s, const SharedModel& model, const ExecutionPlan& p,
                      std::span<const RepShare> input) {
  return run(s, model, p, input, false).result;
}

InferenceReport infer_with_stats(PartySession& s, const SharedModel& model, const ExecutionPlan& p,
                                 const Image* image, PartyId owner) {
  const auto before = s.net().stats();
  const auto t0 = std::chrono::steady_clock::now();
  const auto input = share_input(s, p, image, owner);
  auto rep = run(s, model, p, input, true);
  rep.total = s.net().stats() - before;
  rep.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

nlohmann::json report_to_json(const InferenceReport& r, const ExecutionPlan& p) {
  using nlohmann::json;
  auto comm = [](const CommStats& c) {
    uint64_t recv = 0, framing = 0;
    for (const auto& peer : c.peers) {
      recv += peer.bytes_received;
      framing += peer.framing_bytes;
    }
    return json{{"bytes_sent", c.bytes_sent()},
                {"bytes_received", recv},
                {"framing_bytes", framing},
                {"frames", c.frames()},
                {"rounds", c.rounds}};
  };
  json j;
  j["party"] = r.party;
  j["label"] = r.result.label;
  j["ring_bits"] = p.ring_bits;
  j["trunc_mode"] = p.mode == TruncMode::exact ? "exact" : "probabilistic";
  j["prob_protocol"] = p.protocol == ProbProtocol::three_party ? "three_party" : "black_box";
  j["wall_ms"] = r.wall_ms;
  j["estimated_rounds"] = p.estimated_rounds();
  j["total"] = comm(r.total);
  j["layers"] = json::array();
  for (const auto& l : r.layers) {
    json jl = comm(l.comm);
    jl["index"] = l.index;
    jl["kind"] = to_string(l.kind);
    jl["outputs"] = l.outputs;
    jl["estimated_rounds"] = l.estimated_rounds;
    jl["wall_ms"] = l.wall_ms;
    j["layers"].push_back(std::move(jl));
  }
  return j;
}

}  // namespace sq8::engine
