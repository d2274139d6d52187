#include "sq8/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>
#include <sodium.h>

#include "sq8/arith_share.h"
#include "sq8/errors.h"
#include "sq8/prg.h"

namespace sq8 {

namespace {

constexpr char kModelMagic[4] = {'S', 'Q', '8', '\0'};
constexpr char kImageMagic[4] = {'S', 'Q', '8', 'I'};
constexpr char kShareMagic[4] = {'S', 'Q', '8', 'S'};
constexpr uint16_t kShareVersion = 1;

class Writer {
 public:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));  // host is little-endian
    raw(b, sizeof(T));
  }
  std::vector<uint8_t>& bytes() { return out_; }

 private:
  std::vector<uint8_t> out_;
};

static_assert(std::endian::native == std::endian::little);

class Reader {
 public:
  Reader(std::span<const uint8_t> in, const char* what) : in_(in), what_(what) {}
  std::span<const uint8_t> take(size_t n) {
    if (n > in_.size() - pos_) {
      throw ModelFormatError(fmt::format("{}: truncated at byte {} (need {} more)", what_, pos_, n));
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T le() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  void magic(const char (&m)[4]) {
    if (std::memcmp(take(4).data(), m, 4) != 0) throw ModelFormatError(fmt::format("{}: bad magic", what_));
  }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
  const char* what_;
};

size_t product(std::span<const uint32_t> dims) {
  size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

int bit_length(u128 v) {
  int b = 0;
  while (v) {
    ++b;
    v >>= 1;
  }
  return b;
}

const TensorInfo& expect_tensor(const Sq8Model& m, uint32_t id, TensorRole role, size_t layer,
                                const char* slot) {
  if (!m.has_tensor(id)) {
    throw TopologyError(fmt::format("layer {}: {} tensor {} does not exist", layer, slot, id));
  }
  const auto& t = m.tensor(id);
  if (t.role != role) {
    throw TopologyError(fmt::format("layer {}: {} tensor {} is a {} tensor", layer, slot, id,
                                    to_string(t.role)));
  }
  return t;
}

void expect_dims(const TensorInfo& t, const std::vector<uint32_t>& want, size_t layer, const char* slot) {
  if (t.dims != want) {
    throw TopologyError(fmt::format("layer {}: {} tensor {} has dims [{}], expected [{}]", layer, slot,
                                    t.id, fmt::join(t.dims, ","), fmt::join(want, ",")));
  }
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv_2d: return "CONV_2D";
    case LayerKind::depthwise_conv_2d: return "DEPTHWISE_CONV_2D";
    case LayerKind::fully_connected: return "FULLY_CONNECTED";
    case LayerKind::average_pool_2d: return "AVERAGE_POOL_2D";
    case LayerKind::max_pool_2d: return "MAX_POOL_2D";
    case LayerKind::reshape: return "RESHAPE";
    case LayerKind::argmax_output: return "ARGMAX_OUTPUT";
    case LayerKind::relu6: return "RELU6";
  }
  return "?";
}

const char* to_string(TensorRole role) {
  switch (role) {
    case TensorRole::weights: return "weights";
    case TensorRole::bias: return "bias";
    case TensorRole::activation: return "activation";
  }
  return "?";
}

size_t TensorInfo::elements() const { return product(dims); }

bool LayerSpec::has_output_stage() const {
  return kind == LayerKind::conv_2d || kind == LayerKind::depthwise_conv_2d ||
         kind == LayerKind::fully_connected;
}

bool Sq8Model::has_tensor(uint32_t id) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.id == id; });
}

const TensorInfo& Sq8Model::tensor(uint32_t id) const {
  for (const auto& t : tensors) {
    if (t.id == id) return t;
  }
  throw TopologyError(fmt::format("tensor {} does not exist", id));
}

TensorInfo& Sq8Model::tensor(uint32_t id) {
  return const_cast<TensorInfo&>(std::as_const(*this).tensor(id));
}

// ---- serialization -----------------------------------------------------------

std::vector<uint8_t> save(const Sq8Model& model) {
  Writer w;
  std::vector<uint8_t> data;
  w.raw(kModelMagic, 4);
  w.le<uint16_t>(model.header.version);
  w.le<uint16_t>(0);
  w.le<uint32_t>(static_cast<uint32_t>(model.header.input_shape.size()));
  for (auto d : model.header.input_shape) w.le<uint32_t>(d);
  w.le<uint32_t>(model.header.input_tensor);
  w.le<uint32_t>(model.header.bound);
  w.le<uint32_t>(model.header.ring_bits_required);
  w.le<uint32_t>(static_cast<uint32_t>(model.tensors.size()));
  w.le<uint32_t>(static_cast<uint32_t>(model.layers.size()));
  for (const auto& t : model.tensors) {
    const uint64_t offset = data.size();
    if (t.role == TensorRole::weights) {
      data.insert(data.end(), t.u8.begin(), t.u8.end());
    } else if (t.role == TensorRole::bias) {
      for (int32_t v : t.i32) {
        uint8_t b[4];
        std::memcpy(b, &v, 4);
        data.insert(data.end(), b, b + 4);
      }
    }
    w.le<uint32_t>(t.id);
    w.le<uint8_t>(static_cast<uint8_t>(t.role));
    w.le<uint8_t>(static_cast<uint8_t>(t.dims.size()));
    w.le<uint16_t>(0);
    for (auto d : t.dims) w.le<uint32_t>(d);
    w.le<double>(t.quant.scale);
    w.le<int32_t>(t.quant.zero_point);
    w.le<uint64_t>(offset);
    w.le<uint64_t>(data.size() - offset);
  }
  for (const auto& l : model.layers) {
    w.le<uint8_t>(static_cast<uint8_t>(l.kind));
    w.le<uint8_t>(static_cast<uint8_t>(l.padding));
    w.le<uint8_t>(l.clamp_lo);
    w.le<uint8_t>(l.clamp_hi);
    for (uint32_t v : {l.input, l.output, l.weights, l.bias, l.stride_h, l.stride_w, l.filter_h,
                       l.filter_w, l.depth_multiplier}) {
      w.le<uint32_t>(v);
    }
    w.le<double>(l.multiplier);
    w.le<int32_t>(l.fixed.m_prime);
    w.le<int32_t>(l.fixed.shift - 31);
  }
  w.le<uint64_t>(data.size());
  w.raw(data.data(), data.size());
  return std::move(w.bytes());
}

Sq8Model parse(std::span<const uint8_t> bytes) {
  Reader r(bytes, "model");
  Sq8Model m;
  r.magic(kModelMagic);
  m.header.version = r.le<uint16_t>();
  if (m.header.version != kSq8Version) {
    throw ModelFormatError(fmt::format("unsupported model version {}", m.header.version));
  }
  r.le<uint16_t>();
  const uint32_t in_dims = r.le<uint32_t>();
  if (in_dims > 8) throw ModelFormatError(fmt::format("input rank {} too large", in_dims));
  for (uint32_t i = 0; i < in_dims; ++i) m.header.input_shape.push_back(r.le<uint32_t>());
  m.header.input_tensor = r.le<uint32_t>();
  m.header.bound = r.le<uint32_t>();
  m.header.ring_bits_required = r.le<uint32_t>();
  const uint32_t tensor_count = r.le<uint32_t>();
  const uint32_t layer_count = r.le<uint32_t>();
  if (tensor_count > r.remaining() || layer_count > r.remaining()) {
    throw ModelFormatError("table counts exceed file size");
  }

  struct Extent {
    uint64_t offset, len;
  };
  std::vector<Extent> extents;
  for (uint32_t i = 0; i < tensor_count; ++i) {
    TensorInfo t;
    t.id = r.le<uint32_t>();
    const uint8_t role = r.le<uint8_t>();
    if (role > 2) throw ModelFormatError(fmt::format("tensor {}: unknown role {}", t.id, role));
    t.role = static_cast<TensorRole>(role);
    const uint8_t nd = r.le<uint8_t>();
    r.le<uint16_t>();
    for (uint8_t d = 0; d < nd; ++d) t.dims.push_back(r.le<uint32_t>());
    t.quant.scale = r.le<double>();
    t.quant.zero_point = r.le<int32_t>();
    const uint64_t offset = r.le<uint64_t>();
    const uint64_t len = r.le<uint64_t>();
    extents.push_back({offset, len});
    m.tensors.push_back(std::move(t));
  }
  for (uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec l;
    const uint8_t kind = r.le<uint8_t>();
    if (kind > static_cast<uint8_t>(LayerKind::relu6)) {
      throw ModelFormatError(fmt::format("layer {}: unknown kind {}", i, kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    const uint8_t pad = r.le<uint8_t>();
    if (pad > 1) throw ModelFormatError(fmt::format("layer {}: unknown padding {}", i, pad));
    l.padding = static_cast<Padding>(pad);
    l.clamp_lo = r.le<uint8_t>();
    l.clamp_hi = r.le<uint8_t>();
    for (uint32_t* f : {&l.input, &l.output, &l.weights, &l.bias, &l.stride_h, &l.stride_w,
                        &l.filter_h, &l.filter_w, &l.depth_multiplier}) {
      *f = r.le<uint32_t>();
    }
    l.multiplier = r.le<double>();
    l.fixed.m_prime = r.le<int32_t>();
    l.fixed.shift = r.le<int32_t>() + 31;
    m.layers.push_back(l);
  }
  const uint64_t data_size = r.le<uint64_t>();
  if (data_size != r.remaining()) {
    throw ModelFormatError(fmt::format("data section is {} bytes, header says {}", r.remaining(), data_size));
  }
  const auto data = r.take(data_size);
  for (size_t i = 0; i < m.tensors.size(); ++i) {
    auto& t = m.tensors[i];
    const auto [offset, len] = extents[i];
    if (offset > data.size() || len > data.size() - offset) {
      throw ModelFormatError(fmt::format("tensor {}: data extent out of range", t.id));
    }
    if (len == 0) continue;  // absent (e.g. a public-structure file)
    const size_t width = t.role == TensorRole::weights ? 1 : t.role == TensorRole::bias ? 4 : 0;
    if (width == 0 || len != t.elements() * width) {
      throw ModelFormatError(fmt::format("tensor {}: {} data bytes for {} {} elements", t.id, len,
                                         t.elements(), to_string(t.role)));
    }
    const auto src = data.subspan(offset, len);
    if (t.role == TensorRole::weights) {
      t.u8.assign(src.begin(), src.end());
    } else {
      t.i32.resize(t.elements());
      std::memcpy(t.i32.data(), src.data(), len);
    }
  }
  return m;
}

Sq8Model load(std::span<const uint8_t> bytes, std::optional<int> session_k) {
  Sq8Model m = parse(bytes);
  validate(m, session_k);
  return m;
}

Sq8Model load_file(const std::string& path, std::optional<int> session_k) {
  return load(read_file(path), session_k);
}

void save_file(const Sq8Model& model, const std::string& path) { write_file(path, save(model)); }

nlohmann::json to_json(const Sq8Model& model) {
  using nlohmann::json;
  auto b64 = [](std::span<const uint8_t> bytes) {
    std::string out(sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(),
                      sodium_base64_VARIANT_ORIGINAL);
    out.resize(std::strlen(out.c_str()));
    return out;
  };
  json j;
  j["version"] = model.header.version;
  j["input_shape"] = model.header.input_shape;
  j["input_tensor"] = model.header.input_tensor;
  j["bound"] = model.header.bound;
  j["ring_bits_required"] = model.header.ring_bits_required;
  j["tensors"] = json::array();
  for (const auto& t : model.tensors) {
    json jt{{"id", t.id},
            {"role", to_string(t.role)},
            {"dims", t.dims},
            {"scale", t.quant.scale},
            {"zero_point", t.quant.zero_point}};
    if (!t.u8.empty()) jt["data"] = b64(t.u8);
    if (!t.i32.empty()) {
      jt["data"] = b64({reinterpret_cast<const uint8_t*>(t.i32.data()), t.i32.size() * 4});
    }
    j["tensors"].push_back(std::move(jt));
  }
  j["layers"] = json::array();
  for (const auto& l : model.layers) {
    json jl{{"kind", to_string(l.kind)}, {"input", l.input}};
    if (l.output != kNoTensor) jl["output"] = l.output;
    if (l.kind != LayerKind::reshape && l.kind != LayerKind::argmax_output &&
        l.kind != LayerKind::fully_connected) {
      jl["stride"] = {l.stride_h, l.stride_w};
      jl["filter"] = {l.filter_h, l.filter_w};
      jl["padding"] = l.padding == Padding::same ? "SAME" : "VALID";
    }
    if (l.has_output_stage()) {
      jl["weights"] = l.weights;
      jl["bias"] = l.bias;
      jl["clamp"] = {l.clamp_lo, l.clamp_hi};
      jl["multiplier"] = l.multiplier;
      jl["m_prime"] = l.fixed.m_prime;
      jl["shift"] = l.fixed.shift;
    }
    if (l.kind == LayerKind::depthwise_conv_2d) jl["depth_multiplier"] = l.depth_multiplier;
    j["layers"].push_back(std::move(jl));
  }
  return j;
}

// ---- validation --------------------------------------------------------------

AxisGeometry axis_geometry(uint32_t in, uint32_t filter, uint32_t stride, Padding padding) {
  if (stride == 0 || filter == 0) throw TopologyError("zero stride or filter size");
  if (padding == Padding::same) {
    const uint32_t out = (in + stride - 1) / stride;
    const int64_t total = std::max<int64_t>(int64_t{out - 1} * stride + filter - in, 0);
    return {out, static_cast<uint32_t>(total / 2)};
  }
  if (filter > in) {
    throw TopologyError(fmt::format("VALID filter {} larger than input {}", filter, in));
  }
  return {(in - filter) / stride + 1, 0};
}

std::vector<uint32_t> infer_output_dims(const Sq8Model& model, const LayerSpec& l,
                                        std::span<const uint32_t> in) {
  auto spatial = [&](uint32_t channels) {
    if (in.size() != 3) throw TopologyError(fmt::format("{} needs an HWC input", to_string(l.kind)));
    const auto h = axis_geometry(in[0], l.filter_h, l.stride_h, l.padding);
    const auto w = axis_geometry(in[1], l.filter_w, l.stride_w, l.padding);
    return std::vector<uint32_t>{h.out, w.out, channels};
  };
  switch (l.kind) {
    case LayerKind::conv_2d:
      return spatial(model.tensor(l.weights).dims.at(0));
    case LayerKind::depthwise_conv_2d:
      if (in.size() != 3) throw TopologyError("DEPTHWISE_CONV_2D needs an HWC input");
      return spatial(in[2] * l.depth_multiplier);
    case LayerKind::fully_connected:
      return {model.tensor(l.weights).dims.at(0)};
    case LayerKind::average_pool_2d:
    case LayerKind::max_pool_2d:
      if (in.size() != 3) throw TopologyError("pooling needs an HWC input");
      return spatial(in[2]);
    case LayerKind::reshape:
      return model.tensor(l.output).dims;
    case LayerKind::argmax_output:
      return {};
    case LayerKind::relu6:
      break;
  }
  throw TopologyError("unfused RELU6 layer; activations must be fused into the preceding layer");
}

void validate_structure(const Sq8Model& m) {
  if (m.header.version != kSq8Version) {
    throw ModelFormatError(fmt::format("unsupported model version {}", m.header.version));
  }
  std::set<uint32_t> ids;
  for (const auto& t : m.tensors) {
    if (!ids.insert(t.id).second) throw TopologyError(fmt::format("duplicate tensor id {}", t.id));
    if (t.dims.empty() || product(t.dims) == 0) {
      throw TopologyError(fmt::format("tensor {} has an empty shape", t.id));
    }
  }
  const auto& hin = m.header.input_shape;
  if (hin.size() != 3 || product(hin) == 0) {
    throw TopologyError(fmt::format("input shape [{}] is not a non-empty HWC shape", fmt::join(hin, ",")));
  }
  if (!m.has_tensor(m.header.input_tensor)) throw TopologyError("input tensor does not exist");
  const auto& input = m.tensor(m.header.input_tensor);
  if (input.role != TensorRole::activation || input.dims != hin) {
    throw TopologyError("input tensor does not match the header input shape");
  }
  if (m.header.bound < 1 || m.header.bound > 100) {
    throw ConfigError(fmt::format("shift bound L={} out of range", m.header.bound));
  }
  if (m.layers.empty() || m.layers.back().kind != LayerKind::argmax_output) {
    throw TopologyError("the last layer must be ARGMAX_OUTPUT");
  }

  std::set<uint32_t> produced{m.header.input_tensor};
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (l.kind == LayerKind::relu6) {
      throw TopologyError(fmt::format(
          "layer {}: unfused RELU6; activations must be fused into the preceding layer", i));
    }
    if (l.kind == LayerKind::argmax_output && i + 1 != m.layers.size()) {
      throw TopologyError(fmt::format("layer {}: ARGMAX_OUTPUT before the last layer", i));
    }
    const auto& in = expect_tensor(m, l.input, TensorRole::activation, i, "input");
    if (!produced.count(l.input)) {
      throw TopologyError(fmt::format("layer {}: input tensor {} is not produced earlier", i, l.input));
    }
    if (l.clamp_lo > l.clamp_hi) {
      throw TopologyError(fmt::format("layer {}: clamp range [{}, {}] is empty", i, l.clamp_lo, l.clamp_hi));
    }
    if (l.kind == LayerKind::argmax_output) {
      if (l.output != kNoTensor) throw TopologyError("ARGMAX_OUTPUT has no output tensor");
      continue;
    }
    const auto& out = expect_tensor(m, l.output, TensorRole::activation, i, "output");
    if (!produced.insert(l.output).second) {
      throw TopologyError(fmt::format("layer {}: output tensor {} is written twice", i, l.output));
    }
    if (l.kind == LayerKind::conv_2d || l.kind == LayerKind::depthwise_conv_2d ||
        l.kind == LayerKind::average_pool_2d || l.kind == LayerKind::max_pool_2d) {
      if (l.stride_h == 0 || l.stride_w == 0 || l.filter_h == 0 || l.filter_w == 0) {
        throw TopologyError(fmt::format("layer {}: zero stride or filter size", i));
      }
    }
    if (l.has_output_stage()) {
      const auto& w = expect_tensor(m, l.weights, TensorRole::weights, i, "weights");
      const auto& b = expect_tensor(m, l.bias, TensorRole::bias, i, "bias");
      uint32_t outputs = 0;
      if (l.kind == LayerKind::conv_2d) {
        if (in.dims.size() != 3) throw TopologyError(fmt::format("layer {}: CONV_2D needs HWC input", i));
        if (w.dims.size() != 4) throw TopologyError(fmt::format("layer {}: conv weights must be OHWI", i));
        outputs = w.dims[0];
        expect_dims(w, {outputs, l.filter_h, l.filter_w, in.dims[2]}, i, "weights");
      } else if (l.kind == LayerKind::depthwise_conv_2d) {
        if (in.dims.size() != 3) throw TopologyError(fmt::format("layer {}: DEPTHWISE_CONV_2D needs HWC input", i));
        if (l.depth_multiplier == 0) throw TopologyError(fmt::format("layer {}: depth multiplier 0", i));
        outputs = in.dims[2] * l.depth_multiplier;
        expect_dims(w, {1, l.filter_h, l.filter_w, outputs}, i, "weights");
      } else {
        if (w.dims.size() != 2) throw TopologyError(fmt::format("layer {}: FC weights must be [out, in]", i));
        outputs = w.dims[0];
        expect_dims(w, {outputs, static_cast<uint32_t>(in.elements())}, i, "weights");
      }
      expect_dims(b, {outputs}, i, "bias");
    } else if (l.weights != kNoTensor || l.bias != kNoTensor) {
      throw TopologyError(fmt::format("layer {}: {} takes no weights", i, to_string(l.kind)));
    }
    if (l.kind == LayerKind::reshape && out.elements() != in.elements()) {
      throw TopologyError(fmt::format("layer {}: reshape changes the element count", i));
    }
    expect_dims(out, infer_output_dims(m, l, in.dims), i, "output");
  }
}

size_t window_size(const Sq8Model& m, const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv_2d:
      return size_t{l.filter_h} * l.filter_w * m.tensor(l.input).dims.at(2);
    case LayerKind::depthwise_conv_2d:
    case LayerKind::average_pool_2d:
    case LayerKind::max_pool_2d:
      return size_t{l.filter_h} * l.filter_w;
    case LayerKind::fully_connected:
      return m.tensor(l.input).elements();
    default:
      return 0;
  }
}

int required_ring_bits(const Sq8Model& m, const LayerSpec& l) {
  const int L = static_cast<int>(m.header.bound);
  if (l.has_output_stage()) {
    const auto& bias = m.tensor(l.bias);
    u128 max_bias = 0;
    for (int32_t v : bias.i32) max_bias = std::max<u128>(max_bias, std::abs(int64_t{v}));
    const u128 max_s = u128{window_size(m, l)} * 255 * 255 + max_bias;
    const int bits_s = bit_length(max_s);
    return std::max(bits_s + 32 + (L - l.fixed.shift), L) + 2;
  }
  if (l.kind == LayerKind::average_pool_2d) {
    const size_t n = window_size(m, l);
    // Smaller (padded) windows have a larger reciprocal but a smaller sum.
    u128 worst = 0;
    for (size_t w = 1; w <= n; ++w) worst = std::max<u128>(worst, u128{255} * w * quant::avg_reciprocal(w));
    return bit_length(worst + (u128{1} << (quant::kAvgReciprocalBits - 1))) + 2;
  }
  return kMinRingBits;
}

int required_ring_bits(const Sq8Model& m) {
  int k = kMinRingBits;
  for (const auto& l : m.layers) k = std::max(k, required_ring_bits(m, l));
  return k;
}

void finalize(Sq8Model& m) {
  int bound = quant::kAvgReciprocalBits;
  for (const auto& l : m.layers) {
    if (l.has_output_stage()) bound = std::max(bound, l.fixed.shift);
  }
  m.header.bound = static_cast<uint32_t>(bound);
  m.header.ring_bits_required = static_cast<uint32_t>(required_ring_bits(m));
}

void validate(const Sq8Model& m, std::optional<int> session_k) {
  validate_structure(m);
  for (const auto& t : m.tensors) {
    if (t.role == TensorRole::bias) {
      if (t.i32.size() != t.elements()) throw ModelFormatError(fmt::format("bias tensor {} has no data", t.id));
      if (t.quant.zero_point != 0) {
        throw BiasScaleError(fmt::format("bias tensor {} has zero point {}", t.id, t.quant.zero_point));
      }
      if (!std::isfinite(t.quant.scale) || t.quant.scale <= 0) {
        throw BiasScaleError(fmt::format("bias tensor {} has scale {}", t.id, t.quant.scale));
      }
      continue;
    }
    if (t.role == TensorRole::weights && t.u8.size() != t.elements()) {
      throw ModelFormatError(fmt::format("weights tensor {} has no data", t.id));
    }
    try {
      quant::validate(t.quant);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("tensor {}: {}", t.id, e.what()));
    }
  }
  const int L = static_cast<int>(m.header.bound);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (l.kind == LayerKind::argmax_output) continue;
    const auto& in = m.tensor(l.input);
    const auto& out = m.tensor(l.output);
    if (!l.has_output_stage()) {
      if (!(in.quant == out.quant)) {
        throw ConfigError(fmt::format("layer {}: {} must keep the input quantization", i, to_string(l.kind)));
      }
      continue;
    }
    const auto& w = m.tensor(l.weights);
    const auto& b = m.tensor(l.bias);
    if (b.quant.scale != in.quant.scale * w.quant.scale) {
      throw BiasScaleError(fmt::format("layer {}: bias scale {} != input scale * weight scale {}", i,
                                       b.quant.scale, in.quant.scale * w.quant.scale));
    }
    const double m_real = in.quant.scale * w.quant.scale / out.quant.scale;
    if (!(l.multiplier > 0 && l.multiplier < 1)) {
      throw UnsupportedMultiplierError(fmt::format("layer {}: multiplier {} outside (0, 1)", i, l.multiplier));
    }
    if (std::abs(l.multiplier - m_real) > 1e-9 * m_real) {
      throw ConfigError(fmt::format("layer {}: multiplier {} disagrees with scales ({})", i,
                                    l.multiplier, m_real));
    }
    if (!(l.fixed == quant::normalize_multiplier(l.multiplier))) {
      throw UnsupportedMultiplierError(
          fmt::format("layer {}: stored m_prime/shift do not match multiplier {}", i, l.multiplier));
    }
    quant::validate(l.fixed, L);
  }
  const int need = required_ring_bits(m);
  if (static_cast<int>(m.header.ring_bits_required) < need) {
    throw HeadroomError(fmt::format("header states k >= {} but the model needs k >= {}",
                                    m.header.ring_bits_required, need));
  }
  if (session_k && *session_k < static_cast<int>(m.header.ring_bits_required)) {
    throw HeadroomError(fmt::format("model needs k >= {}, session has k = {}",
                                    m.header.ring_bits_required, *session_k));
  }
}

Sq8Model public_structure(const Sq8Model& model) {
  Sq8Model m = model;
  for (auto& t : m.tensors) {
    t.u8.clear();
    t.i32.clear();
    t.quant = {};
  }
  for (auto& l : m.layers) {
    l.multiplier = 0;
    l.fixed = {};
  }
  return m;
}

// ---- images ------------------------------------------------------------------

std::vector<uint8_t> save_image(const Image& img) {
  if (img.data.size() != product(img.dims)) throw ShapeError("image data does not match its dims");
  Writer w;
  w.raw(kImageMagic, 4);
  w.le<uint32_t>(static_cast<uint32_t>(img.dims.size()));
  for (auto d : img.dims) w.le<uint32_t>(d);
  w.raw(img.data.data(), img.data.size());
  return std::move(w.bytes());
}

Image load_image(std::span<const uint8_t> bytes) {
  Reader r(bytes, "image");
  r.magic(kImageMagic);
  Image img;
  const uint32_t nd = r.le<uint32_t>();
  if (nd == 0 || nd > 8) throw ModelFormatError(fmt::format("image rank {} invalid", nd));
  for (uint32_t i = 0; i < nd; ++i) img.dims.push_back(r.le<uint32_t>());
  const size_t n = product(img.dims);
  if (r.remaining() != n) {
    throw ModelFormatError(fmt::format("image holds {} bytes, dims need {}", r.remaining(), n));
  }
  const auto data = r.take(n);
  img.data.assign(data.begin(), data.end());
  return img;
}

Image load_image_file(const std::string& path) { return load_image(read_file(path)); }

void save_image_file(const Image& img, const std::string& path) { write_file(path, save_image(img)); }

// ---- sharing -----------------------------------------------------------------

namespace {

size_t layer_share_count(const Sq8Model& m, const LayerSpec& l) {
  if (!l.has_output_stage()) return 0;
  return m.tensor(l.weights).elements() + m.tensor(l.bias).elements() + 5;
}

// Secret values of one layer in dealing order.
void append_secrets(const Sq8Model& m, const LayerSpec& l, const Ring& r, std::vector<u128>& out) {
  if (!l.has_output_stage()) return;
  const auto& w = m.tensor(l.weights);
  const auto& b = m.tensor(l.bias);
  for (uint8_t v : w.u8) out.push_back(v);
  for (int32_t v : b.i32) out.push_back(r.from_signed(v));
  out.push_back(static_cast<u128>(m.tensor(l.input).quant.zero_point));
  out.push_back(static_cast<u128>(w.quant.zero_point));
  out.push_back(static_cast<u128>(m.tensor(l.output).quant.zero_point));
  out.push_back(static_cast<u128>(l.fixed.m_prime));
  out.push_back(r.pow2(static_cast<int>(m.header.bound) - l.fixed.shift));
}

std::vector<SharedLayer> split_layers(const Sq8Model& structure, std::span<const RepShare> flat) {
  std::vector<SharedLayer> out(structure.layers.size());
  size_t pos = 0;
  for (size_t i = 0; i < structure.layers.size(); ++i) {
    const auto& l = structure.layers[i];
    if (!l.has_output_stage()) continue;
    auto& sl = out[i];
    const size_t nw = structure.tensor(l.weights).elements();
    const size_t nb = structure.tensor(l.bias).elements();
    sl.weights.assign(flat.begin() + pos, flat.begin() + pos + nw);
    pos += nw;
    sl.bias.assign(flat.begin() + pos, flat.begin() + pos + nb);
    pos += nb;
    sl.z_in = flat[pos++];
    sl.z_w = flat[pos++];
    sl.z_out = flat[pos++];
    sl.mult.m_prime = flat[pos++];
    sl.mult.pow = flat[pos++];
    sl.mult.bound = static_cast<int>(structure.header.bound);
  }
  return out;
}

std::vector<RepShare> flatten(const SharedModel& sm) {
  std::vector<RepShare> flat;
  for (const auto& l : sm.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    if (!l.weights.empty()) {
      for (const auto& v : {l.z_in, l.z_w, l.z_out, l.mult.m_prime, l.mult.pow}) flat.push_back(v);
    }
  }
  return flat;
}

}  // namespace

size_t parameter_count(const Sq8Model& model) {
  size_t n = 0;
  for (const auto& l : model.layers) n += layer_share_count(model, l);
  return n;
}

size_t SharedModel::share_count() const { return flatten(*this).size(); }

std::array<SharedModel, 3> deal_model(const Sq8Model& model, int ring_bits,
                                      std::optional<uint64_t> seed) {
  validate(model, ring_bits);
  const Ring r(ring_bits);
  std::vector<u128> secrets;
  for (const auto& l : model.layers) append_secrets(model, l, r, secrets);

  Prg prg(seed ? derive_key(*seed, "dealer", 0) : random_key());
  const auto x1 = prg.ring(r, secrets.size());
  const auto x2 = prg.ring(r, secrets.size());
  std::array<std::vector<RepShare>, 3> flat;
  for (size_t i = 0; i < secrets.size(); ++i) {
    const u128 x3 = r.sub(r.sub(secrets[i], x1[i]), x2[i]);
    flat[0].push_back({x1[i], x2[i]});
    flat[1].push_back({x2[i], x3});
    flat[2].push_back({x3, x1[i]});
  }
  const Sq8Model structure = public_structure(model);
  std::array<SharedModel, 3> out;
  for (int p = 0; p < 3; ++p) {
    out[p].structure = structure;
    out[p].party = p + 1;
    out[p].ring_bits = ring_bits;
    out[p].layers = split_layers(structure, flat[p]);
  }
  return out;
}

SharedModel share_model(PartySession& s, const Sq8Model& structure, const Sq8Model* model,
                        PartyId owner) {
  validate_structure(structure);
  if (static_cast<int>(structure.header.ring_bits_required) > s.ring().bits()) {
    throw HeadroomError(fmt::format("model needs k >= {}, session has k = {}",
                                    structure.header.ring_bits_required, s.ring().bits()));
  }
  std::vector<u128> secrets;
  if (s.id() == owner) {
    if (!model) throw ConfigError("the model owner must supply the model");
    validate(*model, s.ring().bits());
    for (const auto& l : model->layers) append_secrets(*model, l, s.ring(), secrets);
  }
  const auto flat = arith::input(s, owner, secrets, parameter_count(structure));
  SharedModel sm;
  sm.structure = public_structure(structure);
  sm.party = s.id().value();
  sm.ring_bits = s.ring().bits();
  sm.layers = split_layers(sm.structure, flat);
  return sm;
}

std::vector<uint8_t> save_shares(const SharedModel& sm) {
  const Ring r(sm.ring_bits);
  const auto structure = save(sm.structure);
  const auto flat = flatten(sm);
  Writer w;
  w.raw(kShareMagic, 4);
  w.le<uint16_t>(kShareVersion);
  w.le<uint8_t>(static_cast<uint8_t>(sm.party));
  w.le<uint16_t>(static_cast<uint16_t>(sm.ring_bits));
  w.le<uint32_t>(static_cast<uint32_t>(structure.size()));
  w.raw(structure.data(), structure.size());
  w.le<uint64_t>(flat.size());
  std::vector<u128> pairs;
  pairs.reserve(2 * flat.size());
  for (const auto& v : flat) {
    pairs.push_back(v.first);
    pairs.push_back(v.second);
  }
  std::vector<uint8_t> enc;
  r.encode(pairs, enc);
  w.raw(enc.data(), enc.size());
  return std::move(w.bytes());
}

SharedModel load_shares(std::span<const uint8_t> bytes) {
  Reader rd(bytes, "share file");
  rd.magic(kShareMagic);
  if (rd.le<uint16_t>() != kShareVersion) throw ModelFormatError("unsupported share file version");
  SharedModel sm;
  sm.party = rd.le<uint8_t>();
  sm.ring_bits = rd.le<uint16_t>();
  if (sm.party < 1 || sm.party > 3) throw ModelFormatError(fmt::format("share file party {}", sm.party));
  if (sm.ring_bits < kMinRingBits || sm.ring_bits > kMaxRingBits) {
    throw ModelFormatError(fmt::format("share file ring width {}", sm.ring_bits));
  }
  const uint32_t len = rd.le<uint32_t>();
  sm.structure = parse(rd.take(len));
  validate_structure(sm.structure);
  const uint64_t count = rd.le<uint64_t>();
  if (count != parameter_count(sm.structure)) {
    throw ModelFormatError(fmt::format("share file holds {} values, structure needs {}", count,
                                       parameter_count(sm.structure)));
  }
  const Ring r(sm.ring_bits);
  if (rd.remaining() != 2 * count * r.bytes()) throw ModelFormatError("share file size mismatch");
  const auto pairs = r.decode(rd.take(rd.remaining()));
  std::vector<RepShare> flat(count);
  for (size_t i = 0; i < count; ++i) flat[i] = {pairs[2 * i], pairs[2 * i + 1]};
  sm.layers = split_layers(sm.structure, flat);
  return sm;
}

void save_shares_file(const SharedModel& shares, const std::string& path) {
  write_file(path, save_shares(shares));
}

SharedModel load_shares_file(const std::string& path) { return load_shares(read_file(path)); }

std::vector<OpenedLayer> open_offline(const std::array<SharedModel, 3>& shares) {
  const Ring r(shares[0].ring_bits);
  std::array<std::vector<RepShare>, 3> flat;
  for (int p = 0; p < 3; ++p) flat[p] = flatten(shares[p]);
  std::vector<int64_t> values(flat[0].size());
  for (size_t i = 0; i < values.size(); ++i) {
    for (int p = 0; p < 3; ++p) {
      if (flat[p][i].second != flat[(p + 1) % 3][i].first) {
        throw ConsistencyError(fmt::format("share {} inconsistent between P{} and P{}", i, p + 1, (p + 1) % 3 + 1));
      }
    }
    values[i] = static_cast<int64_t>(
        r.to_signed(r.add(r.add(flat[0][i].first, flat[1][i].first), flat[2][i].first)));
  }
  std::vector<OpenedLayer> out(shares[0].layers.size());
  size_t pos = 0;
  for (size_t i = 0; i < out.size(); ++i) {
    const auto& sl = shares[0].layers[i];
    if (sl.weights.empty()) continue;
    auto& o = out[i];
    o.weights.assign(values.begin() + pos, values.begin() + pos + sl.weights.size());
    pos += sl.weights.size();
    o.bias.assign(values.begin() + pos, values.begin() + pos + sl.bias.size());
    pos += sl.bias.size();
    o.z_in = values[pos++];
    o.z_w = values[pos++];
    o.z_out = values[pos++];
    o.m_prime = values[pos++];
    o.pow = values[pos++];
  }
  return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(fmt::format("cannot open {}", path));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError(fmt::format("cannot write {}", path));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError(fmt::format("write to {} failed", path));
}

}  // namespace sq8
