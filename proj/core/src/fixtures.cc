#include "sq8/fixtures.h"

#include <cmath>
#include <random>

#include "sq8/errors.h"

namespace sq8::fixtures {

ModelBuilder::ModelBuilder(std::vector<uint32_t> input_dims, quant::QuantParams input_quant) {
  model_.header.input_shape = input_dims;
  input_ = add_tensor(TensorRole::activation, std::move(input_dims), input_quant);
  model_.header.input_tensor = input_;
}

uint32_t ModelBuilder::add_tensor(TensorRole role, std::vector<uint32_t> dims, quant::QuantParams q) {
  TensorInfo t;
  t.id = next_id_++;
  t.role = role;
  t.dims = std::move(dims);
  t.quant = q;
  model_.tensors.push_back(std::move(t));
  return model_.tensors.back().id;
}

uint32_t ModelBuilder::output_stage(LayerSpec l, std::vector<uint32_t> weight_dims,
                                    std::vector<uint8_t> weights, quant::QuantParams weight_quant,
                                    std::vector<int32_t> bias, quant::QuantParams out_quant) {
  const auto in_quant = model_.tensor(l.input).quant;
  const uint32_t nbias = static_cast<uint32_t>(bias.size());
  l.weights = add_tensor(TensorRole::weights, std::move(weight_dims), weight_quant);
  model_.tensor(l.weights).u8 = std::move(weights);
  l.bias = add_tensor(TensorRole::bias, {nbias}, {in_quant.scale * weight_quant.scale, 0});
  model_.tensor(l.bias).i32 = std::move(bias);
  l.multiplier = in_quant.scale * weight_quant.scale / out_quant.scale;
  l.fixed = quant::normalize_multiplier(l.multiplier);
  const auto out_dims = infer_output_dims(model_, l, model_.tensor(l.input).dims);
  l.output = add_tensor(TensorRole::activation, out_dims, out_quant);
  model_.layers.push_back(l);
  return l.output;
}

uint32_t ModelBuilder::conv(uint32_t in, std::vector<uint32_t> weight_dims,
                            std::vector<uint8_t> weights, quant::QuantParams weight_quant,
                            std::vector<int32_t> bias, quant::QuantParams out_quant,
                            uint32_t stride, Padding padding, uint8_t lo, uint8_t hi) {
  LayerSpec l;
  l.kind = LayerKind::conv_2d;
  l.input = in;
  l.stride_h = l.stride_w = stride;
  l.padding = padding;
  l.filter_h = weight_dims.at(1);
  l.filter_w = weight_dims.at(2);
  l.clamp_lo = lo;
  l.clamp_hi = hi;
  return output_stage(l, std::move(weight_dims), std::move(weights), weight_quant, std::move(bias),
                      out_quant);
}

uint32_t ModelBuilder::depthwise(uint32_t in, std::vector<uint32_t> weight_dims,
                                 std::vector<uint8_t> weights, quant::QuantParams weight_quant,
                                 std::vector<int32_t> bias, quant::QuantParams out_quant,
                                 uint32_t stride, Padding padding, uint32_t depth_multiplier,
                                 uint8_t lo, uint8_t hi) {
  LayerSpec l;
  l.kind = LayerKind::depthwise_conv_2d;
  l.input = in;
  l.stride_h = l.stride_w = stride;
  l.padding = padding;
  l.filter_h = weight_dims.at(1);
  l.filter_w = weight_dims.at(2);
  l.depth_multiplier = depth_multiplier;
  l.clamp_lo = lo;
  l.clamp_hi = hi;
  return output_stage(l, std::move(weight_dims), std::move(weights), weight_quant, std::move(bias),
                      out_quant);
}

uint32_t ModelBuilder::fully_connected(uint32_t in, std::vector<uint8_t> weights,
                                       quant::QuantParams weight_quant, std::vector<int32_t> bias,
                                       quant::QuantParams out_quant, uint8_t lo, uint8_t hi) {
  LayerSpec l;
  l.kind = LayerKind::fully_connected;
  l.input = in;
  l.clamp_lo = lo;
  l.clamp_hi = hi;
  const uint32_t outputs = static_cast<uint32_t>(bias.size());
  const uint32_t inputs = static_cast<uint32_t>(model_.tensor(in).elements());
  return output_stage(l, {outputs, inputs}, std::move(weights), weight_quant, std::move(bias),
                      out_quant);
}

uint32_t ModelBuilder::pool(LayerKind kind, uint32_t in, uint32_t filter, uint32_t stride,
                            Padding padding) {
  LayerSpec l;
  l.kind = kind;
  l.input = in;
  l.filter_h = l.filter_w = filter;
  l.stride_h = l.stride_w = stride;
  l.padding = padding;
  const auto& src = model_.tensor(in);
  l.output = add_tensor(TensorRole::activation, infer_output_dims(model_, l, src.dims), src.quant);
  model_.layers.push_back(l);
  return l.output;
}

uint32_t ModelBuilder::max_pool(uint32_t in, uint32_t filter, uint32_t stride, Padding padding) {
  return pool(LayerKind::max_pool_2d, in, filter, stride, padding);
}

uint32_t ModelBuilder::avg_pool(uint32_t in, uint32_t filter, uint32_t stride, Padding padding) {
  return pool(LayerKind::average_pool_2d, in, filter, stride, padding);
}

uint32_t ModelBuilder::reshape(uint32_t in, std::vector<uint32_t> dims) {
  LayerSpec l;
  l.kind = LayerKind::reshape;
  l.input = in;
  l.output = add_tensor(TensorRole::activation, std::move(dims), model_.tensor(in).quant);
  model_.layers.push_back(l);
  return l.output;
}

void ModelBuilder::argmax(uint32_t in) {
  LayerSpec l;
  l.kind = LayerKind::argmax_output;
  l.input = in;
  model_.layers.push_back(l);
}

Sq8Model ModelBuilder::build() {
  finalize(model_);
  validate(model_);
  return model_;
}

namespace {

// Draws built on raw engine outputs only; std distributions are
// implementation-defined.
class Draw {
 public:
  explicit Draw(uint64_t seed) : gen_(seed) {}
  uint64_t below(uint64_t n) { return gen_() % n; }
  int64_t range(int64_t lo, int64_t hi) { return lo + static_cast<int64_t>(below(hi - lo + 1)); }
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::vector<uint8_t> bytes(size_t n) {
    std::vector<uint8_t> v(n);
    for (auto& b : v) b = static_cast<uint8_t>(gen_() >> 56);
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

struct StageQuant {
  quant::QuantParams weight, out;
  std::vector<int32_t> bias;
};

// Picks weight and output scales so that m lands near the value that keeps
// outputs spread over the 8-bit range for a window of n terms.
StageQuant stage_quant(Draw& d, const quant::QuantParams& in, size_t n, uint32_t outputs) {
  StageQuant q;
  q.weight = {d.uniform(0.004, 0.02), static_cast<int32_t>(d.range(100, 156))};
  const double spread = std::sqrt(static_cast<double>(n)) * 60.0 * 74.0;
  const double m = d.uniform(0.7, 1.4) * 45.0 / spread;
  q.out = {in.scale * q.weight.scale / m, static_cast<int32_t>(d.range(40, 120))};
  const int64_t b = static_cast<int64_t>(0.5 * spread);
  for (uint32_t o = 0; o < outputs; ++o) q.bias.push_back(static_cast<int32_t>(d.range(-b, b)));
  return q;
}

uint8_t relu6_hi(const quant::QuantParams& q) { return static_cast<uint8_t>(quant::quantize(6.0, q)); }

}  // namespace

Sq8Model random_model(uint64_t seed, const RandomModelOptions& o) {
  Draw d(seed);
  const quant::QuantParams in_q{d.uniform(0.5, 2.0) / 255.0, static_cast<int32_t>(d.range(0, 255))};
  ModelBuilder b({o.height, o.width, o.channels}, in_q);

  auto q1 = stage_quant(d, in_q, 9 * o.channels, o.conv1_channels);
  uint32_t t = b.conv(b.input(), {o.conv1_channels, 3, 3, o.channels},
                      d.bytes(size_t{o.conv1_channels} * 9 * o.channels), q1.weight, q1.bias,
                      q1.out, 1, Padding::same, static_cast<uint8_t>(q1.out.zero_point),
                      relu6_hi(q1.out));
  quant::QuantParams cur = q1.out;
  if (o.depthwise) {
    auto qd = stage_quant(d, cur, 9, o.conv1_channels);
    t = b.depthwise(t, {1, 3, 3, o.conv1_channels}, d.bytes(size_t{9} * o.conv1_channels), qd.weight,
                    qd.bias, qd.out, 1, Padding::same, 1, static_cast<uint8_t>(qd.out.zero_point), 255);
    cur = qd.out;
  }
  auto q2 = stage_quant(d, cur, 9 * o.conv1_channels, o.conv2_channels);
  t = b.conv(t, {o.conv2_channels, 3, 3, o.conv1_channels},
             d.bytes(size_t{o.conv2_channels} * 9 * o.conv1_channels), q2.weight, q2.bias, q2.out, 2,
             Padding::same, static_cast<uint8_t>(q2.out.zero_point), 255);
  t = o.avg_pool ? b.avg_pool(t, 2, 2, Padding::valid) : b.max_pool(t, 2, 2, Padding::valid);

  const auto pooled = ((o.height + 1) / 2 / 2) * ((o.width + 1) / 2 / 2) * o.conv2_channels;
  t = b.reshape(t, {pooled});
  auto q3 = stage_quant(d, q2.out, pooled, o.classes);
  t = b.fully_connected(t, d.bytes(size_t{o.classes} * pooled), q3.weight, q3.bias, q3.out, 0, 255);
  b.argmax(t);
  return b.build();
}

Sq8Model tiny_fc_model(uint64_t seed, uint32_t inputs, uint32_t classes) {
  Draw d(seed);
  const quant::QuantParams in_q{1.0 / 255.0, static_cast<int32_t>(d.range(0, 255))};
  ModelBuilder b({1, 1, inputs}, in_q);
  auto q = stage_quant(d, in_q, inputs, classes);
  const uint32_t t = b.fully_connected(b.input(), d.bytes(size_t{classes} * inputs), q.weight, q.bias,
                                       q.out, 0, 255);
  b.argmax(t);
  return b.build();
}

Image random_image(const Sq8Model& model, uint64_t seed) {
  Draw d(seed);
  Image img;
  img.dims = model.header.input_shape;
  size_t n = 1;
  for (auto v : img.dims) n *= v;
  img.data = d.bytes(n);
  return img;
}

}  // namespace sq8::fixtures
