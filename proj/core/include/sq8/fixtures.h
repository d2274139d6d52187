#pragma once

#include <cstdint>
#include <vector>

#include "sq8/model.h"

namespace sq8::fixtures {

// Assembles a valid model layer by layer. Multipliers, bias scales, L and
// the ring requirement are derived from the given quantization parameters.
class ModelBuilder {
 public:
  ModelBuilder(std::vector<uint32_t> input_dims, quant::QuantParams input_quant);

  uint32_t input() const { return input_; }

  // weights OHWI (conv), 1HWO (depthwise) or [out, in] (fully connected).
  uint32_t conv(uint32_t in, std::vector<uint32_t> weight_dims, std::vector<uint8_t> weights,
                quant::QuantParams weight_quant, std::vector<int32_t> bias,
                quant::QuantParams out_quant, uint32_t stride, Padding padding, uint8_t lo,
                uint8_t hi);
  uint32_t depthwise(uint32_t in, std::vector<uint32_t> weight_dims, std::vector<uint8_t> weights,
                     quant::QuantParams weight_quant, std::vector<int32_t> bias,
                     quant::QuantParams out_quant, uint32_t stride, Padding padding,
                     uint32_t depth_multiplier, uint8_t lo, uint8_t hi);
  uint32_t fully_connected(uint32_t in, std::vector<uint8_t> weights,
                           quant::QuantParams weight_quant, std::vector<int32_t> bias,
                           quant::QuantParams out_quant, uint8_t lo, uint8_t hi);
  uint32_t max_pool(uint32_t in, uint32_t filter, uint32_t stride, Padding padding);
  uint32_t avg_pool(uint32_t in, uint32_t filter, uint32_t stride, Padding padding);
  uint32_t reshape(uint32_t in, std::vector<uint32_t> dims);
  void argmax(uint32_t in);

  // Finalizes and validates.
  Sq8Model build();

 private:
  uint32_t add_tensor(TensorRole role, std::vector<uint32_t> dims, quant::QuantParams q);
  uint32_t output_stage(LayerSpec l, std::vector<uint32_t> weight_dims, std::vector<uint8_t> weights,
                        quant::QuantParams weight_quant, std::vector<int32_t> bias,
                        quant::QuantParams out_quant);
  uint32_t pool(LayerKind kind, uint32_t in, uint32_t filter, uint32_t stride, Padding padding);

  Sq8Model model_;
  uint32_t input_;
  uint32_t next_id_ = 0;
};

struct RandomModelOptions {
  uint32_t height = 8, width = 8, channels = 3;
  uint32_t conv1_channels = 6, conv2_channels = 8;
  uint32_t classes = 10;
  bool depthwise = false;  // add a 3x3 depthwise conv after the first conv
  bool avg_pool = false;   // average instead of max pooling
};

// conv 3x3 SAME (ReLU6) -> [depthwise 3x3 SAME (ReLU)] -> conv 3x3 stride 2
// SAME (ReLU) -> 2x2 pool -> reshape -> fully connected -> argmax, with
// random valid quantization parameters. Only raw mt19937_64 outputs are used,
// so the model is identical on every platform.
Sq8Model random_model(uint64_t seed, const RandomModelOptions& options = {});

// A single fully connected layer over a 1x1xC input.
Sq8Model tiny_fc_model(uint64_t seed = 1, uint32_t inputs = 16, uint32_t classes = 4);

Image random_image(const Sq8Model& model, uint64_t seed);

}  // namespace sq8::fixtures
