#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sq8/quantops.h"
#include "sq8/session.h"

namespace sq8 {

inline constexpr uint16_t kSq8Version = 1;
inline constexpr uint32_t kNoTensor = 0xffffffffu;

enum class TensorRole : uint8_t { weights = 0, bias = 1, activation = 2 };

enum class LayerKind : uint8_t {
  conv_2d = 0,
  depthwise_conv_2d = 1,
  fully_connected = 2,
  average_pool_2d = 3,
  max_pool_2d = 4,
  reshape = 5,
  argmax_output = 6,
  // Never valid in a loaded model; activations must be fused as clamps.
  relu6 = 7,
};

enum class Padding : uint8_t { same = 0, valid = 1 };

const char* to_string(LayerKind kind);
const char* to_string(TensorRole role);

struct TensorInfo {
  uint32_t id = 0;
  TensorRole role = TensorRole::activation;
  std::vector<uint32_t> dims;
  quant::QuantParams quant;
  std::vector<uint8_t> u8;    // weights
  std::vector<int32_t> i32;   // bias

  size_t elements() const;
};

struct LayerSpec {
  LayerKind kind = LayerKind::conv_2d;
  uint32_t input = kNoTensor;
  uint32_t output = kNoTensor;
  uint32_t weights = kNoTensor;
  uint32_t bias = kNoTensor;
  uint32_t stride_h = 1, stride_w = 1;
  Padding padding = Padding::valid;
  uint32_t filter_h = 1, filter_w = 1;
  uint32_t depth_multiplier = 1;
  uint8_t clamp_lo = 0, clamp_hi = 255;
  double multiplier = 0;  // m = m_1 m_2 / m_3
  quant::FixedMultiplier fixed;

  // Layers with a quantized output stage (dot products + requantization).
  bool has_output_stage() const;
};

struct Sq8Header {
  uint16_t version = kSq8Version;
  std::vector<uint32_t> input_shape;  // H, W, C
  uint32_t input_tensor = 0;
  uint32_t bound = 0;                 // L, the public ceiling on every shift
  uint32_t ring_bits_required = 0;
};

struct Sq8Model {
  Sq8Header header;
  std::vector<TensorInfo> tensors;
  std::vector<LayerSpec> layers;

  const TensorInfo& tensor(uint32_t id) const;
  TensorInfo& tensor(uint32_t id);
  bool has_tensor(uint32_t id) const;
};

// ---- serialization -------------------------------------------------------

std::vector<uint8_t> save(const Sq8Model& model);
// Parses and validates. If `session_k` is given the model's headroom
// requirement must fit in it.
Sq8Model load(std::span<const uint8_t> bytes, std::optional<int> session_k = std::nullopt);
Sq8Model load_file(const std::string& path, std::optional<int> session_k = std::nullopt);
void save_file(const Sq8Model& model, const std::string& path);

// Parses without validating.
Sq8Model parse(std::span<const uint8_t> bytes);

// Human-readable dump; weights and biases as base64 of their LE bytes.
nlohmann::json to_json(const Sq8Model& model);

// ---- validation ----------------------------------------------------------

// Topology, geometry and clamp ranges: everything that stays public.
void validate_structure(const Sq8Model& model);
// Structure plus quantization parameters, bias scales, multipliers and
// headroom. Throws TopologyError, BiasScaleError, HeadroomError,
// UnsupportedMultiplierError or ConfigError.
void validate(const Sq8Model& model, std::optional<int> session_k = std::nullopt);

// Output dims of one layer given its input dims.
std::vector<uint32_t> infer_output_dims(const Sq8Model& model, const LayerSpec& layer,
                                        std::span<const uint32_t> in);

// Output size and leading padding of one spatial axis.
struct AxisGeometry {
  uint32_t out = 0;
  uint32_t pad_before = 0;
};
AxisGeometry axis_geometry(uint32_t in, uint32_t filter, uint32_t stride, Padding padding);

// Terms per output of a layer's dot products.
size_t window_size(const Sq8Model& model, const LayerSpec& layer);

// Ring bits needed by one layer / the whole model:
//   output stage: max(bits(|s|) + 32 + (L - shift), L) + 2
//   average pool: bits(255 n) + 31 + 2
// where the +2 covers the sign offset used by signed rounding.
int required_ring_bits(const Sq8Model& model, const LayerSpec& layer);
int required_ring_bits(const Sq8Model& model);

// Sets header.bound to the largest shift and header.ring_bits_required.
void finalize(Sq8Model& model);

// Copy with every secret (weights, biases, scales, zero points, multipliers)
// replaced by placeholders. Geometry, clamp ranges, L and k stay.
Sq8Model public_structure(const Sq8Model& model);

// ---- input images --------------------------------------------------------

struct Image {
  std::vector<uint32_t> dims;  // H, W, C
  std::vector<uint8_t> data;   // HWC
};

std::vector<uint8_t> save_image(const Image& img);
Image load_image(std::span<const uint8_t> bytes);
Image load_image_file(const std::string& path);
void save_image_file(const Image& img, const std::string& path);

// ---- sharing -------------------------------------------------------------

// Per-layer secrets in the order they are dealt: weights, bias, z_in, z_w,
// z_out, m_prime, 2^{L - shift}. Non output-stage layers hold nothing.
struct SharedLayer {
  std::vector<RepShare> weights;
  std::vector<RepShare> bias;
  RepShare z_in, z_w, z_out;
  quant::SharedMultiplier mult;
};

struct SharedModel {
  Sq8Model structure;  // public_structure() of the original
  int party = 0;
  int ring_bits = 0;
  std::vector<SharedLayer> layers;  // parallel to structure.layers

  size_t share_count() const;
};

// Number of ring values the model owner deals: all weights and biases plus
// five scalars per output-stage layer.
size_t parameter_count(const Sq8Model& model);

// Offline dealer: splits every secret with fresh randomness (or randomness
// derived from `seed`) into three replicated sharings.
std::array<SharedModel, 3> deal_model(const Sq8Model& model, int ring_bits,
                                      std::optional<uint64_t> seed = std::nullopt);

// In-session sharing by `owner`, which alone passes the model.
SharedModel share_model(PartySession& s, const Sq8Model& structure, const Sq8Model* model,
                        PartyId owner);

// Share files: "SQ8S", u16 version, u8 party, u16 k, u32 structure length,
// structure (SQ8 bytes), u64 share count, then (first, second) ring pairs.
std::vector<uint8_t> save_shares(const SharedModel& shares);
SharedModel load_shares(std::span<const uint8_t> bytes);
void save_shares_file(const SharedModel& shares, const std::string& path);
SharedModel load_shares_file(const std::string& path);

// Debug aid: reconstructs the secrets of all three parties.
struct OpenedLayer {
  std::vector<int64_t> weights, bias;
  int64_t z_in = 0, z_w = 0, z_out = 0, m_prime = 0, pow = 0;
};
std::vector<OpenedLayer> open_offline(const std::array<SharedModel, 3>& shares);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace sq8
