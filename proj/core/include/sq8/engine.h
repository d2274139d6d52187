#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sq8/model.h"
#include "sq8/quantops.h"
#include "sq8/session.h"

namespace sq8::engine {

// One layer lowered to secure primitive batches. Convolutions and fully
// connected layers become a DotRows index map over the layer's input buffer
// (im2col without copying shares), one output stage batch and one clamp
// batch. Pools become index windows.
struct LayerPlan {
  size_t index = 0;
  LayerKind kind = LayerKind::conv_2d;
  uint32_t input = kNoTensor, output = kNoTensor;
  size_t outputs = 0;
  quant::DotRows rows;
  quant::Windows windows;
  int clamp_lo = 0, clamp_hi = 255;
  size_t window = 0;        // longest window / dot length
  int estimated_rounds = 0;  // upper bound, including daBit refills
};

struct ExecutionPlan {
  int ring_bits = 0;
  TruncMode mode = TruncMode::exact;
  ProbProtocol protocol = ProbProtocol::three_party;
  std::vector<uint32_t> input_shape;
  uint32_t input_tensor = 0;
  std::vector<LayerPlan> layers;
  int input_rounds = 1;

  // Number of truncation batches (one per output stage or average pool).
  size_t trunc_batches() const;
  // Upper bound on the rounds of share_input + infer.
  int estimated_rounds() const;
};

// Static lowering from the public structure. Throws HeadroomError if the
// model needs a wider ring, TopologyError on structural problems; nothing is
// sent.
ExecutionPlan plan(const Sq8Model& structure, const SessionOptions& options);

// `owner` shares the HWC image (only it passes `image`). One round.
std::vector<RepShare> share_input(PartySession& s, const ExecutionPlan& p, const Image* image,
                                  PartyId owner);

struct InferenceResult {
  size_t label = 0;
  std::vector<std::vector<RepShare>> activations;  // output of every layer
};

InferenceResult infer(PartySession& s, const SharedModel& model, const ExecutionPlan& p,
                      std::span<const RepShare> input);

struct LayerStats {
  size_t index = 0;
  LayerKind kind = LayerKind::conv_2d;
  size_t outputs = 0;
  CommStats comm;
  double wall_ms = 0;
  int estimated_rounds = 0;
};

struct InferenceReport {
  InferenceResult result;
  int party = 0;
  std::vector<LayerStats> layers;
  CommStats total;  // online phase: input sharing + all layers
  double wall_ms = 0;
};

// Same as share_input + infer, with per-layer traffic and timing.
InferenceReport infer_with_stats(PartySession& s, const SharedModel& model, const ExecutionPlan& p,
                                 const Image* image, PartyId owner);

// {"party", "label", "ring_bits", "trunc_mode", "prob_protocol", "wall_ms",
//  "estimated_rounds", "total": {...}, "layers": [{"index", "kind", "outputs",
//  "bytes_sent", "bytes_received", "frames", "rounds", "estimated_rounds",
//  "wall_ms"}]}
nlohmann::json report_to_json(const InferenceReport& r, const ExecutionPlan& p);

}  // namespace sq8::engine
