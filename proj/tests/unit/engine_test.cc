#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "harness.h"
#include "sq8/engine.h"
#include "sq8/errors.h"
#include "sq8/fixtures.h"
#include "sq8/oracle.h"

using namespace sq8;
using sq8::testing::options_for;
using sq8::testing::reveal;

namespace {

const PartyId P1(1), P3(3);

struct Run {
  std::array<size_t, 3> labels{};
  std::vector<std::vector<u128>> activations;  // opened, per layer
  std::array<engine::InferenceReport, 3> reports;
};

Run run_model(const Sq8Model& m, const Image& img, SessionOptions o) {
  const auto shares = deal_model(m, o.ring_bits, 5);
  const auto p = engine::plan(shares[0].structure, o);
  auto reps = run_parties(o, [&](PartySession& s) {
    return engine::infer_with_stats(s, shares[s.id().index()], p, s.id() == P1 ? &img : nullptr, P1);
  });
  Run r;
  const Ring ring(o.ring_bits);
  for (int i = 0; i < 3; ++i) r.labels[i] = reps[i].result.label;
  for (size_t l = 0; l < reps[0].result.activations.size(); ++l) {
    r.activations.push_back(reveal(ring, {reps[0].result.activations[l], reps[1].result.activations[l],
                                          reps[2].result.activations[l]}));
  }
  r.reports = std::move(reps);
  return r;
}

SessionOptions exact(int k = 72) {
  auto o = options_for(k);
  o.trunc_mode = TruncMode::exact;
  return o;
}

Sq8Model single_conv(uint32_t filter, uint32_t out_channels, uint32_t hw = 8) {
  fixtures::ModelBuilder b({hw, hw, 2}, {0.02, 128});
  const size_t nw = size_t{out_channels} * filter * filter * 2;
  std::vector<uint8_t> w(nw);
  for (size_t i = 0; i < nw; ++i) w[i] = static_cast<uint8_t>(37 * i + 11);
  const uint32_t t = b.conv(b.input(), {out_channels, filter, filter, 2}, w, {0.01, 128},
                            std::vector<int32_t>(out_channels, 7), {0.05, 60}, 1, Padding::same, 0, 255);
  b.argmax(t);
  return b.build();
}

}  // namespace

TEST(Plan, PointwiseConvIsMatrixOfDots) {
  const auto m = single_conv(1, 3);
  const auto p = engine::plan(public_structure(m), exact());
  const auto& lp = p.layers[0];
  EXPECT_EQ(lp.outputs, 8u * 8u * 3u);
  EXPECT_EQ(lp.window, 2u);
  for (size_t r = 0; r < lp.rows.rows(); ++r) EXPECT_EQ(lp.rows.row_start[r + 1] - lp.rows.row_start[r], 2u);
}

TEST(Plan, DepthwiseWindowsStayInOneChannel) {
  fixtures::RandomModelOptions o;
  o.depthwise = true;
  const auto m = fixtures::random_model(3, o);
  const auto p = engine::plan(public_structure(m), exact());
  const auto& lp = p.layers[1];
  ASSERT_EQ(lp.kind, LayerKind::depthwise_conv_2d);
  EXPECT_EQ(lp.window, 9u);
  const uint32_t C = o.conv1_channels;
  for (size_t r = 0; r < lp.rows.rows(); ++r) {
    const uint32_t ch = lp.rows.bias[r];
    EXPECT_LE(lp.rows.row_start[r + 1] - lp.rows.row_start[r], 9u);
    for (uint32_t j = lp.rows.row_start[r]; j < lp.rows.row_start[r + 1]; ++j) {
      EXPECT_EQ(lp.rows.act[j] % C, ch);
      EXPECT_EQ(lp.rows.weight[j] % C, ch);
    }
  }
}

TEST(Plan, SamePaddingShortensBorderRows) {
  const auto m = single_conv(3, 1, 4);
  const auto p = engine::plan(public_structure(m), exact());
  const auto& rows = p.layers[0].rows;
  EXPECT_EQ(rows.row_start[1] - rows.row_start[0], 4u * 2u);   // corner
  EXPECT_EQ(rows.row_start[2] - rows.row_start[1], 6u * 2u);   // edge
  EXPECT_EQ(rows.row_start[6] - rows.row_start[5], 9u * 2u);   // interior (1,1)
}

TEST(Plan, TruncationBatches) {
  fixtures::ModelBuilder b({1, 1, 8}, {0.02, 3});
  uint32_t t = b.fully_connected(b.input(), std::vector<uint8_t>(40, 9), {0.01, 2},
                                 std::vector<int32_t>(5, 0), {0.05, 60}, 0, 255);
  t = b.fully_connected(t, std::vector<uint8_t>(15, 9), {0.01, 2}, std::vector<int32_t>(3, 0),
                        {0.05, 60}, 0, 255);
  b.argmax(t);
  const auto p = engine::plan(public_structure(b.build()), exact());
  EXPECT_EQ(p.trunc_batches(), 2u);
  EXPECT_EQ(engine::plan(public_structure(fixtures::random_model(1)), exact()).trunc_batches(), 3u);
}

TEST(Plan, HeadroomFailsBeforeCommunication) {
  const auto m = fixtures::random_model(1);
  EXPECT_THROW(engine::plan(public_structure(m), exact(static_cast<int>(m.header.ring_bits_required) - 1)),
               HeadroomError);
}

TEST(Plan, RejectsUnfusedRelu6) {
  auto m = public_structure(fixtures::random_model(1));
  m.layers[2].kind = LayerKind::relu6;
  EXPECT_THROW(engine::plan(m, exact()), TopologyError);
}

TEST(Infer, ExactMatchesOracleAtEveryLayer) {
  for (int variant = 0; variant < 2; ++variant) {
    fixtures::RandomModelOptions o;
    o.depthwise = o.avg_pool = variant == 1;
    const auto m = fixtures::random_model(11 + variant, o);
    for (uint64_t seed = 1; seed <= 2; ++seed) {
      const auto img = fixtures::random_image(m, seed);
      const auto ref = oracle::reference_infer(m, img);
      const auto run = run_model(m, img, exact());
      for (int p = 0; p < 3; ++p) EXPECT_EQ(run.labels[p], ref.label);
      ASSERT_EQ(run.activations.size(), ref.activations.size());
      for (size_t l = 0; l + 1 < ref.activations.size(); ++l) {
        std::vector<uint8_t> got;
        for (u128 v : run.activations[l]) got.push_back(static_cast<uint8_t>(v));
        EXPECT_EQ(got, ref.activations[l]) << "variant " << variant << " layer " << l;
        for (u128 v : run.activations[l]) EXPECT_LE(v, 255u);
      }
    }
  }
}

TEST(Infer, IdentityConvOnConstantImage) {
  // w - z2 = 1 on a 1x1 kernel, m = 0.5: out = z3 + round((v - z1) / 2).
  fixtures::ModelBuilder b({4, 4, 1}, {1.0, 1});
  const uint32_t t = b.conv(b.input(), {1, 1, 1, 1}, {201}, {0.5, 200}, {0}, {1.0, 20}, 1,
                            Padding::valid, 0, 255);
  b.argmax(t);
  const auto m = b.build();
  const Image img{{4, 4, 1}, std::vector<uint8_t>(16, 101)};
  const auto run = run_model(m, img, exact());
  for (u128 v : run.activations[0]) EXPECT_EQ(v, 70u);
  for (auto l : run.labels) EXPECT_EQ(l, 0u);
}

TEST(Infer, ProbabilisticLabelAgreement) {
  const auto m = fixtures::random_model(1);
  const auto img = fixtures::random_image(m, 1);
  const auto want = oracle::reference_infer(m, img).label;
  const auto shares = deal_model(m, 72, 5);
  int agree = 0;
  const int runs = 100;
  for (int r = 0; r < runs; ++r) {
    auto o = options_for(72, 1000 + r);
    o.trunc_mode = TruncMode::probabilistic;
    const auto p = engine::plan(shares[0].structure, o);
    auto labels = run_parties(o, [&](PartySession& s) {
      const auto in = engine::share_input(s, p, s.id() == P1 ? &img : nullptr, P1);
      return engine::infer(s, shares[s.id().index()], p, in).label;
    });
    EXPECT_EQ(labels[0], labels[1]);
    EXPECT_EQ(labels[1], labels[2]);
    agree += labels[0] == want;
  }
  EXPECT_GE(agree, 95);
}

TEST(Infer, DeterministicTranscripts) {
  const auto m = fixtures::random_model(2);
  const auto img = fixtures::random_image(m, 2);
  const auto shares = deal_model(m, 72, 5);
  auto once = [&] {
    const auto o = exact();
    const auto p = engine::plan(shares[0].structure, o);
    return run_parties(o, [&](PartySession& s) {
      const auto in = engine::share_input(s, p, s.id() == P1 ? &img : nullptr, P1);
      engine::infer(s, shares[s.id().index()], p, in);
      return s.net().transcript_digest();
    });
  };
  EXPECT_EQ(once(), once());
}

TEST(Infer, RoundsWithinPlanEstimate) {
  for (auto mode : {TruncMode::exact, TruncMode::probabilistic}) {
    for (auto proto : {ProbProtocol::three_party, ProbProtocol::black_box}) {
      auto o = options_for(72);
      o.trunc_mode = mode;
      o.prob_protocol = proto;
      o.dabit_batch = 64;  // force refills
      const auto m = fixtures::random_model(4);
      const auto run = run_model(m, fixtures::random_image(m, 1), o);
      const auto p = engine::plan(public_structure(m), o);
      EXPECT_LE(run.reports[0].total.rounds, static_cast<uint64_t>(p.estimated_rounds()));
      for (size_t l = 0; l < p.layers.size(); ++l) {
        EXPECT_LE(run.reports[0].layers[l].comm.rounds, static_cast<uint64_t>(p.layers[l].estimated_rounds))
            << l;
      }
    }
  }
}

TEST(Stats, ConvBytesIndependentOfKernelSize) {
  const auto small = run_model(single_conv(1, 4), Image{{8, 8, 2}, std::vector<uint8_t>(128, 3)}, exact());
  const auto large = run_model(single_conv(3, 4), Image{{8, 8, 2}, std::vector<uint8_t>(128, 3)}, exact());
  for (int p = 0; p < 3; ++p) {
    EXPECT_EQ(small.reports[p].layers[0].comm.bytes_sent(), large.reports[p].layers[0].comm.bytes_sent());
  }
}

TEST(Stats, BytesLinearInOutputs) {
  std::vector<double> per_output;
  for (uint32_t channels : {1u, 2u, 4u}) {
    auto o = exact();
    o.dabit_batch = 1;
    const auto run = run_model(single_conv(3, channels), Image{{8, 8, 2}, std::vector<uint8_t>(128, 9)}, o);
    const auto& l = run.reports[0].layers[0];
    per_output.push_back(static_cast<double>(l.comm.bytes_sent()) / l.outputs);
  }
  EXPECT_NEAR(per_output[1], per_output[0], 0.01 * per_output[0]);
  EXPECT_NEAR(per_output[2], per_output[0], 0.01 * per_output[0]);
}

TEST(Stats, ReportJson) {
  const auto m = fixtures::random_model(1);
  const auto run = run_model(m, fixtures::random_image(m, 1), exact());
  const auto p = engine::plan(public_structure(m), exact());
  const auto j = engine::report_to_json(run.reports[1], p);
  for (const char* key : {"party", "label", "ring_bits", "trunc_mode", "prob_protocol", "wall_ms",
                          "estimated_rounds", "total", "layers"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["party"], 2);
  EXPECT_EQ(j["layers"].size(), m.layers.size());
  for (const auto& l : j["layers"]) {
    for (const char* key : {"index", "kind", "outputs", "bytes_sent", "bytes_received", "frames",
                            "rounds", "estimated_rounds", "wall_ms"}) {
      EXPECT_TRUE(l.contains(key)) << key;
    }
  }
  uint64_t sum = 0;
  for (const auto& l : j["layers"]) sum += l["bytes_sent"].get<uint64_t>();
  EXPECT_LE(sum, j["total"]["bytes_sent"].get<uint64_t>());
}

TEST(Infer, PeerFailureCarriesLayerContext) {
  const auto m = fixtures::random_model(1);
  const auto img = fixtures::random_image(m, 1);
  const auto shares = deal_model(m, 72, 5);
  const auto o = exact();
  const auto p = engine::plan(shares[0].structure, o);
  std::array<std::string, 3> seen;
  EXPECT_THROW(run_parties(o,
                           [&](PartySession& s) {
                             const auto in = engine::share_input(s, p, s.id() == P1 ? &img : nullptr, P1);
                             if (s.id() == P3) throw std::runtime_error("P3 stops");
                             try {
                               engine::infer(s, shares[s.id().index()], p, in);
                             } catch (const TransportError& e) {
                               seen[s.id().index()] = e.what();
                               throw;
                             }
                           }),
               std::runtime_error);
  // Whoever notices first blames P3; the other may see its own neighbour go.
  for (int i = 0; i < 2; ++i) EXPECT_NE(seen[i].find("layer 0"), std::string::npos) << seen[i];
  EXPECT_TRUE(seen[0].find("peer 3") != std::string::npos || seen[1].find("peer 3") != std::string::npos);
}
