#include <benchmark/benchmark.h>

#include "commands.h"
#include "sq8/engine.h"
#include "sq8/fixtures.h"
#include "sq8/local_run.h"

using namespace sq8;

namespace {

// Each iteration runs three parties in-process. Counters carry payload bytes
// and rounds.

void BM_DotBatch(benchmark::State& st) {
  const size_t count = st.range(0), length = st.range(1);
  cli::SopsRow row;
  for (auto _ : st) row = cli::measure_sops(count, length, 72);
  st.counters["bytes_per_party"] = static_cast<double>(row.bytes_per_party);
  st.counters["rounds"] = static_cast<double>(row.rounds);
}
BENCHMARK(BM_DotBatch)->ArgsProduct({{1000}, {256, 1024, 4096}})->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_Trunc(benchmark::State& st) {
  const auto proto = static_cast<cli::TruncProto>(st.range(0));
  const int k = static_cast<int>(st.range(1));
  cli::TruncRow row;
  for (auto _ : st) row = cli::measure_trunc(proto, k, 1000, 8);
  st.SetLabel(cli::to_string(proto));
  st.counters["bytes_total"] = static_cast<double>(row.total());
  st.counters["rounds"] = static_cast<double>(row.rounds);
}
BENCHMARK(BM_Trunc)
    ->ArgsProduct({{static_cast<int>(cli::TruncProto::pr), static_cast<int>(cli::TruncProto::prsp),
                    static_cast<int>(cli::TruncProto::exact)},
                   {16, 32, 64}})
    ->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_FixtureInference(benchmark::State& st) {
  const auto mode = st.range(0) ? TruncMode::exact : TruncMode::probabilistic;
  fixtures::RandomModelOptions o;
  o.depthwise = st.range(1) != 0;
  const auto model = fixtures::random_model(1, o);
  const auto img = fixtures::random_image(model, 1);
  const auto shares = deal_model(model, 72, 1);
  SessionOptions opts;
  opts.trunc_mode = mode;
  opts.deterministic_seed = 1;
  const auto p = engine::plan(shares[0].structure, opts);
  CommStats total;
  for (auto _ : st) {
    auto reps = run_parties(opts, [&](PartySession& s) {
      return engine::infer_with_stats(s, shares[s.id().index()], p, s.id() == PartyId(1) ? &img : nullptr,
                                      PartyId(1));
    });
    total = reps[0].total;
  }
  st.SetLabel(mode == TruncMode::exact ? "exact" : "prob");
  st.counters["bytes_p1"] = static_cast<double>(total.bytes_sent());
  st.counters["rounds"] = static_cast<double>(total.rounds);
}
BENCHMARK(BM_FixtureInference)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
