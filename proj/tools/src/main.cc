#include <iostream>

#include <CLI11.hpp>

#include "commands.h"

using namespace sq8::cli;

namespace {

void add_seed_flags(CLI::App* cmd, SeedOptions& s, bool with_seed = true) {
  cmd->add_flag("--insecure-deterministic", s.insecure_deterministic,
                "Derive all randomness from a fixed seed (testing only; not secure)");
  if (with_seed) cmd->add_option("--seed", s.seed, "PRG seed, accepted only with --insecure-deterministic");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sq8: three-party secure inference for 8-bit quantized CNNs"};
  app.require_subcommand(1);

  ShareModelArgs share;
  auto* share_cmd = app.add_subcommand("share-model", "Split a model into three party share files");
  share_cmd->add_option("--model", share.model, "SQ8 model")->required();
  share_cmd->add_option("--out-dir", share.out_dir, "Directory for p1.sq8s, p2.sq8s, p3.sq8s")->required();
  share_cmd->add_option("--k", share.ring_bits, "Ring width in bits")->capture_default_str();
  add_seed_flags(share_cmd, share.seed);

  RunPartyArgs party;
  auto* party_cmd = app.add_subcommand("run-party", "Run one party over TCP");
  party_cmd->add_option("--id", party.id, "Party id (1, 2 or 3)")->required();
  party_cmd->add_option("--config", party.config, "Network config (TOML)")->required();
  party_cmd->add_option("--shares", party.shares, "Directory with this party's share file")->required();
  party_cmd->add_option("--input", party.input, "SQ8I image (party 1 only)");
  party_cmd->add_option("--mode", party.mode, "prob or exact (overrides the config)");
  add_seed_flags(party_cmd, party.seed, false);

  RunLocalArgs local;
  auto* local_cmd = app.add_subcommand("run-local", "Run all three parties in this process");
  local_cmd->add_option("--model", local.model, "SQ8 model")->required();
  local_cmd->add_option("--input", local.input, "SQ8I image")->required();
  local_cmd->add_option("--mode", local.mode, "prob or exact")->capture_default_str();
  local_cmd->add_option("--protocol", local.protocol, "three_party or black_box")->capture_default_str();
  local_cmd->add_option("--backend", local.backend, "inproc or tcp (loopback)")->capture_default_str();
  local_cmd->add_option("--k", local.ring_bits, "Ring width in bits")->capture_default_str();
  local_cmd->add_option("--dabit-batch", local.dabit_batch, "daBits generated per refill")->capture_default_str();
  local_cmd->add_flag("--stats", local.stats, "Include per-party, per-layer statistics");
  add_seed_flags(local_cmd, local.seed);

  VerifyArgs ver;
  auto* verify_cmd = app.add_subcommand("verify", "Compare exact secure inference with the plaintext oracle");
  verify_cmd->add_option("--model", ver.model, "SQ8 model")->required();
  verify_cmd->add_option("--input", ver.input, "SQ8I image")->required();
  verify_cmd->add_option("--k", ver.ring_bits, "Ring width in bits")->capture_default_str();
  add_seed_flags(verify_cmd, ver.seed);

  auto* bench_cmd = app.add_subcommand("bench", "Communication microbenchmarks (CSV)");
  bench_cmd->require_subcommand(1);
  BenchSopsArgs sops;
  auto* sops_cmd = bench_cmd->add_subcommand("sops", "Batched dot products: bytes vs. length");
  sops_cmd->add_option("--count", sops.count, "Dot products per batch")->capture_default_str();
  sops_cmd->add_option("--length", sops.lengths, "Dot product lengths")->delimiter(',')->capture_default_str();
  sops_cmd->add_option("--k", sops.ring_bits, "Ring width in bits")->capture_default_str();
  BenchTruncArgs tr;
  auto* trunc_cmd = bench_cmd->add_subcommand("trunc", "Truncation protocols: bytes vs. k");
  trunc_cmd->add_option("--proto", tr.protos, "pr, prsp, exact")->delimiter(',')->capture_default_str();
  trunc_cmd->add_option("--k-list", tr.ring_bits, "Ring widths")->delimiter(',')->capture_default_str();
  trunc_cmd->add_option("--count", tr.count, "Values truncated per batch")->capture_default_str();
  trunc_cmd->add_option("--shift", tr.shift, "Bits truncated")->capture_default_str();

  FixtureArgs fix;
  auto* fixture_cmd = app.add_subcommand("fixture", "Write the synthetic test model, images and golden dumps");
  fixture_cmd->add_option("--seed", fix.seed, "Model seed")->capture_default_str();
  fixture_cmd->add_option("--images", fix.images, "Images (seeds 1..N)")->capture_default_str();
  fixture_cmd->add_flag("--depthwise", fix.depthwise, "Add a depthwise layer");
  fixture_cmd->add_flag("--avg-pool", fix.avg_pool, "Use average instead of max pooling");
  fixture_cmd->add_option("--out-dir", fix.out_dir, "Directory for model.sq8 and imageN.sq8i");
  fixture_cmd->add_option("--golden-dir", fix.golden_dir, "Directory for oracle golden dumps");

  std::string inspect_model;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print a model as JSON");
  inspect_cmd->add_option("--model", inspect_model, "SQ8 model")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}, {"exit_code", kExitConfig}}.dump()
              << "\n";
    return kExitConfig;
  }

  try {
    if (*share_cmd) return share_model(share);
    if (*party_cmd) return run_party(party);
    if (*local_cmd) return run_local(local);
    if (*verify_cmd) return verify(ver);
    if (*sops_cmd) return bench_sops(sops);
    if (*trunc_cmd) return bench_trunc(tr);
    if (*fixture_cmd) return fixture(fix);
    if (*inspect_cmd) return inspect(inspect_model);
  } catch (...) {
    int code = kExitConfig;
    std::cerr << describe_current_exception(code).dump() << "\n";
    return code;
  }
  return kExitConfig;
}
