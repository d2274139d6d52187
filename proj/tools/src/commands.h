#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sq8/local_run.h"
#include "sq8/session.h"

namespace sq8::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitMismatch = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTransport = 3;

// Randomness source shared by the commands that deal or run sessions: fresh
// unless a seed is given, which requires the insecure flag.
struct SeedOptions {
  bool insecure_deterministic = false;
  std::optional<uint64_t> seed;

  std::optional<uint64_t> checked() const;
};

std::string share_file_name(int party);

struct ShareModelArgs {
  std::string model, out_dir;
  int ring_bits = kDefaultRingBits;
  SeedOptions seed;
};
int share_model(const ShareModelArgs& a);

struct RunPartyArgs {
  int id = 1;
  std::string config, shares, input;
  std::optional<std::string> mode;
  SeedOptions seed;  // the seed itself comes from the config file
};
int run_party(const RunPartyArgs& a);

struct RunLocalArgs {
  std::string model, input;
  std::string mode = "prob";
  std::string protocol = "three_party";
  std::string backend = "inproc";
  int ring_bits = kDefaultRingBits;
  size_t dabit_batch = 1024;
  bool stats = false;
  SeedOptions seed;
};
int run_local(const RunLocalArgs& a);

struct VerifyArgs {
  std::string model, input;
  int ring_bits = kDefaultRingBits;
  SeedOptions seed;
};
int verify(const VerifyArgs& a);

struct FixtureArgs {
  uint64_t seed = 1;
  int images = 3;
  bool depthwise = false, avg_pool = false;
  std::string out_dir, golden_dir;
};
int fixture(const FixtureArgs& a);

int inspect(const std::string& model);

// Sum-of-products microbenchmark: `count` dot products of length `length`.
struct SopsRow {
  size_t count = 0, length = 0;
  int ring_bits = 0;
  uint64_t bytes_per_party = 0;  // largest payload sent by any party
  uint64_t rounds = 0;
  double wall_ms = 0;
};
SopsRow measure_sops(size_t count, size_t length, int ring_bits, Backend backend = Backend::in_process);

enum class TruncProto { pr, prsp, exact };
TruncProto parse_trunc_proto(const std::string& text);
const char* to_string(TruncProto p);

struct TruncRow {
  TruncProto proto = TruncProto::pr;
  int ring_bits = 0, shift = 0;
  size_t count = 0;
  std::array<uint64_t, 3> bytes{};  // payload sent per party
  uint64_t rounds = 0;
  double wall_ms = 0;

  uint64_t total() const { return bytes[0] + bytes[1] + bytes[2]; }
};
TruncRow measure_trunc(TruncProto proto, int ring_bits, size_t count, int shift,
                       Backend backend = Backend::in_process);

struct BenchSopsArgs {
  size_t count = 1000;
  std::vector<size_t> lengths{256, 1024};
  int ring_bits = kDefaultRingBits;
};
int bench_sops(const BenchSopsArgs& a);

struct BenchTruncArgs {
  std::vector<std::string> protos{"pr", "prsp", "exact"};
  std::vector<int> ring_bits{16, 32, 64};
  size_t count = 1000;
  int shift = 8;
};
int bench_trunc(const BenchTruncArgs& a);

// {"error", "message", "exit_code"[, "peer"]} for the exception in flight.
nlohmann::json describe_current_exception(int& exit_code);

}  // namespace sq8::cli
