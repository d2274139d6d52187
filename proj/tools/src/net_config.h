#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>

#include "sq8/session.h"
#include "sq8/tcp_transport.h"

namespace sq8::cli {

// Network configuration for run-party, TOML key/value:
//
//   k = 72
//   mode = "exact"              # or "prob"
//   protocol = "three_party"    # or "black_box"
//   dabit_batch = 1024
//   connect_timeout_ms = 30000
//   seed = 7                    # only with --insecure-deterministic
//
//   [parties]
//   p1 = "127.0.0.1:7101"
//   p2 = "127.0.0.1:7102"
//   p3 = "127.0.0.1:7103"
struct NetConfig {
  std::array<Endpoint, 3> parties;
  std::optional<int> ring_bits;
  std::optional<TruncMode> mode;
  std::optional<ProbProtocol> protocol;
  std::optional<size_t> dabit_batch;
  std::optional<uint64_t> seed;
  int connect_timeout_ms = 30000;
};

NetConfig parse_net_config(std::istream& in);
NetConfig load_net_config(const std::string& path);

TruncMode parse_mode(const std::string& text);
ProbProtocol parse_protocol(const std::string& text);
const char* to_string(TruncMode mode);
const char* to_string(ProbProtocol protocol);

}  // namespace sq8::cli
