#include "net_config.h"

#include <fstream>

#include <CLI11.hpp>

#include "sq8/errors.h"

namespace sq8::cli {

namespace {

template <class T>
T number(const CLI::ConfigItem& item) {
  T v{};
  if (item.inputs.size() != 1 || !CLI::detail::lexical_cast(item.inputs[0], v)) {
    throw ConfigError("config key '" + item.fullname() + "' expects a number");
  }
  return v;
}

std::string text(const CLI::ConfigItem& item) {
  if (item.inputs.size() != 1) throw ConfigError("config key '" + item.fullname() + "' expects one value");
  return item.inputs[0];
}

}  // namespace

TruncMode parse_mode(const std::string& t) {
  if (t == "exact") return TruncMode::exact;
  if (t == "prob" || t == "probabilistic") return TruncMode::probabilistic;
  throw ConfigError("unknown mode '" + t + "' (expected prob or exact)");
}

ProbProtocol parse_protocol(const std::string& t) {
  if (t == "three_party" || t == "prsp") return ProbProtocol::three_party;
  if (t == "black_box" || t == "pr") return ProbProtocol::black_box;
  throw ConfigError("unknown protocol '" + t + "' (expected three_party or black_box)");
}

const char* to_string(TruncMode m) { return m == TruncMode::exact ? "exact" : "prob"; }

const char* to_string(ProbProtocol p) {
  return p == ProbProtocol::three_party ? "three_party" : "black_box";
}

NetConfig parse_net_config(std::istream& in) {
  NetConfig c;
  std::array<bool, 3> seen{};
  for (const auto& item : CLI::ConfigTOML().from_config(in)) {
    const std::string key = item.fullname();
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (key == "k") {
      c.ring_bits = number<int>(item);
    } else if (key == "mode") {
      c.mode = parse_mode(text(item));
    } else if (key == "protocol") {
      c.protocol = parse_protocol(text(item));
    } else if (key == "dabit_batch") {
      c.dabit_batch = number<size_t>(item);
    } else if (key == "connect_timeout_ms") {
      c.connect_timeout_ms = number<int>(item);
    } else if (key == "seed") {
      c.seed = number<uint64_t>(item);
    } else if (key == "parties.p1" || key == "parties.p2" || key == "parties.p3") {
      const int i = key.back() - '1';
      c.parties[i] = Endpoint::parse(text(item));
      seen[i] = true;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (!seen[i]) throw ConfigError("config is missing parties.p" + std::to_string(i + 1));
  }
  return c;
}

NetConfig load_net_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_net_config(in);
}

}  // namespace sq8::cli
