#include "commands.h"

#include <chrono>
#include <exception>
#include <filesystem>
#include <iostream>
#include <random>

#include <fmt/format.h>

#include "net_config.h"
#include "sq8/arith_share.h"
#include "sq8/engine.h"
#include "sq8/errors.h"
#include "sq8/fixtures.h"
#include "sq8/model.h"
#include "sq8/oracle.h"
#include "sq8/tcp_transport.h"
#include "sq8/trunc.h"

namespace fs = std::filesystem;

namespace sq8::cli {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

SessionOptions session_options(int k, TruncMode mode, ProbProtocol protocol, size_t dabit_batch,
                               std::optional<uint64_t> seed) {
  SessionOptions o;
  o.ring_bits = k;
  o.trunc_mode = mode;
  o.prob_protocol = protocol;
  o.dabit_batch = dabit_batch;
  o.deterministic_seed = seed;
  return o;
}

Backend parse_backend(const std::string& t) {
  if (t == "inproc" || t == "in_process") return Backend::in_process;
  if (t == "tcp") return Backend::tcp_loopback;
  throw ConfigError("unknown backend '" + t + "' (expected inproc or tcp)");
}

std::string digest_hex(const PartyNet& net) {
  const auto d = net.transcript_digest();
  return hex(d);
}

nlohmann::json party_json(const engine::InferenceReport& r, const engine::ExecutionPlan& p,
                          const std::string& transcript) {
  auto j = engine::report_to_json(r, p);
  j["transcript"] = transcript;
  return j;
}

// Opens replicated sharings held by three in-process parties.
std::vector<u128> reconstruct(const Ring& ring, const std::array<const std::vector<RepShare>*, 3>& parts) {
  const size_t n = parts[0]->size();
  if (parts[1]->size() != n || parts[2]->size() != n) throw ConsistencyError("share count differs between parties");
  std::vector<u128> out(n);
  for (size_t i = 0; i < n; ++i) {
    for (int p = 0; p < 3; ++p) {
      if ((*parts[p])[i].second != (*parts[(p + 1) % 3])[i].first) {
        throw ConsistencyError(fmt::format("parties {} and {} disagree on element {}", p + 1, (p + 1) % 3 + 1, i));
      }
    }
    out[i] = ring.add(ring.add((*parts[0])[i].first, (*parts[1])[i].first), (*parts[2])[i].first);
  }
  return out;
}

}  // namespace

std::optional<uint64_t> SeedOptions::checked() const {
  if (seed && !insecure_deterministic) throw ConfigError("a PRG seed requires --insecure-deterministic");
  if (insecure_deterministic && !seed) throw ConfigError("--insecure-deterministic requires a seed");
  return seed;
}

std::string share_file_name(int party) { return fmt::format("p{}.sq8s", party); }

int share_model(const ShareModelArgs& a) {
  const auto seed = a.seed.checked();
  const auto model = load_file(a.model, a.ring_bits);
  const auto shares = deal_model(model, a.ring_bits, seed);
  fs::create_directories(a.out_dir);
  nlohmann::json files = nlohmann::json::array();
  for (int p = 0; p < 3; ++p) {
    const auto path = (fs::path(a.out_dir) / share_file_name(p + 1)).string();
    save_shares_file(shares[p], path);
    files.push_back(path);
  }
  std::cout << nlohmann::json{{"ring_bits", a.ring_bits}, {"parameters", parameter_count(model)},
                              {"files", files}}
                   .dump()
            << "\n";
  return kExitOk;
}

int run_party(const RunPartyArgs& a) {
  if (a.id < 1 || a.id > 3) throw ConfigError("--id must be 1, 2 or 3");
  const PartyId self(a.id);
  const auto cfg = load_net_config(a.config);
  SeedOptions seed = a.seed;
  seed.seed = cfg.seed;
  const auto prg_seed = seed.checked();

  const auto shares = load_shares_file((fs::path(a.shares) / share_file_name(a.id)).string());
  if (shares.party != a.id) {
    throw ConfigError(fmt::format("share file belongs to party {}, not {}", shares.party, a.id));
  }
  if (cfg.ring_bits && *cfg.ring_bits != shares.ring_bits) {
    throw ConfigError(fmt::format("config k={} but shares use k={}", *cfg.ring_bits, shares.ring_bits));
  }
  const TruncMode mode = a.mode ? parse_mode(*a.mode) : cfg.mode.value_or(TruncMode::probabilistic);
  const auto opts = session_options(shares.ring_bits, mode, cfg.protocol.value_or(ProbProtocol::three_party),
                                    cfg.dabit_batch.value_or(1024), prg_seed);
  const auto p = engine::plan(shares.structure, opts);

  std::optional<Image> image;
  if (self == PartyId(1)) {
    if (a.input.empty()) throw ConfigError("party 1 owns the input and needs --input");
    image = load_image_file(a.input);
  } else if (!a.input.empty()) {
    throw ConfigError("only party 1 may be given --input");
  }

  TcpOptions tcp;
  tcp.ring_bits = shares.ring_bits;
  tcp.connect_timeout = std::chrono::milliseconds(cfg.connect_timeout_ms);
  PartySession s(connect_tcp(self, cfg.parties, tcp), opts);
  const auto report = engine::infer_with_stats(s, shares, p, image ? &*image : nullptr, PartyId(1));
  const auto transcript = digest_hex(s.net());
  s.net().close();
  std::cout << party_json(report, p, transcript).dump() << "\n";
  return kExitOk;
}

int run_local(const RunLocalArgs& a) {
  const auto seed = a.seed.checked();
  const auto opts = session_options(a.ring_bits, parse_mode(a.mode), parse_protocol(a.protocol), a.dabit_batch, seed);
  const Backend backend = parse_backend(a.backend);
  const auto model = load_file(a.model, a.ring_bits);
  const auto img = load_image_file(a.input);
  const auto shares = deal_model(model, a.ring_bits, seed);
  const auto p = engine::plan(shares[0].structure, opts);

  auto out = run_parties(
      opts,
      [&](PartySession& s) {
        auto r = engine::infer_with_stats(s, shares[s.id().index()], p, s.id() == PartyId(1) ? &img : nullptr,
                                          PartyId(1));
        return std::pair{std::move(r), digest_hex(s.net())};
      },
      backend);
  const size_t label = out[0].first.result.label;
  for (const auto& o : out) {
    if (o.first.result.label != label) throw ConsistencyError("parties opened different labels");
  }
  nlohmann::json j{{"label", label}};
  if (a.stats) {
    j["parties"] = nlohmann::json::array();
    for (const auto& o : out) j["parties"].push_back(party_json(o.first, p, o.second));
  }
  std::cout << j.dump() << "\n";
  return kExitOk;
}

int verify(const VerifyArgs& a) {
  const auto seed = a.seed.checked();
  const auto opts = session_options(a.ring_bits, TruncMode::exact, ProbProtocol::three_party, 1024, seed);
  const auto model = load_file(a.model, a.ring_bits);
  const auto img = load_image_file(a.input);
  const auto ref = oracle::reference_infer(model, img);
  const auto shares = deal_model(model, a.ring_bits, seed);
  const auto p = engine::plan(shares[0].structure, opts);
  auto res = run_parties(opts, [&](PartySession& s) {
    return engine::infer(s, shares[s.id().index()], p,
                         engine::share_input(s, p, s.id() == PartyId(1) ? &img : nullptr, PartyId(1)));
  });

  const Ring ring(a.ring_bits);
  bool identical = res[0].label == ref.label && res[1].label == ref.label && res[2].label == ref.label;
  nlohmann::json layers = nlohmann::json::array();
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const auto opened =
        reconstruct(ring, {&res[0].activations.at(l), &res[1].activations.at(l), &res[2].activations.at(l)});
    const auto& want = ref.activations.at(l);
    size_t mismatches = 0;
    if (opened.size() != want.size()) {
      mismatches = std::max(opened.size(), want.size());
    } else {
      for (size_t i = 0; i < want.size(); ++i) mismatches += opened[i] != u128{want[i]};
    }
    identical = identical && mismatches == 0;
    layers.push_back({{"index", l},
                      {"kind", to_string(model.layers[l].kind)},
                      {"elements", want.size()},
                      {"mismatches", mismatches}});
  }
  std::cout << nlohmann::json{{"identical", identical},
                              {"label", res[0].label},
                              {"oracle_label", ref.label},
                              {"layers", layers}}
                   .dump()
            << "\n";
  return identical ? kExitOk : kExitMismatch;
}

int fixture(const FixtureArgs& a) {
  if (a.out_dir.empty() && a.golden_dir.empty()) throw ConfigError("fixture needs --out-dir or --golden-dir");
  if (a.images < 0) throw ConfigError("--images must not be negative");
  fixtures::RandomModelOptions o;
  o.depthwise = a.depthwise;
  o.avg_pool = a.avg_pool;
  const auto model = fixtures::random_model(a.seed, o);
  nlohmann::json written = nlohmann::json::array();
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    const auto path = (fs::path(a.out_dir) / "model.sq8").string();
    save_file(model, path);
    written.push_back(path);
  }
  if (!a.golden_dir.empty()) fs::create_directories(a.golden_dir);
  nlohmann::json labels = nlohmann::json::array();
  for (int i = 1; i <= a.images; ++i) {
    const auto img = fixtures::random_image(model, static_cast<uint64_t>(i));
    if (!a.out_dir.empty()) {
      const auto path = (fs::path(a.out_dir) / fmt::format("image{}.sq8i", i)).string();
      save_image_file(img, path);
      written.push_back(path);
    }
    const auto ref = oracle::reference_infer(model, img);
    labels.push_back(ref.label);
    if (!a.golden_dir.empty()) {
      const auto dump = oracle::dump_golden(ref);
      const auto path = (fs::path(a.golden_dir) / (oracle::golden_name(dump) + ".bin")).string();
      write_file(path, dump);
      written.push_back(path);
    }
  }
  std::cout << nlohmann::json{{"labels", labels}, {"files", written}}.dump() << "\n";
  return kExitOk;
}

int inspect(const std::string& path) {
  std::cout << to_json(load_file(path)).dump(2) << "\n";
  return kExitOk;
}

SopsRow measure_sops(size_t count, size_t length, int k, Backend backend) {
  SopsRow row{count, length, k};
  const auto opts = session_options(k, TruncMode::probabilistic, ProbProtocol::three_party, 1024, 1);
  auto out = run_parties(
      opts,
      [&](PartySession& s) {
        const auto a = arith::random(s, count * length);
        const auto b = arith::random(s, count * length);
        const auto before = s.net().stats();
        const auto t0 = Clock::now();
        const auto c = arith::dot_batch(s, a, b, count, length);
        const double ms = ms_since(t0);
        return std::pair{s.net().stats() - before, ms};
      },
      backend);
  for (const auto& [st, ms] : out) {
    row.bytes_per_party = std::max(row.bytes_per_party, st.bytes_sent());
    row.rounds = std::max(row.rounds, st.rounds);
    row.wall_ms = std::max(row.wall_ms, ms);
  }
  return row;
}

TruncProto parse_trunc_proto(const std::string& t) {
  if (t == "pr") return TruncProto::pr;
  if (t == "prsp") return TruncProto::prsp;
  if (t == "exact") return TruncProto::exact;
  throw ConfigError("unknown truncation protocol '" + t + "' (expected pr, prsp or exact)");
}

const char* to_string(TruncProto p) {
  switch (p) {
    case TruncProto::pr:
      return "pr";
    case TruncProto::prsp:
      return "prsp";
    case TruncProto::exact:
      return "exact";
  }
  return "?";
}

TruncRow measure_trunc(TruncProto proto, int k, size_t count, int shift, Backend backend) {
  if (shift <= 0 || shift >= k - 2) throw ConfigError(fmt::format("shift {} does not fit k={}", shift, k));
  TruncRow row{proto, k, shift, count};
  // Exact truncation spends daBits; one refill covers the whole batch.
  const auto opts = session_options(k, TruncMode::probabilistic, ProbProtocol::three_party, count * k, 1);
  const Ring ring(k);
  std::vector<u128> values(count);
  std::mt19937_64 gen(k);
  for (auto& v : values) v = ring.reduce(gen()) >> 3;  // msb clear
  auto out = run_parties(
      opts,
      [&](PartySession& s) {
        const auto x = arith::input(s, PartyId(1), values, count);
        const auto before = s.net().stats();
        const auto t0 = Clock::now();
        switch (proto) {
          case TruncProto::pr:
            trunc::trunc_pr(s, x, shift);
            break;
          case TruncProto::prsp:
            trunc::trunc_pr_sp(s, x, shift);
            break;
          case TruncProto::exact:
            trunc::trunc_exact(s, x, shift);
            break;
        }
        const double ms = ms_since(t0);
        return std::pair{s.net().stats() - before, ms};
      },
      backend);
  for (int p = 0; p < 3; ++p) {
    row.bytes[p] = out[p].first.bytes_sent();
    row.rounds = std::max(row.rounds, out[p].first.rounds);
    row.wall_ms = std::max(row.wall_ms, out[p].second);
  }
  return row;
}

int bench_sops(const BenchSopsArgs& a) {
  std::cout << "count,length,k,bytes_per_party,rounds,wall_ms\n";
  for (size_t len : a.lengths) {
    const auto r = measure_sops(a.count, len, a.ring_bits);
    std::cout << fmt::format("{},{},{},{},{},{:.3f}\n", r.count, r.length, r.ring_bits, r.bytes_per_party, r.rounds,
                             r.wall_ms);
  }
  return kExitOk;
}

int bench_trunc(const BenchTruncArgs& a) {
  std::vector<TruncProto> protos;
  for (const auto& p : a.protos) protos.push_back(parse_trunc_proto(p));
  std::cout << "proto,k,count,shift,bytes_p1,bytes_p2,bytes_p3,bytes_total,rounds,wall_ms\n";
  for (auto proto : protos) {
    for (int k : a.ring_bits) {
      const auto r = measure_trunc(proto, k, a.count, a.shift);
      std::cout << fmt::format("{},{},{},{},{},{},{},{},{},{:.3f}\n", to_string(r.proto), r.ring_bits, r.count,
                               r.shift, r.bytes[0], r.bytes[1], r.bytes[2], r.total(), r.rounds, r.wall_ms);
    }
  }
  return kExitOk;
}

nlohmann::json describe_current_exception(int& code) {
  nlohmann::json j;
  try {
    throw;
  } catch (const TransportError& e) {
    code = kExitTransport;
    j = {{"error", dynamic_cast<const FramingError*>(&e) ? "framing" : "transport"},
         {"message", e.what()},
         {"peer", e.peer()}};
  } catch (const ConsistencyError& e) {
    code = kExitMismatch;
    j = {{"error", "consistency"}, {"message", e.what()}};
  } catch (const HeadroomError& e) {
    code = kExitConfig;
    j = {{"error", "headroom"}, {"message", e.what()}};
  } catch (const ModelFormatError& e) {
    code = kExitConfig;
    j = {{"error", "model_format"}, {"message", e.what()}};
  } catch (const TopologyError& e) {
    code = kExitConfig;
    j = {{"error", "topology"}, {"message", e.what()}};
  } catch (const BiasScaleError& e) {
    code = kExitConfig;
    j = {{"error", "bias_scale"}, {"message", e.what()}};
  } catch (const UnsupportedMultiplierError& e) {
    code = kExitConfig;
    j = {{"error", "unsupported_multiplier"}, {"message", e.what()}};
  } catch (const ConfigError& e) {
    code = kExitConfig;
    j = {{"error", "config"}, {"message", e.what()}};
  } catch (const ShapeError& e) {
    code = kExitConfig;
    j = {{"error", "shape"}, {"message", e.what()}};
  } catch (const std::exception& e) {
    code = kExitConfig;
    j = {{"error", "internal"}, {"message", e.what()}};
  }
  j["exit_code"] = code;
  return j;
}

}  // namespace sq8::cli
