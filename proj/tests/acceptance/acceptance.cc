// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "commands.h"
#include "harness.h"
#include "sq8/arith_share.h"
#include "sq8/bin_share.h"
#include "sq8/engine.h"
#include "sq8/fixtures.h"
#include "sq8/oracle.h"
#include "sq8/quantops.h"
#include "sq8/trunc.h"

using namespace sq8;
using sq8::testing::options_for;
using sq8::testing::reveal;

namespace {

const PartyId P1(1), P2(2), P3(3);

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

// Runs one criterion; `limit_s` is its wall-clock budget.
void criterion(const char* id, const char* name, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs > limit_s) {
    v.pass = false;
    v.detail += fmt::format("; over time budget {:.0f} s", limit_s);
  }
  failures += !v.pass;
  std::printf("%s %s %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), secs);
  std::fflush(stdout);
}

SessionOptions prob_options(int k, ProbProtocol p, uint64_t seed) {
  auto o = options_for(k, seed);
  o.trunc_mode = TruncMode::probabilistic;
  o.prob_protocol = p;
  return o;
}

std::vector<u128> trunc_copies(const SessionOptions& o, u128 x, int m, size_t count) {
  auto out = run_parties(o, [&](PartySession& s) {
    const std::vector<u128> v(count, x);
    return trunc::trunc(s, arith::input(s, P1, v, count), m, o.trunc_mode);
  });
  return reveal(Ring(o.ring_bits), out);
}

// Pearson chi-squared p-value of a 2x2 contingency table.
double two_sample_p(double up_a, double n_a, double up_b, double n_b) {
  const double total = n_a + n_b, ups = up_a + up_b, downs = total - ups;
  if (ups == 0 || downs == 0) return 1.0;
  const double obs[2][2] = {{up_a, n_a - up_a}, {up_b, n_b - up_b}};
  const double row[2] = {n_a, n_b}, col[2] = {ups, downs};
  double chi2 = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / total;
      chi2 += (obs[i][j] - e) * (obs[i][j] - e) / e;
    }
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(1), chi2));
}

Verdict trunc_bias() {
  constexpr size_t n = 10000;
  std::string detail;
  bool ok = true;
  for (auto p : {ProbProtocol::black_box, ProbProtocol::three_party}) {
    const auto got = trunc_copies(prob_options(72, p, 1), 7, 2, n);
    size_t twos = 0, out_of_range = 0;
    for (u128 g : got) {
      twos += g == 2;
      out_of_range += g != 1 && g != 2;
    }
    const double f = static_cast<double>(twos) / n;
    ok = ok && out_of_range == 0 && std::abs(f - 0.75) <= 0.02;
    detail += fmt::format("{}Pr[7>>2 = 2] = {:.4f} ({})", detail.empty() ? "" : ", ", f,
                          p == ProbProtocol::black_box ? "pr" : "prsp");
  }
  return {ok, detail + ", want 0.75 +- 0.02 over 10000"};
}

Verdict trunc_range_and_distribution() {
  constexpr int k = 32, m = 5;
  constexpr size_t n = 10000;
  const Ring r(k);
  // Range over random inputs with the top bit clear.
  std::mt19937_64 gen(21);
  std::vector<u128> xs(n);
  for (auto& x : xs) x = r.reduce(gen()) >> 1;
  size_t bad = 0;
  for (auto p : {ProbProtocol::black_box, ProbProtocol::three_party}) {
    const auto o = prob_options(k, p, 2);
    auto out = run_parties(o, [&](PartySession& s) {
      return trunc::trunc(s, arith::input(s, P2, xs, n), m, TruncMode::probabilistic);
    });
    const auto got = reveal(r, out);
    for (size_t i = 0; i < n; ++i) bad += got[i] != (xs[i] >> m) && got[i] != (xs[i] >> m) + 1;
  }
  // Distribution: same input through both protocols, 10000 draws each.
  double min_p = 1;
  for (u128 x : {u128{1000003}, u128{(1u << 20) + 77}, u128{7}}) {
    const auto a = trunc_copies(prob_options(k, ProbProtocol::black_box, 3), x, m, n);
    const auto b = trunc_copies(prob_options(k, ProbProtocol::three_party, 4), x, m, n);
    const auto ups = [&](const std::vector<u128>& v) {
      size_t c = 0;
      for (u128 g : v) {
        bad += g != (x >> m) && g != (x >> m) + 1;
        c += g == (x >> m) + 1;
      }
      return static_cast<double>(c);
    };
    min_p = std::min(min_p, two_sample_p(ups(a), n, ups(b), n));
  }
  return {bad == 0 && min_p > 0.01,
          fmt::format("{} outputs outside {{floor, floor+1}}; min two-sample p = {:.3f} (want > 0.01), k=32", bad,
                      min_p)};
}

Verdict prsp_algebra() {
  constexpr int runs = 1000;
  const Ring r(72);
  std::mt19937_64 gen(31);
  int violations = 0;
  for (int run = 0; run < runs; ++run) {
    const int m = 1 + static_cast<int>(gen() % 40);
    std::vector<u128> xs(4);
    for (auto& x : xs) x = gen() & ((u128{1} << 60) - 1);
    auto out = run_parties(prob_options(72, ProbProtocol::three_party, 1000 + run), [&](PartySession& s) {
      trunc::TruncPrSpTrace trace;
      auto y = trunc::trunc_pr_sp(s, arith::input(s, P3, xs, xs.size()), m, &trace);
      return std::make_pair(y, trace);
    });
    const auto& [y1, t1] = out[0];
    const auto& [y2, t2] = out[1];
    const auto opened = reveal(r, {out[0].first, out[1].first, out[2].first});
    for (size_t i = 0; i < xs.size(); ++i) {
      // y'_1 - y^_1 + y~_1 = y~_2 + y'_2 - y^_2, and the replicated output
      // reconstructs to y'_1 + y'_2.
      const u128 lhs = r.add(r.sub(t1.y_prime[i], t1.y_hat[i]), t1.y_tilde[i]);
      const u128 rhs = r.add(t2.y_tilde[i], r.sub(t2.y_prime[i], t2.y_hat[i]));
      const bool ok = lhs == rhs && y1[i].second == lhs && y2[i].first == rhs &&
                      r.add(t1.y_prime[i], t2.y_prime[i]) == opened[i] &&
                      (opened[i] == xs[i] >> m || opened[i] == (xs[i] >> m) + 1);
      violations += !ok;
    }
  }
  return {violations == 0, fmt::format("{} identity violations over {} runs", violations, runs)};
}

Verdict dot_law() {
  const auto a = cli::measure_sops(1000, 256, 72);
  const auto b = cli::measure_sops(1000, 1024, 72);
  return {a.bytes_per_party == b.bytes_per_party && a.bytes_per_party > 0,
          fmt::format("1000 dots: {} B/party at length 256, {} B/party at length 1024", a.bytes_per_party,
                      b.bytes_per_party)};
}

Verdict trunc_law() {
  std::array<uint64_t, 3> pr{}, prsp{};
  const std::array<int, 3> ks = {16, 32, 64};
  for (int i = 0; i < 3; ++i) {
    pr[i] = cli::measure_trunc(cli::TruncProto::pr, ks[i], 1000, 8).total();
    prsp[i] = cli::measure_trunc(cli::TruncProto::prsp, ks[i], 1000, 8).total();
  }
  const double sp_ratio = static_cast<double>(prsp[2]) / prsp[1];
  const double pr_ratio = static_cast<double>(pr[2]) / pr[1];
  return {sp_ratio >= 1.8 && sp_ratio <= 2.2 && pr_ratio >= 3.5,
          fmt::format("prsp bytes {}/{}/{} (64:32 = {:.2f}, want [1.8, 2.2]); pr bytes {}/{}/{} (64:32 = {:.2f}, "
                      "want >= 3.5)",
                      prsp[0], prsp[1], prsp[2], sp_ratio, pr[0], pr[1], pr[2], pr_ratio)};
}

Verdict exhaustive_k8() {
  constexpr int k = 8;
  constexpr size_t n = 256;
  const Ring r(k);
  const auto o = options_for(k, 41);
  std::vector<std::string> bad;

  // mul: all pairs.
  {
    std::vector<u128> a, b;
    for (size_t x = 0; x < n; ++x)
      for (size_t y = 0; y < n; ++y) {
        a.push_back(x);
        b.push_back(y);
      }
    auto out = run_parties(o, [&](PartySession& s) {
      return arith::mul(s, arith::input(s, P1, a, a.size()), arith::input(s, P2, b, b.size()));
    });
    const auto got = reveal(r, out);
    const auto want = oracle::mul_table(k);
    for (size_t i = 0; i < got.size(); ++i) {
      if (got[i] != want[i]) {
        bad.push_back("mul");
        break;
      }
    }
  }
  // msb: every value.
  {
    std::vector<u128> xs(n);
    for (size_t x = 0; x < n; ++x) xs[x] = x;
    auto out = run_parties(o, [&](PartySession& s) {
      return bin::open(s, bin::msb(s, arith::input(s, P3, xs, n)));
    });
    const auto want = oracle::msb_table(k);
    for (size_t x = 0; x < n; ++x) {
      if (out[0].get(x) != (want[x] != 0)) {
        bad.push_back("msb");
        break;
      }
    }
  }
  // less_than: every pair inside the comparison's domain |a - b| < 2^{k-1}.
  {
    std::vector<u128> a, b;
    std::vector<size_t> idx;
    for (size_t x = 0; x < n; ++x)
      for (size_t y = 0; y < n; ++y) {
        const auto d = r.to_signed(x) - r.to_signed(y);
        if (d >= 128 || d <= -128) continue;
        a.push_back(x);
        b.push_back(y);
        idx.push_back(x * n + y);
      }
    auto out = run_parties(o, [&](PartySession& s) {
      return bin::open(s, bin::less_than(s, arith::input(s, P1, a, a.size()), arith::input(s, P3, b, b.size())));
    });
    const auto want = oracle::less_than_table(k);
    for (size_t i = 0; i < idx.size(); ++i) {
      if (out[0].get(i) != (want[idx[i]] != 0)) {
        bad.push_back("less_than");
        break;
      }
    }
  }
  // clamp: every value for which x - lo and hi - x fit the comparison.
  for (auto [lo, hi] : {std::pair{0, 100}, {-20, 50}, {-64, 63}, {5, 5}, {0, 127}}) {
    std::vector<u128> xs;
    for (size_t x = 0; x < n; ++x) {
      const auto v = r.to_signed(x);
      if (v - lo >= 128 || v - lo < -128 || hi - v >= 128 || hi - v < -128) continue;
      xs.push_back(x);
    }
    auto out = run_parties(o, [&](PartySession& s) {
      return bin::clamp(s, arith::input(s, P2, xs, xs.size()), r.from_signed(lo), r.from_signed(hi));
    });
    const auto got = reveal(r, out);
    const auto want = oracle::clamp_table(k, lo, hi);
    for (size_t i = 0; i < xs.size(); ++i) {
      if (got[i] != want[xs[i]]) {
        bad.push_back(fmt::format("clamp[{},{}] at x={}", lo, hi, static_cast<int>(r.to_signed(xs[i]))));
        break;
      }
    }
  }
  // trunc_exact: every value with the top bit clear, every valid shift.
  {
    std::vector<u128> xs(n / 2);
    for (size_t x = 0; x < xs.size(); ++x) xs[x] = x;
    for (int m = 1; m < k - 1; ++m) {
      auto out = run_parties(options_for(k, 50 + m), [&](PartySession& s) {
        return trunc::trunc_exact(s, arith::input(s, P1, xs, xs.size()), m);
      });
      const auto got = reveal(r, out);
      const auto want = oracle::floor_div_table(k, m);
      for (size_t x = 0; x < xs.size(); ++x) {
        if (got[x] != want[x]) {
          bad.push_back(fmt::format("trunc_exact m={}", m));
          break;
        }
      }
    }
  }
  std::string detail = "mul 65536 pairs, msb 256, less_than in-domain pairs, clamp 5 ranges, trunc_exact m=1..6";
  if (!bad.empty()) detail += "; mismatches in " + fmt::format("{}", fmt::join(bad, ", "));
  return {bad.empty(), detail};
}

Verdict end_to_end() {
  constexpr int images = 20;
  const auto model = fixtures::random_model(1);
  auto o = options_for(72, 61);
  o.trunc_mode = TruncMode::exact;
  const auto shares = deal_model(model, 72, 62);
  const auto p = engine::plan(shares[0].structure, o);
  const Ring r(72);
  int layer_mismatches = 0, label_mismatches = 0;
  size_t bytes_compared = 0;
  for (int i = 1; i <= images; ++i) {
    const auto img = fixtures::random_image(model, static_cast<uint64_t>(i));
    const auto ref = oracle::reference_infer(model, img);
    auto res = run_parties(o, [&](PartySession& s) {
      return engine::infer(s, shares[s.id().index()], p,
                           engine::share_input(s, p, s.id() == P1 ? &img : nullptr, P1));
    });
    for (size_t l = 0; l < model.layers.size(); ++l) {
      const auto opened = reveal(r, {res[0].activations[l], res[1].activations[l], res[2].activations[l]});
      std::vector<uint8_t> bytes;
      bool in_range = true;
      for (u128 v : opened) {
        in_range = in_range && v <= 255;
        bytes.push_back(static_cast<uint8_t>(v));
      }
      layer_mismatches += !in_range || bytes != ref.activations[l];
      bytes_compared += bytes.size();
    }
    label_mismatches += res[0].label != ref.label || res[1].label != ref.label || res[2].label != ref.label;
  }
  return {layer_mismatches == 0 && label_mismatches == 0,
          fmt::format("{} inputs, {} activation bytes compared, {} layer mismatches, {} label disagreements", images,
                      bytes_compared, layer_mismatches, label_mismatches)};
}

Verdict backend_equivalence() {
  const auto model = fixtures::random_model(1);
  const auto img = fixtures::random_image(model, 2);
  const auto shares = deal_model(model, 72, 71);
  std::string detail;
  bool ok = true;
  for (auto mode : {TruncMode::exact, TruncMode::probabilistic}) {
    auto o = options_for(72, 72);
    o.trunc_mode = mode;
    const auto p = engine::plan(shares[0].structure, o);
    const auto run = [&](Backend b) {
      return run_parties(
          o,
          [&](PartySession& s) {
            const auto rep = engine::infer_with_stats(s, shares[s.id().index()], p, s.id() == P1 ? &img : nullptr, P1);
            return std::make_pair(rep.result.label, s.net().transcript_digest());
          },
          b);
    };
    const auto a = run(Backend::in_process), b = run(Backend::tcp_loopback);
    int same = 0;
    for (int i = 0; i < 3; ++i) same += a[i] == b[i];
    ok = ok && same == 3;
    detail += fmt::format("{}{}: {}/3 party transcripts identical", detail.empty() ? "" : ", ",
                          mode == TruncMode::exact ? "exact" : "prob", same);
  }
  return {ok, detail};
}

Verdict probabilistic_bound() {
  constexpr int batches = 10, per_batch = 1000;
  const Ring r(72);
  std::mt19937_64 gen(81);
  std::uniform_real_distribution<double> mdist(1e-5, 0.9);
  std::uniform_int_distribution<int64_t> sdist(-(int64_t{1} << 22), int64_t{1} << 22);
  int64_t worst = 0;
  size_t clamp_errors = 0, samples = 0;
  for (int b = 0; b < batches; ++b) {
    const auto fm = quant::normalize_multiplier(mdist(gen));
    const int bound = std::max(31, fm.shift);
    const int z3 = static_cast<int>(gen() % 256);
    std::vector<int64_t> acc(per_batch);
    std::vector<u128> ring_acc;
    for (auto& v : acc) {
      v = sdist(gen);
      ring_acc.push_back(r.from_signed(v));
    }
    const auto proto = b % 2 ? ProbProtocol::black_box : ProbProtocol::three_party;
    std::array<std::vector<RepShare>, 3> pre;
    auto out = run_parties(prob_options(72, proto, 90 + b), [&](PartySession& s) {
      const auto a = arith::input(s, P1, ring_acc, acc.size());
      const std::vector<u128> secrets = {static_cast<u128>(fm.m_prime), r.pow2(bound - fm.shift),
                                         static_cast<u128>(z3)};
      const auto sec = arith::input(s, P2, secrets, 3);
      std::vector<RepShare> pc;
      auto o = quant::quantized_output_stage(s, a, {sec[0], sec[1], bound}, sec[2], 0, 255,
                                             TruncMode::probabilistic, &pc);
      pre[s.id().index()] = std::move(pc);
      return o;
    });
    const auto got = reveal(r, out), got_pre = reveal(r, pre);
    for (int i = 0; i < per_batch; ++i) {
      const int64_t want = oracle::requantize(acc[i], fm, z3, INT32_MIN, INT32_MAX);
      const int64_t p = static_cast<int64_t>(r.to_signed(got_pre[i]));
      worst = std::max(worst, std::abs(p - want));
      clamp_errors += static_cast<int64_t>(got[i]) != std::clamp<int64_t>(p, 0, 255);
      ++samples;
    }
  }
  return {worst <= 1 && clamp_errors == 0,
          fmt::format("{} stages, max |pre-clamp - exact| = {} (want <= 1), {} clamp errors", samples, worst,
                      clamp_errors)};
}

}  // namespace

int main() {
  criterion("A1", "trunc_pr_bias", 60, trunc_bias);
  criterion("A2", "trunc_range_and_distribution", 120, trunc_range_and_distribution);
  criterion("A3", "trunc_pr_sp_algebra", 120, prsp_algebra);
  criterion("A4", "dot_traffic_constant_in_length", 10, dot_law);
  criterion("A5", "trunc_traffic_vs_k", 120, trunc_law);
  criterion("A6", "exhaustive_k8", 120, exhaustive_k8);
  criterion("A7", "end_to_end_exact", 300, end_to_end);
  criterion("A8", "backend_equivalence", 120, backend_equivalence);
  criterion("A9", "probabilistic_within_one", 120, probabilistic_bound);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
