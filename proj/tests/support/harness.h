#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "sq8/local_run.h"
#include "sq8/session.h"

namespace sq8::testing {

inline SessionOptions options_for(int k, uint64_t seed = 7) {
  SessionOptions o;
  o.ring_bits = k;
  o.deterministic_seed = seed;
  return o;
}

// Reconstructs replicated sharings offline, checking that neighbouring
// parties agree on their common component.
inline std::vector<u128> reveal(const Ring& r, const std::array<std::vector<RepShare>, 3>& parts) {
  const size_t n = parts[0].size();
  if (parts[1].size() != n || parts[2].size() != n) throw std::runtime_error("share count mismatch");
  std::vector<u128> out(n);
  for (size_t i = 0; i < n; ++i) {
    for (int p = 0; p < 3; ++p) {
      if (parts[p][i].second != parts[(p + 1) % 3][i].first) {
        throw std::runtime_error("inconsistent replicated sharing");
      }
    }
    out[i] = r.add(r.add(parts[0][i].first, parts[1][i].first), parts[2][i].first);
  }
  return out;
}

inline BitVec reveal_bits(const std::array<BinShare, 3>& parts) {
  for (int p = 0; p < 3; ++p) {
    if (!(parts[p].second == parts[(p + 1) % 3].first)) {
      throw std::runtime_error("inconsistent binary sharing");
    }
  }
  return parts[0].first ^ parts[1].first ^ parts[2].first;
}

inline std::vector<bool> to_bools(const BitVec& v) {
  std::vector<bool> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v.get(i);
  return out;
}

}  // namespace sq8::testing
