#pragma once

#include <span>
#include <vector>

#include "sq8/session.h"

namespace sq8::trunc {

// Probabilistic truncation from k shared random bits:
//   c = open(x + r),  c' = (c >> m) mod 2^{k-m-1},
//   b = r_{k-1} XOR c_{k-1},
//   y = c' - sum_{i=m}^{k-2} r_i 2^{i-m} + b 2^{k-m-1}
// Requires MSB(x) = 0 and 0 < m < k-1. Output is floor(x / 2^m) + u where
// u = 1 with probability (x mod 2^m) / 2^m. Four rounds for any batch size.
std::vector<RepShare> trunc_pr(PartySession& s, std::span<const RepShare> x, int m);

// Per-element values seen by one party during trunc_pr_sp. P_3 only fills
// y_hat (its y_1 and y_3 in that order are `output.second`/`output.first`).
struct TruncPrSpTrace {
  std::vector<u128> y_prime;  // this party's output of the two-party truncation
  std::vector<u128> y_hat;    // mask received from P_3
  std::vector<u128> y_tilde;  // difference received from the other party
};

// Same output distribution as trunc_pr, but P_3 deals the correlated
// randomness (shares of r, r_{k-1} and the shifted middle bits) so that
// traffic grows linearly in k. P_1 and P_2 then run the two-party truncation
// and re-randomise into a replicated sharing with masks y_1, y_3 from P_3.
std::vector<RepShare> trunc_pr_sp(PartySession& s, std::span<const RepShare> x, int m,
                                  TruncPrSpTrace* trace = nullptr);

// Exact floor(x / 2^m): the probabilistic result minus the carry out of the
// low m bits, which is [c mod 2^m < r mod 2^m] computed with a secure
// comparison.
std::vector<RepShare> trunc_exact(PartySession& s, std::span<const RepShare> x, int m);

// Exact, or probabilistic with the session's chosen protocol.
std::vector<RepShare> trunc(PartySession& s, std::span<const RepShare> x, int m, TruncMode mode);

// floor(x / 2^m) for a secret m given as shares of 2^{M-m}: one
// multiplication followed by a public truncation by M. Needs
// (M - m) + bitlen(x) < k - 1.
std::vector<RepShare> trunc_priv(PartySession& s, std::span<const RepShare> x,
                                 std::span<const RepShare> pow, int bound, TruncMode mode);

// Round-to-nearest (ties up) of x / 2^m for secret m, by adding 2^{M-1} to
// 2^{M-m} x before truncating by M. Accepts signed x: the value is lifted by
// 2^{k-2} before truncation and lowered afterwards, so it needs
// |2^{M-m} x| + 2^{M-1} < 2^{k-2}.
std::vector<RepShare> round_nearest(PartySession& s, std::span<const RepShare> x,
                                    std::span<const RepShare> pow, int bound, TruncMode mode);

// Round-to-nearest (ties up) of x / 2^m for public m, signed-safe as above.
std::vector<RepShare> round_nearest_public(PartySession& s, std::span<const RepShare> x, int m,
                                           TruncMode mode);

// Rounds used by trunc() for a given mode and protocol.
int trunc_rounds(int k, TruncMode mode, ProbProtocol protocol);

}  // namespace sq8::trunc
