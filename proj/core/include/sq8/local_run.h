#pragma once

#include <array>
#include <functional>
#include <optional>
#include <type_traits>

#include "sq8/session.h"

namespace sq8 {

enum class Backend { in_process, tcp_loopback };

// Runs `body` once per party on three threads, each with its own session.
// When a party fails its channels are closed so the others unblock; the first
// failure that is not a consequence of another party's failure is rethrown.
void run_party_threads(const SessionOptions& options, Backend backend,
                       const std::function<void(PartySession&)>& body);

template <class F>
auto run_parties(const SessionOptions& options, F&& body, Backend backend = Backend::in_process) {
  using R = std::invoke_result_t<F&, PartySession&>;
  if constexpr (std::is_void_v<R>) {
    run_party_threads(options, backend, [&](PartySession& s) { body(s); });
  } else {
    std::array<std::optional<R>, 3> slots;
    run_party_threads(options, backend,
                      [&](PartySession& s) { slots[s.id().index()].emplace(body(s)); });
    return std::array<R, 3>{std::move(*slots[0]), std::move(*slots[1]), std::move(*slots[2])};
  }
}

}  // namespace sq8
