#include "sq8/local_run.h"

#include <exception>
#include <memory>
#include <thread>

#include "sq8/errors.h"
#include "sq8/tcp_transport.h"

namespace sq8 {

void run_party_threads(const SessionOptions& options, Backend backend,
                       const std::function<void(PartySession&)>& body) {
  std::array<std::unique_ptr<PartyNet>, 3> local_nets;
  std::array<std::unique_ptr<TcpListener>, 3> listeners;
  std::array<Endpoint, 3> endpoints;
  if (backend == Backend::in_process) {
    local_nets = make_local_network();
  } else {
    for (int i = 0; i < 2; ++i) {
      listeners[i] = std::make_unique<TcpListener>(Endpoint{"127.0.0.1", 0});
      endpoints[i] = {"127.0.0.1", listeners[i]->port()};
    }
  }

  std::array<std::exception_ptr, 3> errors;
  std::array<std::thread, 3> threads;

  for (int i = 0; i < 3; ++i) {
    threads[i] = std::thread([&, i] {
      std::unique_ptr<PartyNet> net;
      try {
        if (backend == Backend::in_process) {
          net = std::move(local_nets[i]);
        } else {
          TcpOptions tcp;
          tcp.ring_bits = options.ring_bits;
          tcp.listener = listeners[i].get();
          net = connect_tcp(PartyId(i + 1), endpoints, tcp);
        }
        // Destroying the session closes its channels, which unblocks the
        // other parties if this one fails.
        PartySession session(std::move(net), options);
        body(session);
      } catch (...) {
        errors[i] = std::current_exception();
        if (net) net->close();
      }
    });
  }
  for (auto& t : threads) t.join();

  std::exception_ptr first_transport;
  for (auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const TransportError&) {
      if (!first_transport) first_transport = e;
    } catch (...) {
      std::rethrow_exception(e);
    }
  }
  if (first_transport) std::rethrow_exception(first_transport);
}

}  // namespace sq8
