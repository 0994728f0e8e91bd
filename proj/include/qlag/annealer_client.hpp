#pragma once

// HTTP client for an external batch sampler speaking the wire protocol
//   POST /sample  {model: <problem JSON>, num_reads: int, seed: int}
//   -> 200 {samples: [[0,1,...], ...]}
// The submitted model is the effective objective wrapped as an unconstrained
// problem. Responses are validated (array shape, bit range) and energies are
// always recomputed locally, never trusted from the wire.

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>

#include "httplib.h"
#include "qlag/model.hpp"
#include "qlag/samplers.hpp"
#include "qlag/serialize.hpp"

namespace qlag {

struct AnnealerClientOptions {
  int max_retries = 3;  // retries after the initial attempt, network errors only
  int backoff_ms = 100;
  int timeout_sec = 30;
};

namespace detail {

struct Endpoint {
  std::string host;
  int port = 80;
};

inline Endpoint parse_endpoint(std::string address) {
  constexpr const char* kScheme = "http://";
  if (address.rfind(kScheme, 0) == 0) address = address.substr(std::string(kScheme).size());
  while (!address.empty() && address.back() == '/') address.pop_back();
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 >= address.size())
    throw std::invalid_argument("endpoint must be host:port, got " + address);
  Endpoint ep;
  ep.host = address.substr(0, colon);
  ep.port = std::stoi(address.substr(colon + 1));
  return ep;
}

}  // namespace detail

inline SampleBatch external_annealer_submit(const EffectiveModel& m, const SamplerConfig& cfg,
                                            const std::string& endpoint,
                                            const AnnealerClientOptions& options = {}) {
  cfg.validate();
  if (!m.onehot_groups.empty())
    throw std::invalid_argument(
        "one-hot groups are not expressible on the wire; apply penalize_onehot first");
  const auto ep = detail::parse_endpoint(endpoint);

  ConstrainedProblem wire;
  wire.n_vars = m.n_vars;
  wire.base = m.objective;
  const json body{{"model", to_json(wire)},
                  {"num_reads", cfg.n_samples},
                  {"seed", cfg.seed}};
  const std::string payload = body.dump();

  httplib::Result res;
  for (int attempt = 0; ; ++attempt) {
    httplib::Client client(ep.host, ep.port);
    client.set_connection_timeout(options.timeout_sec);
    client.set_read_timeout(options.timeout_sec);
    res = client.Post("/sample", payload, "application/json");
    if (res && res->status == 200) break;
    if (attempt >= options.max_retries) {
      const std::string reason =
          res ? "status " + std::to_string(res->status) : httplib::to_string(res.error());
      throw std::runtime_error("annealer request to " + endpoint + " failed after " +
                               std::to_string(attempt + 1) + " attempts: " + reason);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(options.backoff_ms << attempt));
  }

  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("malformed annealer response: ") + e.what());
  }
  if (!parsed.contains("samples") || !parsed["samples"].is_array() || parsed["samples"].empty())
    throw std::runtime_error("malformed annealer response: missing samples array");

  SampleBatch batch;
  batch.sampler_id = "external:" + endpoint;
  for (const auto& sj : parsed["samples"]) {
    BinaryVector q;
    try {
      q = binary_from_json(sj, m.n_vars);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("malformed annealer response: ") + e.what());
    }
    batch.energies.push_back(evaluate(m.objective, q));
    batch.samples.push_back(std::move(q));
  }
  return batch;
}

}  // namespace qlag
