#pragma once

// Mock external annealer: an HTTP server implementing the /sample wire
// protocol backed by gibbs_sample. The request's num_reads and seed override
// the base config, so a direct gibbs_sample call with the same config and seed
// reproduces the served batch exactly.

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>

#include "httplib.h"
#include "qlag/samplers.hpp"
#include "qlag/serialize.hpp"

namespace qlag {

class MockAnnealerServer {
 public:
  explicit MockAnnealerServer(SamplerConfig base_cfg = SamplerConfig::defaults(0))
      : cfg_(std::move(base_cfg)) {
    server_.Post("/sample", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
  }

  ~MockAnnealerServer() { stop(); }

  // Binds to the given port (0 picks a free one) and serves on a background
  // thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    host_ = host;
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      if (port_ < 0) throw std::runtime_error("mock server could not bind to " + host);
    } else {
      if (!server_.bind_to_port(host, port))
        throw std::runtime_error("mock server could not bind to " + host + ":" +
                                 std::to_string(port));
      port_ = port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Serves on the calling thread until stop() (used by the CLI).
  void serve(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!server_.listen(host, port))
      throw std::runtime_error("mock server could not listen on " + host + ":" +
                               std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const { return host_ + ":" + std::to_string(port_); }
  std::uint64_t requests_served() const { return served_.load(); }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      const ConstrainedProblem wire = problem_from_json(body.at("model"));
      EffectiveModel m;
      m.n_vars = wire.n_vars;
      m.objective = wire.base;
      SamplerConfig cfg = cfg_;
      cfg.n_samples = body.at("num_reads").get<std::uint32_t>();
      cfg.seed = body.at("seed").get<std::uint64_t>();
      const SampleBatch batch = gibbs_sample(m, cfg);
      json samples = json::array();
      for (const auto& q : batch.samples) samples.push_back(binary_to_json(q));
      res.set_content(json{{"samples", samples}}.dump(), "application/json");
      served_.fetch_add(1);
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  SamplerConfig cfg_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  std::atomic<std::uint64_t> served_{0};
};

}  // namespace qlag
