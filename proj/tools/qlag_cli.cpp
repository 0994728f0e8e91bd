// Command-line experiment runner.
//
//   qlag run             solve an experiment, one directory per replica
//   qlag histogram       iterations-to-optimum histogram over replicas
//   qlag compare-traffic four-method comparison on one traffic instance
//   qlag serve-mock      serve the mock annealer wire protocol
//
// Specs come from --preset or a RunSpec JSON via --config; --seed, --replicas,
// --jobs, --out and repeated --param key=value override fields. Exit status of
// `run` reflects convergence of all replicas.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qlag/harness.hpp"
#include "qlag/mock_server.hpp"

namespace {

struct SpecOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::string endpoint;
  std::vector<std::string> params;
  std::int64_t seed = -1;
  std::int64_t replicas = -1;
  std::int64_t jobs = -1;
};

void add_spec_options(CLI::App* cmd, SpecOptions& opts) {
  cmd->add_option("--config", opts.config, "RunSpec JSON file");
  cmd->add_option("--preset", opts.preset,
                  "named preset: kmin, kmin_gibbs, number_partition, linear_system, "
                  "structured_cs, traffic, double_constraint");
  cmd->add_option("--seed", opts.seed, "base seed");
  cmd->add_option("--replicas", opts.replicas, "replica count");
  cmd->add_option("--jobs", opts.jobs, "max concurrent replicas");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--endpoint", opts.endpoint, "annealer endpoint host:port");
  cmd->add_option("--param", opts.params,
                  "experiment parameter override, key=value (repeatable)");
}

qlag::harness::RunSpec resolve_spec(const SpecOptions& opts) {
  using qlag::harness::RunSpec;
  RunSpec spec;
  if (!opts.config.empty() && !opts.preset.empty())
    throw std::invalid_argument("give either --config or --preset, not both");
  if (!opts.config.empty()) {
    spec = qlag::harness::runspec_from_json(qlag::json::parse(qlag::read_text_file(opts.config)));
  } else if (!opts.preset.empty()) {
    spec = qlag::harness::preset(opts.preset);
  } else {
    throw std::invalid_argument("one of --config or --preset is required");
  }
  if (opts.seed >= 0) spec.seed = static_cast<std::uint64_t>(opts.seed);
  if (opts.replicas >= 0) spec.replicas = static_cast<std::uint32_t>(opts.replicas);
  if (opts.jobs >= 0) spec.jobs = static_cast<std::uint32_t>(opts.jobs);
  if (!opts.out.empty()) spec.output_dir = opts.out;
  if (!opts.endpoint.empty()) spec.annealer_endpoint = opts.endpoint;
  for (const std::string& kv : opts.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--param expects key=value, got " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      spec.params[key] = qlag::json::parse(value);
    } catch (const std::exception&) {
      spec.params[key] = value;
    }
  }
  spec.validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrange-multiplier solver for constrained binary quadratic problems"};
  app.require_subcommand(1);

  SpecOptions run_opts, hist_opts, cmp_opts;
  auto* run_cmd = app.add_subcommand("run", "solve an experiment and write run directories");
  add_spec_options(run_cmd, run_opts);
  auto* hist_cmd =
      app.add_subcommand("histogram", "histogram of iterations-to-optimum over replicas");
  add_spec_options(hist_cmd, hist_opts);
  auto* cmp_cmd = app.add_subcommand("compare-traffic",
                                     "shortest-path / deterministic / Gibbs / annealer comparison");
  add_spec_options(cmp_cmd, cmp_opts);

  std::string mock_host = "127.0.0.1";
  int mock_port = 8840;
  auto* mock_cmd = app.add_subcommand("serve-mock", "serve the mock annealer on /sample");
  mock_cmd->add_option("--host", mock_host, "bind address");
  mock_cmd->add_option("--port", mock_port, "port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const auto spec = resolve_spec(run_opts);
      const auto output = qlag::harness::run(spec);
      std::size_t converged = 0;
      for (const auto& r : output.results) converged += r.converged ? 1 : 0;
      std::cout << output.dir << ": " << converged << "/" << output.results.size()
                << " replicas converged\n";
      return output.all_converged ? 0 : 1;
    }
    if (hist_cmd->parsed()) {
      const auto spec = resolve_spec(hist_opts);
      const auto output = qlag::harness::histogram(spec);
      std::cout << output.dir << "/histogram.csv: median " << output.median_iterations
                << " iterations, " << output.overflow << " overflow\n";
      return output.overflow == 0 ? 0 : 1;
    }
    if (cmp_cmd->parsed()) {
      const auto spec = resolve_spec(cmp_opts);
      const auto comparison = qlag::harness::compare_traffic(spec);
      std::cout << comparison.dump(2) << "\n";
      return 0;
    }
    if (mock_cmd->parsed()) {
      qlag::MockAnnealerServer server;
      std::cout << "serving mock annealer on " << mock_host << ":" << mock_port << "\n";
      server.serve(mock_host, mock_port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
