#pragma once

// Experiment runner: named presets for the six experiments, per-replica run
// directories with trajectory.csv / result.json / spec.json, iteration-count
// histograms against known optima, and the four-way traffic comparison.
//
// Seed derivation: replica r uses base_seed + r for generators and
// base_seed ^ (r * 0x9E3779B9) for samplers, unless an explicit seeds list is
// given, in which case seeds[r] is used verbatim for both. Replicas run
// concurrently up to the jobs bound; files are written atomically
// (temp + rename) and run directories are append-only.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qlag/annealer_client.hpp"
#include "qlag/dual_ascent.hpp"
#include "qlag/model.hpp"
#include "qlag/problems.hpp"
#include "qlag/samplers.hpp"
#include "qlag/serialize.hpp"

namespace qlag::harness {

enum class Experiment {
  kKmin,
  kNumberPartition,
  kLinearSystem,
  kStructuredCs,
  kTraffic,
  kDoubleConstraint,
  kCustom,
};

inline std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::kKmin: return "kmin";
    case Experiment::kNumberPartition: return "number_partition";
    case Experiment::kLinearSystem: return "linear_system";
    case Experiment::kStructuredCs: return "structured_cs";
    case Experiment::kTraffic: return "traffic";
    case Experiment::kDoubleConstraint: return "double_constraint";
    case Experiment::kCustom: return "custom";
  }
  throw std::logic_error("unknown experiment");
}

inline Experiment experiment_from_name(const std::string& name) {
  for (Experiment e : {Experiment::kKmin, Experiment::kNumberPartition, Experiment::kLinearSystem,
                       Experiment::kStructuredCs, Experiment::kTraffic,
                       Experiment::kDoubleConstraint, Experiment::kCustom})
    if (experiment_name(e) == name) return e;
  throw std::invalid_argument("unknown experiment: " + name);
}

struct RunSpec {
  Experiment experiment = Experiment::kKmin;
  json params = json::object();
  std::string sampler_kind = "gibbs";  // gibbs | onehot_gibbs | annealer | none
  SamplerConfig sampler = SamplerConfig::defaults(0);
  SolverConfig solver;
  std::uint32_t replicas = 1;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // optional explicit per-replica seeds
  std::string output_dir;
  std::uint32_t jobs = 0;  // 0 = hardware concurrency
  std::string annealer_endpoint;

  void validate() const {
    if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
    if (!seeds.empty() && seeds.size() != replicas)
      throw std::invalid_argument("explicit seeds list must have one entry per replica");
    if (sampler_kind != "gibbs" && sampler_kind != "onehot_gibbs" &&
        sampler_kind != "annealer" && sampler_kind != "none")
      throw std::invalid_argument("unknown sampler kind: " + sampler_kind);
    sampler.validate();
    solver.validate();
  }

  std::uint64_t generator_seed(std::uint32_t r) const {
    return seeds.empty() ? seed + r : seeds[r];
  }
  std::uint64_t sampler_seed(std::uint32_t r) const {
    return seeds.empty() ? seed ^ (static_cast<std::uint64_t>(r) * 0x9E3779B9ULL) : seeds[r];
  }
};

// --------------------------------------------------------------------------
// JSON round trip for configs and specs.

inline json to_json(const SamplerConfig& cfg) {
  return json{{"beta_schedule", cfg.beta_schedule},
              {"sweeps_per_beta", cfg.sweeps_per_beta},
              {"n_samples", cfg.n_samples},
              {"seed", cfg.seed},
              {"read_beta", cfg.read_beta}};
}

inline SamplerConfig sampler_from_json(const json& j) {
  SamplerConfig cfg;
  cfg.beta_schedule = j.at("beta_schedule").get<std::vector<double>>();
  cfg.sweeps_per_beta = j.at("sweeps_per_beta").get<std::uint32_t>();
  cfg.n_samples = j.at("n_samples").get<std::uint32_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.read_beta = j.at("read_beta").get<double>();
  return cfg;
}

inline json to_json(const SolverConfig& cfg) {
  return json{{"max_iterations", cfg.max_iterations},
              {"eta_mode", cfg.eta_mode == EtaMode::kFixed ? "fixed" : "line_search"},
              {"fixed_eta", cfg.fixed_eta},
              {"eta_grid", cfg.eta_grid},
              {"tolerance", cfg.tolerance},
              {"expectation_mode",
               cfg.expectation_mode == ExpectationMode::kSampleMean
                   ? "sample_mean"
                   : cfg.expectation_mode == ExpectationMode::kExactField ? "exact_field"
                                                                          : "soft_field"},
              {"soft_beta", cfg.soft_beta},
              {"seed", cfg.seed},
              {"feasibility_eps", cfg.feasibility_eps},
              {"regularized", cfg.regularized}};
}

inline SolverConfig solver_from_json(const json& j) {
  SolverConfig cfg;
  cfg.max_iterations = j.at("max_iterations").get<std::uint32_t>();
  const std::string mode = j.at("eta_mode").get<std::string>();
  if (mode == "fixed") cfg.eta_mode = EtaMode::kFixed;
  else if (mode == "line_search") cfg.eta_mode = EtaMode::kLineSearch;
  else throw std::invalid_argument("unknown eta mode: " + mode);
  cfg.fixed_eta = j.at("fixed_eta").get<double>();
  cfg.eta_grid = j.at("eta_grid").get<std::vector<double>>();
  cfg.tolerance = j.at("tolerance").get<double>();
  const std::string em = j.at("expectation_mode").get<std::string>();
  if (em == "sample_mean") cfg.expectation_mode = ExpectationMode::kSampleMean;
  else if (em == "exact_field") cfg.expectation_mode = ExpectationMode::kExactField;
  else if (em == "soft_field") cfg.expectation_mode = ExpectationMode::kSoftField;
  else throw std::invalid_argument("unknown expectation mode: " + em);
  cfg.soft_beta = j.at("soft_beta").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.feasibility_eps = j.at("feasibility_eps").get<double>();
  cfg.regularized = j.at("regularized").get<bool>();
  return cfg;
}

inline json to_json(const RunSpec& spec) {
  json out{{"experiment", experiment_name(spec.experiment)},
           {"params", spec.params},
           {"sampler_kind", spec.sampler_kind},
           {"sampler", to_json(spec.sampler)},
           {"solver", to_json(spec.solver)},
           {"replicas", spec.replicas},
           {"seed", spec.seed},
           {"output_dir", spec.output_dir},
           {"jobs", spec.jobs},
           {"annealer_endpoint", spec.annealer_endpoint}};
  if (!spec.seeds.empty()) out["seeds"] = spec.seeds;
  return out;
}

inline RunSpec runspec_from_json(const json& j) {
  RunSpec spec;
  spec.experiment = experiment_from_name(j.at("experiment").get<std::string>());
  spec.params = j.value("params", json::object());
  spec.sampler_kind = j.value("sampler_kind", std::string("gibbs"));
  if (j.contains("sampler")) spec.sampler = sampler_from_json(j.at("sampler"));
  if (j.contains("solver")) spec.solver = solver_from_json(j.at("solver"));
  spec.replicas = j.value("replicas", 1u);
  spec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  spec.output_dir = j.value("output_dir", std::string());
  spec.jobs = j.value("jobs", 0u);
  spec.annealer_endpoint = j.value("annealer_endpoint", std::string());
  spec.validate();
  return spec;
}

// --------------------------------------------------------------------------
// Problem construction per experiment.

struct BuiltProblem {
  ConstrainedProblem problem;
  MultiplierState nu0;
  std::optional<problems::InferenceInstance> inference;
  std::optional<problems::TrafficInstance> traffic;
};

inline BuiltProblem build_problem(const RunSpec& spec, std::uint64_t gen_seed) {
  BuiltProblem built;
  const json& pr = spec.params;
  switch (spec.experiment) {
    case Experiment::kKmin: {
      built.problem = problems::gen_kmin(pr.at("n").get<std::uint32_t>(),
                                         pr.at("k").get<std::uint32_t>(), gen_seed);
      break;
    }
    case Experiment::kNumberPartition: {
      built.problem = problems::gen_number_partition(pr.at("n").get<std::uint32_t>(), gen_seed);
      built.nu0 = MultiplierState{{pr.value("nu0", 0.2)}, 0};
      return built;
    }
    case Experiment::kLinearSystem: {
      auto gen = problems::gen_linear_system(pr.at("n").get<std::uint32_t>(),
                                             pr.at("m").get<std::uint32_t>(), gen_seed);
      built.problem = std::move(gen.problem);
      built.inference = std::move(gen.instance);
      break;
    }
    case Experiment::kStructuredCs: {
      problems::CsOptions options;
      options.coupling = pr.value("coupling", 1.0);
      options.literal_sign = pr.value("literal_sign", false);
      options.fill = pr.value("fill", 0.25);
      auto gen = problems::gen_structured_cs(pr.at("width").get<std::uint32_t>(),
                                             pr.at("height").get<std::uint32_t>(),
                                             pr.at("alpha").get<double>(), gen_seed, options);
      built.problem = std::move(gen.problem);
      built.inference = std::move(gen.instance);
      break;
    }
    case Experiment::kTraffic: {
      auto gen = problems::gen_traffic(
          pr.at("grid_w").get<std::uint32_t>(), pr.at("grid_h").get<std::uint32_t>(),
          pr.at("cars").get<std::uint32_t>(), pr.at("routes").get<std::uint32_t>(), gen_seed);
      if (pr.value("linearized", true))
        built.problem = problems::linearize_traffic(gen.instance);
      else
        built.problem = gen.problem;
      built.traffic = std::move(gen.instance);
      break;
    }
    case Experiment::kDoubleConstraint: {
      built.problem = problems::gen_double_constraint(pr.at("l").get<std::uint32_t>(), gen_seed);
      break;
    }
    case Experiment::kCustom: {
      built.problem = problems::load_problem(pr.at("problem_file").get<std::string>());
      break;
    }
  }
  built.nu0 = MultiplierState::zeros(built.problem.constraints.size());
  return built;
}

// --------------------------------------------------------------------------
// Sampler backends.

inline SamplerFn gibbs_backend(SamplerConfig base) {
  return [base](const EffectiveModel& m, std::uint64_t seed) {
    SamplerConfig cfg = base;
    cfg.seed = seed;
    return gibbs_sample(m, cfg);
  };
}

inline SamplerFn onehot_gibbs_backend(SamplerConfig base) {
  return [base](const EffectiveModel& m, std::uint64_t seed) {
    SamplerConfig cfg = base;
    cfg.seed = seed;
    return onehot_gibbs_sample(m, cfg);
  };
}

// External annealer backend: one-hot groups are folded into an explicit
// quadratic penalty before submission and returned samples violating a group
// are dropped (all of them kept if none survive).
inline SamplerFn annealer_backend(SamplerConfig base, std::string endpoint,
                                  AnnealerClientOptions options = {}) {
  return [base, endpoint, options](const EffectiveModel& m, std::uint64_t seed) {
    SamplerConfig cfg = base;
    cfg.seed = seed;
    if (m.onehot_groups.empty()) return external_annealer_submit(m, cfg, endpoint, options);
    double spread = 1.0;
    for (const auto& [i, c] : m.objective.linear) {
      (void)i;
      spread = std::max(spread, std::abs(c));
    }
    const EffectiveModel wire = penalize_onehot(m, 2.0 * (1.0 + spread));
    SampleBatch raw = external_annealer_submit(wire, cfg, endpoint, options);
    SampleBatch kept;
    kept.sampler_id = raw.sampler_id;
    for (const auto& q : raw.samples) {
      bool ok = true;
      for (const auto& group : m.onehot_groups) {
        std::uint32_t count = 0;
        for (std::uint32_t i : group) count += q[i];
        if (count != 1) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      kept.energies.push_back(evaluate(m.objective, q));
      kept.samples.push_back(q);
    }
    if (kept.samples.empty()) {
      for (const auto& q : raw.samples) kept.energies.push_back(evaluate(m.objective, q)),
                                        kept.samples.push_back(q);
    }
    return kept;
  };
}

inline SamplerFn make_sampler(const RunSpec& spec, const std::string& endpoint_override = "") {
  if (spec.sampler_kind == "none") return nullptr;
  if (spec.sampler_kind == "gibbs") return gibbs_backend(spec.sampler);
  if (spec.sampler_kind == "onehot_gibbs") return onehot_gibbs_backend(spec.sampler);
  const std::string endpoint =
      !endpoint_override.empty() ? endpoint_override : spec.annealer_endpoint;
  if (endpoint.empty()) throw std::invalid_argument("annealer sampler needs an endpoint");
  return annealer_backend(spec.sampler, endpoint);
}

// --------------------------------------------------------------------------
// Output files.

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double nu_l2(const std::vector<double>& nu) {
  double acc = 0.0;
  for (double x : nu) acc += x * x;
  return std::sqrt(acc);
}

inline std::string trajectory_csv(const SolveResult& result,
                                  const problems::InferenceInstance* inference,
                                  std::size_t n_constraints) {
  const std::size_t nu_cols = std::min<std::size_t>(n_constraints, 16);
  std::string out = "step,eta,residual_norm,mean_penalty_energy,min_penalty_energy,mse,nu_norm";
  for (std::size_t k = 0; k < nu_cols; ++k) out += ",nu_" + std::to_string(k);
  out += "\n";
  for (const auto& rec : result.trajectory) {
    out += std::to_string(rec.iteration);
    out += "," + fmt(rec.eta);
    out += "," + fmt(rec.residual_norm);
    out += "," + fmt(rec.batch_mean_energy);
    out += "," + fmt(rec.batch_min_energy);
    out += ",";
    if (inference) out += fmt(inference->mse(rec.best_sample));
    out += "," + fmt(nu_l2(rec.nu));
    for (std::size_t k = 0; k < nu_cols; ++k) out += "," + fmt(rec.nu[k]);
    out += "\n";
  }
  return out;
}

inline json result_to_json(const SolveResult& result) {
  json trajectory = json::array();
  for (const auto& rec : result.trajectory) {
    trajectory.push_back(json{{"iteration", rec.iteration},
                              {"eta", rec.eta},
                              {"residual_norm", rec.residual_norm},
                              {"penalty_energy_best", rec.penalty_energy_best},
                              {"incumbent_feasible", rec.incumbent_feasible},
                              {"batch_mean_energy", rec.batch_mean_energy},
                              {"batch_min_energy", rec.batch_min_energy},
                              {"nu", rec.nu},
                              {"expectations", rec.expectations}});
  }
  return json{{"incumbent", binary_to_json(result.incumbent)},
              {"incumbent_energy", result.incumbent_energy},
              {"incumbent_feasible", result.incumbent_feasible},
              {"converged", result.converged},
              {"iterations_used", result.iterations_used},
              {"trajectory", trajectory}};
}

inline std::string replica_dir(const std::string& base, std::uint32_t r) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "r%03u", r);
  return base + "/" + buf;
}

// Minimal schema check of everything a run wrote; throws on violations.
inline void validate_run_dir(const std::string& dir, std::uint32_t replicas) {
  const json spec = json::parse(read_text_file(dir + "/spec.json"));
  for (const char* key : {"experiment", "params", "solver", "sampler", "replicas", "seed"})
    if (!spec.contains(key)) throw std::runtime_error(std::string("spec.json missing ") + key);
  for (std::uint32_t r = 0; r < replicas; ++r) {
    const std::string rdir = replica_dir(dir, r);
    const json result = json::parse(read_text_file(rdir + "/result.json"));
    for (const char* key : {"incumbent", "incumbent_energy", "converged", "iterations_used",
                            "trajectory"})
      if (!result.contains(key))
        throw std::runtime_error(std::string("result.json missing ") + key);
    const std::string csv = read_text_file(rdir + "/trajectory.csv");
    std::size_t line_start = 0;
    std::optional<std::size_t> columns;
    std::size_t rows = 0;
    while (line_start < csv.size()) {
      std::size_t line_end = csv.find('\n', line_start);
      if (line_end == std::string::npos) line_end = csv.size();
      const std::string line = csv.substr(line_start, line_end - line_start);
      if (!line.empty()) {
        const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
        if (!columns) columns = cols;
        else if (cols != *columns) throw std::runtime_error("ragged trajectory.csv in " + rdir);
        ++rows;
      }
      line_start = line_end + 1;
    }
    if (rows < 2) throw std::runtime_error("trajectory.csv has no data rows in " + rdir);
    if (rows - 1 != result.at("iterations_used").get<std::size_t>())
      throw std::runtime_error("trajectory.csv row count mismatch in " + rdir);
  }
}

}  // namespace detail

// --------------------------------------------------------------------------
// run: solves `replicas` independent instances and writes one directory per
// replica plus the resolved spec.json. Returns the outcomes in replica order.

struct RunOutput {
  std::string dir;
  bool all_converged = true;
  std::vector<SolveResult> results;
};

inline SolveResult solve_replica(const RunSpec& spec, const BuiltProblem& built,
                                 std::uint32_t replica, const std::string& endpoint_override = "") {
  SolverConfig solver = spec.solver;
  solver.seed = spec.sampler_seed(replica);
  const SamplerFn sampler = make_sampler(spec, endpoint_override);
  return solve(built.problem, sampler, built.nu0, solver);
}

inline RunOutput run(const RunSpec& spec) {
  spec.validate();
  if (spec.output_dir.empty()) throw std::invalid_argument("output_dir is required");
  std::filesystem::create_directories(spec.output_dir);
  for (std::uint32_t r = 0; r < spec.replicas; ++r) {
    const std::string rdir = detail::replica_dir(spec.output_dir, r);
    if (std::filesystem::exists(rdir + "/trajectory.csv"))
      throw std::runtime_error("run directory already contains " + rdir +
                               "/trajectory.csv (directories are append-only)");
  }

  json spec_json = to_json(spec);
  {
    json derived = json::object();
    json gen_seeds = json::array(), samp_seeds = json::array();
    for (std::uint32_t r = 0; r < spec.replicas; ++r) {
      gen_seeds.push_back(spec.generator_seed(r));
      samp_seeds.push_back(spec.sampler_seed(r));
    }
    derived["generator_seeds"] = gen_seeds;
    derived["sampler_seeds"] = samp_seeds;
    spec_json["derived"] = derived;
  }
  write_text_file(spec.output_dir + "/spec.json", spec_json.dump(2) + "\n");

  RunOutput output;
  output.dir = spec.output_dir;
  output.results.resize(spec.replicas);
  std::vector<std::string> errors(spec.replicas);

  const auto worker_body = [&](std::uint32_t r) {
    try {
      const BuiltProblem built = build_problem(spec, spec.generator_seed(r));
      SolveResult result = solve_replica(spec, built, r);
      const std::string rdir = detail::replica_dir(spec.output_dir, r);
      std::filesystem::create_directories(rdir);
      write_text_file(rdir + "/trajectory.csv",
                      detail::trajectory_csv(result,
                                             built.inference ? &*built.inference : nullptr,
                                             built.problem.constraints.size()));
      json rj = detail::result_to_json(result);
      rj["generator_seed"] = spec.generator_seed(r);
      rj["sampler_seed"] = spec.sampler_seed(r);
      if (built.inference) rj["final_mse"] = built.inference->mse(result.incumbent);
      write_text_file(rdir + "/result.json", rj.dump(2) + "\n");
      output.results[r] = std::move(result);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  };

  const std::uint32_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::uint32_t jobs = std::min(spec.replicas, spec.jobs == 0 ? hw : spec.jobs);
  if (jobs <= 1) {
    for (std::uint32_t r = 0; r < spec.replicas; ++r) worker_body(r);
  } else {
    std::atomic<std::uint32_t> next{0};
    std::vector<std::thread> pool;
    for (std::uint32_t w = 0; w < jobs; ++w)
      pool.emplace_back([&] {
        for (std::uint32_t r = next.fetch_add(1); r < spec.replicas; r = next.fetch_add(1))
          worker_body(r);
      });
    for (auto& t : pool) t.join();
  }
  for (std::uint32_t r = 0; r < spec.replicas; ++r)
    if (!errors[r].empty())
      throw std::runtime_error("replica " + std::to_string(r) + " failed: " + errors[r]);

  for (const auto& result : output.results) output.all_converged &= result.converged;
  detail::validate_run_dir(spec.output_dir, spec.replicas);
  return output;
}

// --------------------------------------------------------------------------
// Known-optimum thresholds for the histogram mode.

inline double optimum_threshold(const RunSpec& spec, const BuiltProblem& built) {
  switch (spec.experiment) {
    case Experiment::kKmin: {
      // Sorting oracle: the K smallest fields.
      const std::uint32_t k = spec.params.at("k").get<std::uint32_t>();
      std::vector<std::pair<double, std::uint32_t>> fields;
      for (const auto& [i, c] : built.problem.base.linear) fields.push_back({c, i});
      std::sort(fields.begin(), fields.end());
      BinaryVector q(built.problem.n_vars);
      for (std::uint32_t j = 0; j < k; ++j) q[fields[j].second] = 1;
      const double oracle = solution_energy(built.problem, q);
      return oracle + 1e-9 * std::max(1.0, std::abs(oracle));
    }
    case Experiment::kNumberPartition:
      // Below the smallest representable nonzero residual means optimal.
      return 0.5 * problems::np_residual_unit(spec.params.at("n").get<std::uint32_t>());
    case Experiment::kLinearSystem:
      return 1e-9;  // exact reconstruction scores exactly zero
    case Experiment::kDoubleConstraint: {
      const auto [q, cost] =
          problems::double_constraint_oracle(built.problem, spec.params.at("l").get<std::uint32_t>());
      (void)q;
      return cost + 1e-9 * std::max(1.0, std::abs(cost));
    }
    default:
      throw std::invalid_argument("experiment " + experiment_name(spec.experiment) +
                                  " has no known optimum for histogram mode");
  }
}

struct HistogramOutput {
  std::string dir;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> bins;  // (iterations, count)
  std::uint32_t overflow = 0;
  double median_iterations = 0.0;  // over converged replicas
};

// Bins iterations-to-known-optimum over replicas with distinct seeds.
inline HistogramOutput histogram(const RunSpec& spec) {
  spec.validate();
  if (spec.replicas < 2) throw std::invalid_argument("histogram needs at least 2 replicas");
  {
    std::vector<std::uint64_t> all;
    for (std::uint32_t r = 0; r < spec.replicas; ++r) all.push_back(spec.generator_seed(r));
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw std::invalid_argument("histogram replicas must use distinct seeds");
  }
  if (spec.output_dir.empty()) throw std::invalid_argument("output_dir is required");
  // Fails early for experiments without a known optimum.
  optimum_threshold(spec, build_problem(spec, spec.generator_seed(0)));

  std::filesystem::create_directories(spec.output_dir);
  if (std::filesystem::exists(spec.output_dir + "/histogram.csv"))
    throw std::runtime_error("run directory already contains histogram.csv");

  std::vector<std::int64_t> iterations_to_optimum(spec.replicas, -1);
  std::vector<std::string> errors(spec.replicas);
  const auto worker_body = [&](std::uint32_t r) {
    try {
      const BuiltProblem built = build_problem(spec, spec.generator_seed(r));
      const double threshold = optimum_threshold(spec, built);
      const SolveResult result = solve_replica(spec, built, r);
      for (const auto& rec : result.trajectory) {
        if (rec.penalty_energy_best <= threshold && rec.incumbent_feasible) {
          iterations_to_optimum[r] = rec.iteration + 1;
          break;
        }
      }
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  };
  const std::uint32_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::uint32_t jobs = std::min(spec.replicas, spec.jobs == 0 ? hw : spec.jobs);
  if (jobs <= 1) {
    for (std::uint32_t r = 0; r < spec.replicas; ++r) worker_body(r);
  } else {
    std::atomic<std::uint32_t> next{0};
    std::vector<std::thread> pool;
    for (std::uint32_t w = 0; w < jobs; ++w)
      pool.emplace_back([&] {
        for (std::uint32_t r = next.fetch_add(1); r < spec.replicas; r = next.fetch_add(1))
          worker_body(r);
      });
    for (auto& t : pool) t.join();
  }
  for (std::uint32_t r = 0; r < spec.replicas; ++r)
    if (!errors[r].empty())
      throw std::runtime_error("replica " + std::to_string(r) + " failed: " + errors[r]);

  HistogramOutput out;
  out.dir = spec.output_dir;
  std::map<std::uint32_t, std::uint32_t> counts;
  std::vector<double> reached;
  for (std::int64_t it : iterations_to_optimum) {
    if (it < 0) {
      ++out.overflow;
    } else {
      ++counts[static_cast<std::uint32_t>(it)];
      reached.push_back(static_cast<double>(it));
    }
  }
  if (!reached.empty()) {
    std::sort(reached.begin(), reached.end());
    out.median_iterations = reached[reached.size() / 2];
  }
  std::string csv = "iterations,count,ratio\n";
  for (const auto& [it, count] : counts) {
    out.bins.push_back({it, count});
    csv += std::to_string(it) + "," + std::to_string(count) + "," +
           detail::fmt(static_cast<double>(count) / spec.replicas) + "\n";
  }
  if (out.overflow > 0)
    csv += "overflow," + std::to_string(out.overflow) + "," +
           detail::fmt(static_cast<double>(out.overflow) / spec.replicas) + "\n";
  write_text_file(spec.output_dir + "/histogram.csv", csv);
  json spec_json = to_json(spec);
  write_text_file(spec.output_dir + "/spec.json", spec_json.dump(2) + "\n");
  return out;
}

// --------------------------------------------------------------------------
// compare-traffic: the four methods on the same instance. The annealer column
// goes absent (with an error note) when the mock server cannot be reached.

inline std::string resolve_mock_endpoint(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("QLAG_MOCK_URL"); env && *env) return env;
  return "127.0.0.1:8840";
}

inline json compare_traffic(const RunSpec& spec) {
  spec.validate();
  if (spec.experiment != Experiment::kTraffic)
    throw std::invalid_argument("compare-traffic needs a traffic spec");
  const auto gen = problems::gen_traffic(
      spec.params.at("grid_w").get<std::uint32_t>(), spec.params.at("grid_h").get<std::uint32_t>(),
      spec.params.at("cars").get<std::uint32_t>(), spec.params.at("routes").get<std::uint32_t>(),
      spec.seed);
  const auto& instance = gen.instance;
  const ConstrainedProblem linearized = problems::linearize_traffic(instance);
  const MultiplierState nu0 = MultiplierState::zeros(linearized.constraints.size());
  const auto cost_of = [&](const BinaryVector& q) { return evaluate(gen.problem.base, q); };

  json methods = json::object();
  json out = json::object();
  {
    const BinaryVector q = problems::shortest_path_baseline(instance);
    methods["shortest_path"] = json{{"cost", cost_of(q)}, {"feasible", is_feasible(gen.problem, q)}};
  }
  {
    const BinaryVector q = problems::deterministic_baseline(instance);
    methods["deterministic"] = json{{"cost", cost_of(q)}, {"feasible", is_feasible(gen.problem, q)}};
  }
  {
    SolverConfig solver = spec.solver;
    solver.seed = spec.sampler_seed(0);
    const SolveResult res = solve(linearized, onehot_gibbs_backend(spec.sampler), nu0, solver);
    methods["gibbs_onehot"] = json{{"cost", cost_of(res.incumbent)},
                                   {"feasible", is_feasible(gen.problem, res.incumbent)}};
  }
  {
    const std::string endpoint = resolve_mock_endpoint(spec.annealer_endpoint);
    try {
      SolverConfig solver = spec.solver;
      solver.seed = spec.sampler_seed(1);
      solver.max_iterations = spec.params.value("annealer_iterations", 10u);
      AnnealerClientOptions options;
      options.max_retries = 1;
      options.backoff_ms = 50;
      const SolveResult res =
          solve(linearized, annealer_backend(spec.sampler, endpoint, options), nu0, solver);
      methods["annealer"] = json{{"cost", cost_of(res.incumbent)},
                                 {"feasible", is_feasible(gen.problem, res.incumbent)}};
    } catch (const std::exception& e) {
      out["annealer_error"] = e.what();
    }
  }

  out["instance"] = json{{"grid_w", spec.params.at("grid_w")},
                         {"grid_h", spec.params.at("grid_h")},
                         {"cars", instance.n_cars},
                         {"routes", instance.n_routes},
                         {"seed", spec.seed}};
  out["methods"] = methods;
  if (!spec.output_dir.empty()) {
    std::filesystem::create_directories(spec.output_dir);
    write_text_file(spec.output_dir + "/comparison.json", out.dump(2) + "\n");
    write_text_file(spec.output_dir + "/spec.json", to_json(spec).dump(2) + "\n");
  }
  return out;
}

// --------------------------------------------------------------------------
// Desk-scale presets.

inline RunSpec preset(const std::string& name) {
  RunSpec spec;
  if (name == "kmin") {
    spec.experiment = Experiment::kKmin;
    spec.params = json{{"n", 2000}, {"k", 5}};
    spec.sampler_kind = "none";
    spec.solver.expectation_mode = ExpectationMode::kExactField;
    spec.solver.eta_mode = EtaMode::kLineSearch;
    spec.solver.eta_grid = {1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.3, 1.0};
    spec.solver.tolerance = 0.0;
    spec.solver.max_iterations = 200;
  } else if (name == "kmin_gibbs") {
    // Sampled variant; shrunk to stay desk-scale with sweeps.
    spec.experiment = Experiment::kKmin;
    spec.params = json{{"n", 400}, {"k", 5}};
    spec.sampler_kind = "gibbs";
    spec.sampler.beta_schedule = geometric_schedule(0.1, 50.0, 32);
    spec.sampler.read_beta = 50.0;
    spec.sampler.n_samples = 100;
    spec.solver.expectation_mode = ExpectationMode::kSampleMean;
    spec.solver.eta_grid = {1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.3, 1.0};
    spec.solver.tolerance = 0.5;
    spec.solver.max_iterations = 300;
  } else if (name == "number_partition") {
    spec.experiment = Experiment::kNumberPartition;
    spec.params = json{{"n", 2000}};
    spec.sampler_kind = "gibbs";
    spec.sampler.beta_schedule = geometric_schedule(0.1, 50.0, 32);
    spec.sampler.read_beta = 50.0;
    spec.sampler.n_samples = 1000;
    spec.solver.expectation_mode = ExpectationMode::kSampleMean;
    spec.solver.eta_grid = {1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 1e-2, 0.1};
    spec.solver.tolerance = 2.0;
    spec.solver.max_iterations = 1500;
  } else if (name == "linear_system") {
    spec.experiment = Experiment::kLinearSystem;
    spec.params = json{{"n", 200}, {"m", 160}};
    spec.sampler_kind = "none";
    spec.solver.expectation_mode = ExpectationMode::kSoftField;
    spec.solver.soft_beta = 12.0;
    spec.solver.eta_grid = {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0};
    spec.solver.tolerance = 1e-3;
    spec.solver.max_iterations = 3000;
  } else if (name == "structured_cs") {
    spec.experiment = Experiment::kStructuredCs;
    spec.params = json{{"width", 16}, {"height", 16}, {"alpha", 0.6}, {"coupling", 1.0}};
    spec.sampler_kind = "gibbs";
    spec.sampler.beta_schedule = geometric_schedule(0.25, 4.0, 24);
    spec.sampler.sweeps_per_beta = 6;
    spec.sampler.read_beta = 4.0;
    spec.sampler.n_samples = 48;
    spec.solver.expectation_mode = ExpectationMode::kSampleMean;
    spec.solver.eta_grid = {0.003, 0.01, 0.03, 0.1, 0.3};
    spec.solver.tolerance = 0.25;
    spec.solver.max_iterations = 150;
  } else if (name == "traffic") {
    spec.experiment = Experiment::kTraffic;
    spec.params = json{{"grid_w", 8}, {"grid_h", 8}, {"cars", 50}, {"routes", 3},
                       {"annealer_iterations", 10}};
    spec.sampler_kind = "onehot_gibbs";
    spec.sampler.beta_schedule = geometric_schedule(0.1, 10.0, 16);
    spec.sampler.sweeps_per_beta = 4;
    spec.sampler.read_beta = 10.0;
    spec.sampler.n_samples = 100;
    spec.solver.expectation_mode = ExpectationMode::kSampleMean;
    spec.solver.eta_grid = {0.01, 0.03, 0.1, 0.3};
    spec.solver.tolerance = 1e-9;
    spec.solver.max_iterations = 30;
  } else if (name == "double_constraint") {
    spec.experiment = Experiment::kDoubleConstraint;
    spec.params = json{{"l", 45}};
    spec.sampler_kind = "gibbs";
    spec.sampler.beta_schedule = geometric_schedule(0.1, 150.0, 16);
    spec.sampler.read_beta = 150.0;
    spec.sampler.n_samples = 128;
    spec.solver.expectation_mode = ExpectationMode::kSampleMean;
    spec.solver.eta_grid = {3e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1};
    spec.solver.tolerance = 0.05;
    spec.solver.max_iterations = 2000;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return spec;
}

}  // namespace qlag::harness
