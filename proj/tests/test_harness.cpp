#include <filesystem>

#include "doctest.h"
#include "qlag/harness.hpp"
#include "qlag/mock_server.hpp"

using namespace qlag;
using harness::RunSpec;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

RunSpec small_kmin_spec(const std::string& out) {
  RunSpec spec = harness::preset("kmin");
  spec.params["n"] = 100;
  spec.params["k"] = 5;
  spec.seed = 3;
  spec.replicas = 1;
  spec.output_dir = out;
  return spec;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("run: kmin converges to the sorting oracle and writes valid files") {
    TempDir dir("qlag_harness_run");
    const auto spec = small_kmin_spec(dir.str());
    const auto output = harness::run(spec);
    CHECK(output.all_converged);
    REQUIRE(output.results.size() == 1);
    const auto& result = output.results[0];
    CHECK(result.trajectory.back().residual_norm == 0.0);

    const auto built = harness::build_problem(spec, spec.generator_seed(0));
    const double threshold = harness::optimum_threshold(spec, built);
    CHECK(result.incumbent_energy <= threshold);

    CHECK(fs::exists(dir.path / "spec.json"));
    CHECK(fs::exists(dir.path / "r000" / "trajectory.csv"));
    CHECK(fs::exists(dir.path / "r000" / "result.json"));
    const std::string csv = read_text_file((dir.path / "r000" / "trajectory.csv").string());
    CHECK(csv.rfind("step,eta,residual_norm,mean_penalty_energy,min_penalty_energy,mse,nu_norm",
                    0) == 0);
    const json rj = json::parse(read_text_file((dir.path / "r000" / "result.json").string()));
    CHECK(rj.at("converged") == true);
  }

  TEST_CASE("run: identical explicit seeds give identical trajectories") {
    TempDir dir("qlag_harness_det");
    RunSpec spec = small_kmin_spec(dir.str());
    spec.replicas = 3;
    spec.seeds = {7, 7, 7};
    harness::run(spec);
    const auto t0 = read_text_file((dir.path / "r000" / "trajectory.csv").string());
    const auto t1 = read_text_file((dir.path / "r001" / "trajectory.csv").string());
    const auto t2 = read_text_file((dir.path / "r002" / "trajectory.csv").string());
    CHECK(t0 == t1);
    CHECK(t1 == t2);
  }

  TEST_CASE("run directories are append-only") {
    TempDir dir("qlag_harness_append");
    const auto spec = small_kmin_spec(dir.str());
    harness::run(spec);
    CHECK_THROWS_WITH_AS(harness::run(spec), doctest::Contains("append-only"),
                         std::runtime_error);
  }

  TEST_CASE("spec.json reloads and reruns bit-identically") {
    TempDir dir("qlag_harness_roundtrip");
    TempDir dir2("qlag_harness_roundtrip2");
    RunSpec spec = small_kmin_spec(dir.str());
    spec.replicas = 2;
    harness::run(spec);

    RunSpec reloaded =
        harness::runspec_from_json(json::parse(read_text_file((dir.path / "spec.json").string())));
    reloaded.output_dir = dir2.str();
    harness::run(reloaded);
    for (const char* r : {"r000", "r001"}) {
      CHECK(read_text_file((dir.path / r / "trajectory.csv").string()) ==
            read_text_file((dir2.path / r / "trajectory.csv").string()));
    }
  }

  TEST_CASE("unknown experiment names are rejected before anything is written") {
    CHECK_THROWS_AS(harness::experiment_from_name("annealing_silliness"), std::invalid_argument);
    json j{{"experiment", "annealing_silliness"}};
    CHECK_THROWS_AS(harness::runspec_from_json(j), std::invalid_argument);
  }

  TEST_CASE("histogram: number partition at N=16 always reaches the optimum") {
    TempDir dir("qlag_harness_hist");
    RunSpec spec = harness::preset("number_partition");
    spec.params["n"] = 16;
    spec.sampler.n_samples = 200;
    spec.solver.max_iterations = 400;
    spec.replicas = 20;
    spec.seed = 5;
    spec.output_dir = dir.str();
    const auto output = harness::histogram(spec);
    CHECK(output.overflow == 0);
    std::uint32_t total = 0;
    for (const auto& [iterations, count] : output.bins) {
      (void)iterations;
      total += count;
    }
    CHECK(total == 20);
    CHECK(fs::exists(dir.path / "histogram.csv"));
    const std::string csv = read_text_file((dir.path / "histogram.csv").string());
    CHECK(csv.rfind("iterations,count,ratio", 0) == 0);
  }

  TEST_CASE("histogram validation") {
    RunSpec spec = harness::preset("number_partition");
    spec.params["n"] = 16;
    spec.output_dir = "/tmp/qlag_hist_invalid";
    spec.replicas = 1;
    CHECK_THROWS_AS(harness::histogram(spec), std::invalid_argument);
    spec.replicas = 2;
    spec.seeds = {5, 5};
    CHECK_THROWS_WITH_AS(harness::histogram(spec), doctest::Contains("distinct"),
                         std::invalid_argument);
    RunSpec cs = harness::preset("structured_cs");
    cs.replicas = 2;
    cs.output_dir = "/tmp/qlag_hist_invalid";
    CHECK_THROWS_WITH_AS(harness::histogram(cs), doctest::Contains("known optimum"),
                         std::invalid_argument);
  }

  TEST_CASE("compare-traffic: single car gives four equal costs") {
    MockAnnealerServer server;
    server.start();
    TempDir dir("qlag_harness_cmp1");
    RunSpec spec = harness::preset("traffic");
    spec.params["grid_w"] = 4;
    spec.params["grid_h"] = 4;
    spec.params["cars"] = 1;
    spec.params["routes"] = 2;
    spec.solver.max_iterations = 8;
    spec.seed = 2;
    spec.output_dir = dir.str();
    spec.annealer_endpoint = server.url();
    const json out = harness::compare_traffic(spec);
    server.stop();

    const auto& methods = out.at("methods");
    REQUIRE(methods.size() == 4);
    const double reference = methods.at("shortest_path").at("cost").get<double>();
    for (const char* name : {"shortest_path", "deterministic", "gibbs_onehot", "annealer"}) {
      CHECK(methods.at(name).at("cost").get<double>() == doctest::Approx(reference));
      CHECK(methods.at(name).at("feasible") == true);
    }
    CHECK(fs::exists(dir.path / "comparison.json"));
  }

  TEST_CASE("compare-traffic: sampling methods reach the enumerated two-car optimum") {
    MockAnnealerServer server;
    server.start();
    TempDir dir("qlag_harness_cmp2");
    RunSpec spec = harness::preset("traffic");
    spec.params["grid_w"] = 4;
    spec.params["grid_h"] = 4;
    spec.params["cars"] = 2;
    spec.params["routes"] = 2;
    spec.solver.max_iterations = 15;
    spec.seed = 6;
    spec.output_dir = dir.str();
    spec.annealer_endpoint = server.url();
    const json out = harness::compare_traffic(spec);
    server.stop();

    // Enumerate the four assignments for the optimum.
    const auto gen = problems::gen_traffic(4, 4, 2, 2, spec.seed);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t a = 0; a < 2; ++a)
      for (std::uint32_t b = 0; b < 2; ++b) {
        BinaryVector q(gen.instance.n_vars());
        q[gen.instance.var(a, 0)] = 1;
        q[gen.instance.var(b, 1)] = 1;
        best = std::min(best, gen.instance.congestion_cost(q));
      }
    CHECK(out.at("methods").at("gibbs_onehot").at("cost").get<double>() == doctest::Approx(best));
    CHECK(out.at("methods").at("annealer").at("cost").get<double>() == doctest::Approx(best));
  }

  TEST_CASE("compare-traffic: unreachable mock marks the annealer column absent") {
    TempDir dir("qlag_harness_cmp3");
    RunSpec spec = harness::preset("traffic");
    spec.params["grid_w"] = 4;
    spec.params["grid_h"] = 4;
    spec.params["cars"] = 2;
    spec.params["routes"] = 2;
    spec.solver.max_iterations = 5;
    spec.seed = 6;
    spec.output_dir = dir.str();
    spec.annealer_endpoint = "127.0.0.1:1";
    const json out = harness::compare_traffic(spec);
    CHECK_FALSE(out.at("methods").contains("annealer"));
    CHECK(out.contains("annealer_error"));
    for (const char* name : {"shortest_path", "deterministic", "gibbs_onehot"})
      CHECK(out.at("methods").contains(name));
  }

  TEST_CASE("presets parse and validate") {
    for (const char* name : {"kmin", "kmin_gibbs", "number_partition", "linear_system",
                             "structured_cs", "traffic", "double_constraint"}) {
      const RunSpec spec = harness::preset(name);
      CHECK_NOTHROW(spec.validate());
      const RunSpec back = harness::runspec_from_json(harness::to_json(spec));
      CHECK(back.sampler_kind == spec.sampler_kind);
      CHECK(back.solver.eta_grid == spec.solver.eta_grid);
    }
    CHECK_THROWS_AS(harness::preset("nope"), std::invalid_argument);
  }
}
