#include <cmath>
#include <set>

#include "doctest.h"
#include "qlag/dual_ascent.hpp"
#include "qlag/model.hpp"
#include "qlag/samplers.hpp"

using namespace qlag;

namespace {

ConstrainedProblem kmin_problem(const std::vector<double>& fields, double k) {
  ConstrainedProblem p;
  p.n_vars = static_cast<std::uint32_t>(fields.size());
  LinearConstraint c;
  for (std::uint32_t i = 0; i < p.n_vars; ++i) {
    p.base.linear[i] = fields[i];
    c.coeffs[i] = 1.0;
  }
  c.target = k;
  p.constraints.push_back(c);
  return p;
}

SamplerFn gibbs_fn(SamplerConfig base) {
  return [base](const EffectiveModel& m, std::uint64_t seed) {
    SamplerConfig cfg = base;
    cfg.seed = seed;
    return gibbs_sample(m, cfg);
  };
}

SampleBatch batch_of(std::initializer_list<BinaryVector> samples) {
  SampleBatch b;
  for (const auto& q : samples) {
    b.samples.push_back(q);
    b.energies.push_back(0.0);
  }
  return b;
}

}  // namespace

TEST_SUITE("dual_ascent") {
  TEST_CASE("track_best examples") {
    // f0 = q0 + 2 q1 + 4 q2, constraint q0 + q1 + q2 = 1.
    ConstrainedProblem p;
    p.n_vars = 3;
    p.base.linear = {{0, 1.0}, {1, 2.0}, {2, 4.0}};
    LinearConstraint c;
    c.coeffs[0] = c.coeffs[1] = c.coeffs[2] = 1.0;
    c.target = 1.0;
    p.constraints.push_back(c);

    // Feasible incumbent vs better feasible batch entry.
    Incumbent incumbent{BinaryVector{0, 0, 1}, solution_energy(p, BinaryVector{0, 0, 1}), true};
    auto best = track_best(batch_of({BinaryVector{0, 1, 0}}), p, incumbent);
    CHECK(best.config == BinaryVector{0, 1, 0});

    // Infeasible batch entries never displace a feasible incumbent.
    best = track_best(batch_of({BinaryVector{0, 0, 0}}), p, incumbent);
    CHECK(best.config == incumbent.config);
    CHECK(best.feasible);

    // Empty incumbent takes the batch best.
    best = track_best(batch_of({BinaryVector{1, 1, 1}, BinaryVector{1, 0, 0}}), p, std::nullopt);
    CHECK(best.config == BinaryVector{1, 0, 0});
    CHECK(best.feasible);

    CHECK_THROWS_AS(track_best(SampleBatch{}, p, std::nullopt), std::invalid_argument);
  }

  TEST_CASE("line_search picks the smallest step that moves toward feasibility") {
    // Piecewise-constant residual: fields (0.2, 0.4, 0.6), target sum = 2.
    // Stepping nu' = eta * 2 flips nothing until eta = 0.3 (nu' = 0.6), which
    // reaches residual 0; eta = 1 overshoots to all-ones (residual 1).
    auto p = kmin_problem({0.2, 0.4, 0.6}, 2.0);
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kExactField;
    cfg.eta_grid = {0.01, 0.03, 0.1, 0.3, 1.0};
    std::optional<Incumbent> incumbent;
    const auto outcome =
        line_search(p, MultiplierState::zeros(1), {2.0}, nullptr, cfg, 0, &incumbent);
    CHECK(outcome.eta == 0.3);
    CHECK(outcome.score == 0.0);
    CHECK(incumbent.has_value());
  }

  TEST_CASE("line_search tie breaks to the smaller eta") {
    // f0 pins q = (1); the constraint is already met for every candidate.
    ConstrainedProblem p;
    p.n_vars = 1;
    p.base.linear[0] = -1.0;
    LinearConstraint c;
    c.coeffs[0] = 1.0;
    c.target = 1.0;
    p.constraints.push_back(c);
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kExactField;
    cfg.eta_grid = {0.01, 0.03, 0.1, 0.3, 1.0};
    const auto outcome = line_search(p, MultiplierState::zeros(1), {1.0}, nullptr, cfg, 0);
    CHECK(outcome.eta == 0.01);
    CHECK(outcome.score == 0.0);

    SolverConfig degenerate = cfg;
    degenerate.eta_grid = {0.1};
    CHECK(line_search(p, MultiplierState::zeros(1), {1.0}, nullptr, degenerate, 0).eta == 0.1);

    CHECK_THROWS_AS(line_search(p, MultiplierState::zeros(1), {0.0}, nullptr, cfg, 0),
                    std::invalid_argument);
  }

  TEST_CASE("solve: K-min with exact-field expectations reaches the sorting oracle") {
    Rng rng(21);
    std::vector<double> fields(8);
    for (auto& h : fields) h = rng.uniform();
    auto p = kmin_problem(fields, 3.0);

    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kExactField;
    cfg.eta_grid = {1e-3, 3e-3, 0.01, 0.03, 0.1, 0.3, 1.0};
    cfg.tolerance = 0.0;
    cfg.max_iterations = 100;
    const auto result = solve(p, nullptr, MultiplierState::zeros(1), cfg);

    std::vector<std::pair<double, std::uint32_t>> order;
    for (std::uint32_t i = 0; i < 8; ++i) order.push_back({fields[i], i});
    std::sort(order.begin(), order.end());
    BinaryVector oracle(8);
    for (int j = 0; j < 3; ++j) oracle[order[j].second] = 1;

    CHECK(result.converged);
    CHECK(result.incumbent_feasible);
    CHECK(result.incumbent == oracle);
    CHECK(result.incumbent_energy == solution_energy(p, oracle));
    CHECK(result.trajectory.back().residual_norm == 0.0);
  }

  TEST_CASE("solve: two equal numbers partition perfectly") {
    // Spin form: n = (1, 1), sum n_i sigma_i = 0; perfect split exists.
    ConstrainedProblem p;
    p.n_vars = 2;
    p.constraints.push_back(spin_constraint({{0, 1.0}, {1, 1.0}}, 0.0));
    p.spin_encoded = true;

    SamplerConfig sampler = SamplerConfig::defaults(0);
    sampler.n_samples = 50;
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kSampleMean;
    cfg.eta_grid = {0.01, 0.03, 0.1, 0.3};
    cfg.tolerance = 0.5;
    cfg.max_iterations = 60;
    cfg.seed = 5;
    const auto result = solve(p, gibbs_fn(sampler), MultiplierState{{0.2}, 0}, cfg);
    CHECK(result.converged);
    CHECK(result.incumbent_energy == 0.0);
    const auto q = result.incumbent;
    CHECK(q[0] + q[1] == 1);
  }

  TEST_CASE("solve: soft-field fixed point on a 3-variable constraint") {
    // f0 = 0, constraint q0+q1+q2 = 1, soft expectations at beta = 5:
    // <F>(nu) = 3 logistic(5 nu); the saddle solves 3 logistic(5 nu*) = 1.
    auto p = kmin_problem({0.0, 0.0, 0.0}, 1.0);
    const double beta = 5.0;
    double lo = -2.0, hi = 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double f = 3.0 / (1.0 + std::exp(-beta * mid));
      (f < 1.0 ? lo : hi) = mid;
    }
    const double nu_star = 0.5 * (lo + hi);
    CHECK(nu_star == doctest::Approx(-std::log(2.0) / 5.0).epsilon(1e-9));

    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kSoftField;
    cfg.soft_beta = beta;
    cfg.eta_grid = {0.01, 0.03, 0.1, 0.3, 1.0};
    cfg.tolerance = 1e-7;
    cfg.max_iterations = 60;
    const auto result = solve(p, nullptr, MultiplierState::zeros(1), cfg);

    // Monotone approach: |nu_t - nu*| never increases.
    double prev = std::abs(result.trajectory.front().nu[0] - nu_star);
    for (const auto& rec : result.trajectory) {
      const double d = std::abs(rec.nu[0] - nu_star);
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
    CHECK(result.trajectory.back().residual_norm <= 1e-6);
  }

  TEST_CASE("solve: zero gradient at the saddle keeps nu fixed") {
    // C = 1.5 with symmetric soft expectations 3 * 0.5 = 1.5 at nu = 0: the
    // gradient vanishes exactly while no feasible configuration exists.
    auto p = kmin_problem({0.0, 0.0, 0.0}, 1.5);
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kSoftField;
    cfg.soft_beta = 3.0;
    cfg.tolerance = 1e-12;
    cfg.max_iterations = 5;
    const auto result = solve(p, nullptr, MultiplierState::zeros(1), cfg);
    CHECK_FALSE(result.converged);
    CHECK(result.iterations_used == 5);
    for (const auto& rec : result.trajectory) {
      CHECK(rec.nu[0] == 0.0);
      CHECK(rec.eta == 0.0);
      CHECK_FALSE(rec.incumbent_feasible);
    }
  }

  TEST_CASE("one-step algebra holds exactly on recorded trajectories") {
    ConstrainedProblem p;
    p.n_vars = 12;
    std::map<std::uint32_t, double> nums;
    for (std::uint32_t i = 0; i < 12; ++i) nums[i] = static_cast<double>(i + 1) / 12.0;
    p.constraints.push_back(spin_constraint(nums, 0.0));
    p.spin_encoded = true;

    SamplerConfig sampler = SamplerConfig::defaults(0);
    sampler.n_samples = 64;
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kSampleMean;
    cfg.eta_grid = {1e-3, 0.01, 0.03, 0.1};
    cfg.tolerance = 0.2;
    cfg.max_iterations = 40;
    cfg.seed = 9;
    const auto result = solve(p, gibbs_fn(sampler), MultiplierState{{0.2}, 0}, cfg);
    REQUIRE(result.trajectory.size() >= 2);
    for (std::size_t t = 0; t + 1 < result.trajectory.size(); ++t) {
      const auto& cur = result.trajectory[t];
      const auto& next = result.trajectory[t + 1];
      for (std::size_t k = 0; k < cur.nu.size(); ++k) {
        const double expected =
            cur.nu[k] + cur.eta * (p.constraints[k].target - cur.expectations[k]);
        CHECK(next.nu[k] == expected);  // bitwise
      }
    }
    // Incumbent energy is nonincreasing; feasibility is sticky.
    double prev_energy = result.trajectory.front().penalty_energy_best;
    bool seen_feasible = false;
    for (const auto& rec : result.trajectory) {
      CHECK(rec.penalty_energy_best <= prev_energy + 1e-15);
      if (seen_feasible) CHECK(rec.incumbent_feasible);
      seen_feasible = seen_feasible || rec.incumbent_feasible;
      prev_energy = rec.penalty_energy_best;
    }
  }

  TEST_CASE("convergence implies exact integral constraints") {
    Rng rng(4);
    std::vector<double> fields(10);
    for (auto& h : fields) h = rng.uniform();
    auto p = kmin_problem(fields, 3.0);
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kExactField;
    cfg.eta_grid = {1e-3, 0.01, 0.1, 0.3, 1.0};
    cfg.tolerance = 0.0;
    cfg.max_iterations = 100;
    const auto result = solve(p, nullptr, MultiplierState::zeros(1), cfg);
    REQUIRE(result.converged);
    CHECK(constraint_values(p, result.incumbent)[0] == 3.0);
  }

  TEST_CASE("expectation is nondecreasing in its own multiplier") {
    // Exhaustive Boltzmann averages on random field-only single-constraint
    // problems: d<F>/dnu = beta Var(F) >= 0.
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
      const std::uint32_t n = 6 + static_cast<std::uint32_t>(trial);
      ConstrainedProblem p;
      p.n_vars = n;
      LinearConstraint c;
      for (std::uint32_t i = 0; i < n; ++i) {
        p.base.linear[i] = rng.uniform(-1.0, 1.0);
        c.coeffs[i] = rng.uniform(-1.0, 1.0);
        if (c.coeffs[i] == 0.0) c.coeffs[i] = 0.5;
      }
      c.target = 0.0;
      p.constraints.push_back(c);
      const double beta = 1.3;
      double prev = -1e300;
      for (double nu = -2.0; nu <= 2.0; nu += 0.25) {
        const auto m = build_effective(p, MultiplierState{{nu}, 0});
        double z = 0.0, f_mean = 0.0;
        BinaryVector q(n);
        for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
          for (std::uint32_t i = 0; i < n; ++i)
            q[i] = static_cast<std::uint8_t>((mask >> i) & 1);
          const double w = std::exp(-beta * evaluate(m.objective, q));
          z += w;
          f_mean += w * constraint_value(p.constraints[0], q);
        }
        f_mean /= z;
        CHECK(f_mean >= prev - 1e-9);
        prev = f_mean;
      }
    }
  }

  TEST_CASE("sampler failures carry iteration context") {
    auto p = kmin_problem({0.1, 0.2}, 1.0);
    SolverConfig cfg;
    cfg.expectation_mode = ExpectationMode::kSampleMean;
    cfg.max_iterations = 3;
    const SamplerFn broken = [](const EffectiveModel&, std::uint64_t) -> SampleBatch {
      throw std::runtime_error("backend offline");
    };
    try {
      solve(p, broken, MultiplierState::zeros(1), cfg);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      const std::string message = e.what();
      CHECK(message.find("iteration") != std::string::npos);
      CHECK(message.find("backend offline") != std::string::npos);
    }
  }

  TEST_CASE("config validation") {
    auto p = kmin_problem({0.1}, 1.0);
    SolverConfig cfg;
    cfg.eta_grid.clear();
    CHECK_THROWS_AS(solve(p, nullptr, MultiplierState::zeros(1), cfg), std::invalid_argument);
    cfg = SolverConfig{};
    CHECK_THROWS_AS(solve(p, nullptr, MultiplierState::zeros(2), cfg), std::invalid_argument);
    cfg.expectation_mode = ExpectationMode::kSampleMean;
    CHECK_THROWS(solve(p, nullptr, MultiplierState::zeros(1), cfg));
  }
}
