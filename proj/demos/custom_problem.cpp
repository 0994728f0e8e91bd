// Minimal library walkthrough: build a small constrained problem by hand,
// solve it with the Gibbs backend, and print the trajectory.

#include <cstdio>

#include "qlag/dual_ascent.hpp"
#include "qlag/problems.hpp"

int main() {
  using namespace qlag;

  // Pick the 2 cheapest of 6 random items: f0 = sum h_i q_i, sum q_i = 2.
  ConstrainedProblem p;
  p.n_vars = 6;
  Rng rng(42);
  LinearConstraint cardinality;
  for (std::uint32_t i = 0; i < p.n_vars; ++i) {
    p.base.linear[i] = rng.uniform();
    cardinality.coeffs[i] = 1.0;
  }
  cardinality.target = 2.0;
  p.constraints.push_back(cardinality);

  SolverConfig cfg;
  cfg.expectation_mode = ExpectationMode::kSampleMean;
  cfg.eta_grid = {1e-3, 0.01, 0.03, 0.1, 0.3};
  cfg.tolerance = 0.5;
  cfg.max_iterations = 50;
  cfg.seed = 7;

  const SamplerFn sampler = [](const EffectiveModel& m, std::uint64_t seed) {
    SamplerConfig sc = SamplerConfig::defaults(seed);
    return gibbs_sample(m, sc);
  };

  const SolveResult result = solve(p, sampler, MultiplierState::zeros(1), cfg);
  for (const auto& rec : result.trajectory)
    std::printf("step %3u  nu=%+.4f  residual=%.3f  best=%.6f\n", rec.iteration, rec.nu[0],
                rec.residual_norm, rec.penalty_energy_best);

  const auto [oracle_q, oracle_e] = problems::brute_force(p);
  std::printf("incumbent %.6f (feasible=%d, converged=%d), brute force %.6f\n",
              result.incumbent_energy, result.incumbent_feasible, result.converged, oracle_e);
  return result.incumbent_energy == oracle_e ? 0 : 1;
}
