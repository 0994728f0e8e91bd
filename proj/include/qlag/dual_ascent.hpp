#pragma once

// Iterative multiplier updates nu_{t+1} = nu_t + eta * (C - <F>_{Q_t}) with a
// pluggable sampler backend, optional residual-scored line search over a step
// grid, convergence detection, and incumbent tracking against the original
// penalty-form objective.
//
// The loop is strictly sequential across iterations; each iteration draws its
// batch from a fresh stream derived from (config seed, iteration index).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlag/model.hpp"
#include "qlag/rng.hpp"
#include "qlag/samplers.hpp"

namespace qlag {

enum class EtaMode { kFixed, kLineSearch };

enum class ExpectationMode {
  kSampleMean,  // empirical mean over a sampled batch
  kExactField,  // ground-state expectation of the field-only model
  kSoftField,   // closed-form Boltzmann means at soft_beta
};

using SamplerFn = std::function<SampleBatch(const EffectiveModel&, std::uint64_t seed)>;

struct SolverConfig {
  std::uint32_t max_iterations = 500;
  EtaMode eta_mode = EtaMode::kLineSearch;
  double fixed_eta = 0.1;
  std::vector<double> eta_grid = {0.01, 0.03, 0.1, 0.3, 1.0};
  double tolerance = 1e-6;  // max_k |C_k - <F_k>| for convergence
  ExpectationMode expectation_mode = ExpectationMode::kSampleMean;
  double soft_beta = 10.0;
  std::uint64_t seed = 0;
  double feasibility_eps = 1e-9;
  bool regularized = false;  // step uses C - <F> - nu/lambda instead of C - <F>

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (!(tolerance >= 0.0)) throw std::invalid_argument("tolerance must be >= 0");
    if (eta_mode == EtaMode::kLineSearch) {
      if (eta_grid.empty()) throw std::invalid_argument("eta grid is empty for line search");
      for (double e : eta_grid)
        if (!(e > 0.0)) throw std::invalid_argument("eta grid entries must be > 0");
    } else {
      if (!(fixed_eta > 0.0)) throw std::invalid_argument("fixed eta must be > 0");
    }
    if (expectation_mode == ExpectationMode::kSoftField && !(soft_beta > 0.0))
      throw std::invalid_argument("soft_beta must be > 0");
  }
};

struct IterationRecord {
  std::uint32_t iteration = 0;
  std::vector<double> nu;
  std::vector<double> expectations;
  double residual_norm = 0.0;  // max_k |C_k - <F_k>| of this record
  double eta = 0.0;            // step width applied after this record
  double penalty_energy_best = 0.0;
  bool incumbent_feasible = false;
  double batch_mean_energy = 0.0;  // solution_energy averaged over the batch
  double batch_min_energy = 0.0;
  BinaryVector best_sample;  // batch configuration with minimal solution_energy
};

struct SolveResult {
  BinaryVector incumbent;
  double incumbent_energy = 0.0;
  bool incumbent_feasible = false;
  std::vector<IterationRecord> trajectory;
  bool converged = false;
  std::uint32_t iterations_used = 0;
};

struct Incumbent {
  BinaryVector config;
  double energy = 0.0;
  bool feasible = false;
};

// Best of (current incumbent, best-in-batch) by solution_energy; feasible
// configurations strictly precede infeasible ones regardless of energy.
inline Incumbent track_best(const SampleBatch& batch, const ProblemView& view,
                            const std::optional<Incumbent>& current,
                            double feasibility_eps = 1e-9) {
  std::optional<Incumbent> best = current;
  for (const auto& q : batch.samples) {
    const auto score = view.score(q);
    Incumbent cand{q, score.energy, score.hard_violation <= feasibility_eps};
    if (!best || (cand.feasible && !best->feasible) ||
        (cand.feasible == best->feasible && cand.energy < best->energy)) {
      best = std::move(cand);
    }
  }
  if (!best) throw std::invalid_argument("track_best called with empty batch and no incumbent");
  return *best;
}

inline Incumbent track_best(const SampleBatch& batch, const ConstrainedProblem& p,
                            const std::optional<Incumbent>& current,
                            double feasibility_eps = 1e-9) {
  return track_best(batch, ProblemView(p), current, feasibility_eps);
}

namespace detail {

struct Evaluation {
  SampleBatch batch;
  std::vector<double> expectations;
};

// One expectation/batch evaluation at the given multipliers. In exact/soft
// modes the batch holds the exact field minimizer so incumbent tracking still
// sees a concrete configuration.
inline Evaluation estimate_at(const ConstrainedProblem& p, const ProblemView& view,
                              const MultiplierState& nu, const SolverConfig& cfg,
                              const SamplerFn& sampler, std::uint64_t seed) {
  Evaluation ev;
  const EffectiveModel m = build_effective(p, nu);
  switch (cfg.expectation_mode) {
    case ExpectationMode::kSampleMean: {
      if (!sampler) throw std::invalid_argument("sample_mean mode requires a sampler backend");
      ev.batch = sampler(m, seed);
      ev.expectations = estimate_expectations(ev.batch, view);
      break;
    }
    case ExpectationMode::kExactField: {
      BinaryVector q = exact_field_minimize(m);
      ev.batch.sampler_id = "exact_field";
      ev.batch.energies.push_back(evaluate(m.objective, q));
      ev.batch.samples.push_back(std::move(q));
      ev.expectations = constraint_values(p, ev.batch.samples[0]);
      break;
    }
    case ExpectationMode::kSoftField: {
      const std::vector<double> mean = exact_field_expectation(m, cfg.soft_beta);
      ev.expectations.reserve(view.constraints.size());
      for (const auto& c : view.constraints) {
        double f = 0.0;
        for (const auto& [i, a] : c.coeffs) f += a * mean[i];
        ev.expectations.push_back(f);
      }
      BinaryVector q = exact_field_minimize(m);
      ev.batch.sampler_id = "soft_field";
      ev.batch.energies.push_back(evaluate(m.objective, q));
      ev.batch.samples.push_back(std::move(q));
      break;
    }
  }
  return ev;
}

inline std::uint64_t iteration_seed(const SolverConfig& cfg, std::uint64_t iteration) {
  return mix_seed(cfg.seed, iteration);
}

}  // namespace detail

struct LineSearchOutcome {
  double eta = 0.0;
  double score = 0.0;  // residual norm after the winning step
  detail::Evaluation evaluation;
};

// Scores each grid eta by the residual norm after provisionally stepping
// nu' = nu + eta * gradient and re-estimating expectations at nu'; the winner
// (ties -> smaller eta) and its evaluation are returned so the batch can be
// reused for the next iteration. All candidate batches feed the incumbent.
inline LineSearchOutcome line_search(const ConstrainedProblem& p, const ProblemView& view,
                                     const MultiplierState& nu,
                                     const std::vector<double>& gradient,
                                     const SamplerFn& sampler, const SolverConfig& cfg,
                                     std::uint64_t seed,
                                     std::optional<Incumbent>* incumbent = nullptr) {
  if (max_abs(gradient) == 0.0) throw std::invalid_argument("line search needs a nonzero gradient");
  std::vector<double> grid = cfg.eta_grid;
  std::sort(grid.begin(), grid.end());
  std::optional<LineSearchOutcome> best;
  for (double eta : grid) {
    MultiplierState trial = nu;
    for (std::size_t k = 0; k < trial.nu.size(); ++k) trial.nu[k] += eta * gradient[k];
    detail::Evaluation ev = detail::estimate_at(p, view, trial, cfg, sampler, seed);
    if (incumbent) *incumbent = track_best(ev.batch, view, *incumbent, cfg.feasibility_eps);
    const double score = max_abs(residual(p, ev.expectations));
    if (!best || score < best->score) best = LineSearchOutcome{eta, score, std::move(ev)};
  }
  return *best;
}

inline LineSearchOutcome line_search(const ConstrainedProblem& p, const MultiplierState& nu,
                                     const std::vector<double>& gradient,
                                     const SamplerFn& sampler, const SolverConfig& cfg,
                                     std::uint64_t seed,
                                     std::optional<Incumbent>* incumbent = nullptr) {
  return line_search(p, ProblemView(p), nu, gradient, sampler, cfg, seed, incumbent);
}

// The main loop: build_effective -> estimate -> residual -> step, stopping
// early once the residual norm is within tolerance and a feasible incumbent
// exists. The incumbent is the best configuration seen across every batch
// (line-search evaluations included), feasible ones preferred.
inline SolveResult solve(const ConstrainedProblem& p, const SamplerFn& sampler,
                         const MultiplierState& nu0, const SolverConfig& cfg) {
  p.validate();
  cfg.validate();
  if (nu0.nu.size() != p.constraints.size())
    throw std::invalid_argument("initial multiplier length mismatch");

  MultiplierState nu = nu0;
  std::optional<Incumbent> incumbent;
  SolveResult result;
  const ProblemView view(p);

  const auto run_estimate = [&](std::uint64_t iteration) {
    try {
      return detail::estimate_at(p, view, nu, cfg, sampler, detail::iteration_seed(cfg, iteration));
    } catch (const std::exception& e) {
      throw std::runtime_error("dual_ascent iteration " + std::to_string(iteration) + ": " +
                               e.what());
    }
  };

  detail::Evaluation ev = run_estimate(0);
  for (std::uint32_t t = 0; t < cfg.max_iterations; ++t) {
    incumbent = track_best(ev.batch, view, incumbent, cfg.feasibility_eps);

    IterationRecord rec;
    rec.iteration = t;
    rec.nu = nu.nu;
    rec.expectations = ev.expectations;
    rec.residual_norm = max_abs(residual(p, ev.expectations));
    rec.penalty_energy_best = incumbent->energy;
    rec.incumbent_feasible = incumbent->feasible;
    {
      double acc = 0.0, lo = 0.0;
      std::size_t best_idx = 0;
      for (std::size_t s = 0; s < ev.batch.samples.size(); ++s) {
        const double e = view.score(ev.batch.samples[s]).energy;
        acc += e;
        if (s == 0 || e < lo) {
          lo = e;
          best_idx = s;
        }
      }
      rec.batch_mean_energy = acc / static_cast<double>(ev.batch.samples.size());
      rec.batch_min_energy = lo;
      rec.best_sample = ev.batch.samples[best_idx];
    }

    if (rec.residual_norm <= cfg.tolerance && incumbent->feasible) {
      rec.eta = 0.0;
      result.trajectory.push_back(std::move(rec));
      result.converged = true;
      break;
    }

    const std::vector<double> gradient = cfg.regularized
                                             ? residual(p, ev.expectations, nu)
                                             : residual(p, ev.expectations);
    double eta = 0.0;
    if (max_abs(gradient) == 0.0) {
      // Degenerate all-zero gradient with an infeasible incumbent: keep
      // iterating, the next iteration draws from a fresh stream.
      if (t + 1 < cfg.max_iterations) ev = run_estimate(t + 1);
    } else if (cfg.eta_mode == EtaMode::kFixed) {
      eta = cfg.fixed_eta;
      for (std::size_t k = 0; k < nu.nu.size(); ++k) nu.nu[k] += eta * gradient[k];
      if (t + 1 < cfg.max_iterations) ev = run_estimate(t + 1);
    } else {
      try {
        LineSearchOutcome ls = line_search(p, view, nu, gradient, sampler, cfg,
                                           detail::iteration_seed(cfg, t + 1), &incumbent);
        eta = ls.eta;
        for (std::size_t k = 0; k < nu.nu.size(); ++k) nu.nu[k] += eta * gradient[k];
        ev = std::move(ls.evaluation);
      } catch (const std::exception& e) {
        throw std::runtime_error("dual_ascent iteration " + std::to_string(t) + ": " + e.what());
      }
    }
    nu.iteration = t + 1;
    rec.eta = eta;
    result.trajectory.push_back(std::move(rec));
  }

  if (!incumbent) throw std::logic_error("solver finished without any batch");
  result.incumbent = incumbent->config;
  result.incumbent_energy = incumbent->energy;
  result.incumbent_feasible = incumbent->feasible;
  result.iterations_used = static_cast<std::uint32_t>(result.trajectory.size());
  return result;
}

}  // namespace qlag
