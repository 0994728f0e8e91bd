#pragma once

// Sampler backends over an EffectiveModel: exact field minimization, closed-form
// field expectations, annealed single-site heat-bath (Gibbs) sampling, and the
// feasible one-hot variant that hops between configurations satisfying every
// exactly-one group. The sampling distribution is Q(q) ~ exp(-beta * H(q)) with
// beta multiplying the whole effective Hamiltonian.
//
// Samplers are pure functions of (model, config); identical inputs give
// identical batches. Replica r draws from the stream seeded by seed^r.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlag/model.hpp"
#include "qlag/rng.hpp"

namespace qlag {

inline std::vector<double> geometric_schedule(double beta0, double beta1, std::uint32_t stages) {
  if (!(beta0 > 0.0) || !(beta1 >= beta0) || stages < 1)
    throw std::invalid_argument("bad schedule parameters");
  std::vector<double> betas(stages);
  if (stages == 1) {
    betas[0] = beta1;
    return betas;
  }
  const double ratio = std::pow(beta1 / beta0, 1.0 / (stages - 1));
  double b = beta0;
  for (std::uint32_t s = 0; s < stages; ++s) {
    betas[s] = b;
    b *= ratio;
  }
  betas.back() = beta1;
  return betas;
}

struct SamplerConfig {
  std::vector<double> beta_schedule;  // monotone nondecreasing inverse temperatures
  std::uint32_t sweeps_per_beta = 10;
  std::uint32_t n_samples = 100;
  std::uint64_t seed = 0;
  double read_beta = 0.0;  // must equal beta_schedule.back()

  static SamplerConfig defaults(std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.beta_schedule = geometric_schedule(0.1, 50.0, 32);
    cfg.sweeps_per_beta = 10;
    cfg.n_samples = 100;
    cfg.seed = seed;
    cfg.read_beta = cfg.beta_schedule.back();
    return cfg;
  }

  void validate() const {
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    if (beta_schedule.empty()) throw std::invalid_argument("beta schedule is empty");
    double prev = 0.0;
    for (double b : beta_schedule) {
      if (!(b >= 0.0)) throw std::invalid_argument("beta must be >= 0");
      if (b < prev) throw std::invalid_argument("beta schedule must be nondecreasing");
      prev = b;
    }
    if (read_beta != beta_schedule.back())
      throw std::invalid_argument("read_beta must equal the final schedule beta");
  }
};

struct SampleBatch {
  std::vector<BinaryVector> samples;
  std::vector<double> energies;  // effective-model energies, same order
  std::string sampler_id;

  std::size_t size() const { return samples.size(); }
};

namespace detail {

// Dense view of an EffectiveModel for the sweep loops. Linear iteration order
// matches the sparse map order, so energies agree bitwise with evaluate().
struct CompiledModel {
  std::uint32_t n = 0;
  std::vector<double> linear;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;
  double constant = 0.0;
  bool field_only = true;
};

inline CompiledModel compile(const EffectiveModel& m) {
  CompiledModel cm;
  cm.n = m.n_vars;
  cm.linear.assign(cm.n, 0.0);
  cm.adj.resize(cm.n);
  cm.constant = m.objective.constant;
  for (const auto& [i, c] : m.objective.linear) {
    if (i >= cm.n) throw std::invalid_argument("model index out of range");
    cm.linear[i] = c;
  }
  for (const auto& [ij, c] : m.objective.quadratic) {
    if (ij.second >= cm.n) throw std::invalid_argument("model index out of range");
    cm.adj[ij.first].push_back({ij.second, c});
    cm.adj[ij.second].push_back({ij.first, c});
    cm.field_only = false;
  }
  return cm;
}

inline double energy(const CompiledModel& cm, const BinaryVector& q) {
  double e = cm.constant;
  for (std::uint32_t i = 0; i < cm.n; ++i) {
    if (!q[i]) continue;
    e += cm.linear[i];
    for (const auto& [j, w] : cm.adj[i])
      if (j > i && q[j]) e += w;
  }
  return e;
}

inline double local_field(const CompiledModel& cm, const BinaryVector& q, std::uint32_t i) {
  double f = cm.linear[i];
  for (const auto& [j, w] : cm.adj[i])
    if (q[j]) f += w;
  return f;
}

// P(q_i = 1 | rest) for energy gap delta = E(q_i=1) - E(q_i=0).
inline double heat_bath_p1(double beta, double delta) {
  return 1.0 / (1.0 + std::exp(beta * delta));
}

}  // namespace detail

// Exact global minimizer of a field-only model: q_i = 1 iff linear_i < 0
// (ties -> 0); within each one-hot group exactly the member with the smallest
// linear coefficient is set (ties -> lowest index).
inline BinaryVector exact_field_minimize(const EffectiveModel& m) {
  if (!m.objective.field_only())
    throw std::invalid_argument("exact_field_minimize requires a field-only model");
  const auto cm = detail::compile(m);
  BinaryVector q(cm.n);
  std::vector<std::uint8_t> grouped(cm.n, 0);
  for (const auto& group : m.onehot_groups)
    for (std::uint32_t i : group) grouped[i] = 1;
  for (std::uint32_t i = 0; i < cm.n; ++i)
    if (!grouped[i]) q[i] = cm.linear[i] < 0.0 ? 1 : 0;
  for (const auto& group : m.onehot_groups) {
    std::uint32_t best = group[0];
    for (std::uint32_t i : group)
      if (cm.linear[i] < cm.linear[best]) best = i;
    for (std::uint32_t i : group) q[i] = (i == best) ? 1 : 0;
  }
  return q;
}

// Closed-form means of the field-only Boltzmann distribution at the given beta:
// <q_i> = 1/(1+exp(beta*linear_i)); grouped indices get the softmax
// exp(-beta*linear_i) / sum over the group.
inline std::vector<double> exact_field_expectation(const EffectiveModel& m, double beta) {
  if (!m.objective.field_only())
    throw std::invalid_argument("exact_field_expectation requires a field-only model");
  const auto cm = detail::compile(m);
  std::vector<double> mean(cm.n);
  std::vector<std::uint8_t> grouped(cm.n, 0);
  for (const auto& group : m.onehot_groups)
    for (std::uint32_t i : group) grouped[i] = 1;
  for (std::uint32_t i = 0; i < cm.n; ++i)
    if (!grouped[i]) mean[i] = detail::heat_bath_p1(beta, cm.linear[i]);
  for (const auto& group : m.onehot_groups) {
    double lo = cm.linear[group[0]];
    for (std::uint32_t i : group) lo = std::min(lo, cm.linear[i]);
    double z = 0.0;
    for (std::uint32_t i : group) z += std::exp(-beta * (cm.linear[i] - lo));
    for (std::uint32_t i : group) mean[i] = std::exp(-beta * (cm.linear[i] - lo)) / z;
  }
  return mean;
}

// Annealed heat-bath sampling: n_samples independent restarts from uniform
// random configurations, swept in ascending index order through the beta
// schedule, recorded after the final stage (read_beta). Field-only models are
// sampled directly from the exact product distribution at read_beta, which is
// the same distribution the sweep chain lands in.
inline SampleBatch gibbs_sample(const EffectiveModel& m, const SamplerConfig& cfg) {
  cfg.validate();
  if (!m.onehot_groups.empty())
    throw std::invalid_argument(
        "model has one-hot groups; use onehot_gibbs_sample or penalize_onehot");
  const auto cm = detail::compile(m);
  SampleBatch batch;
  batch.sampler_id = "gibbs";
  batch.samples.reserve(cfg.n_samples);
  batch.energies.reserve(cfg.n_samples);

  if (cm.field_only) {
    std::vector<double> p1(cm.n);
    for (std::uint32_t i = 0; i < cm.n; ++i)
      p1[i] = detail::heat_bath_p1(cfg.read_beta, cm.linear[i]);
    for (std::uint32_t r = 0; r < cfg.n_samples; ++r) {
      Rng rng(cfg.seed ^ r);
      BinaryVector q(cm.n);
      for (std::uint32_t i = 0; i < cm.n; ++i) q[i] = rng.uniform() < p1[i] ? 1 : 0;
      batch.energies.push_back(detail::energy(cm, q));
      batch.samples.push_back(std::move(q));
    }
    return batch;
  }

  for (std::uint32_t r = 0; r < cfg.n_samples; ++r) {
    Rng rng(cfg.seed ^ r);
    BinaryVector q(cm.n);
    for (std::uint32_t i = 0; i < cm.n; ++i) q[i] = rng.coin() ? 1 : 0;
    for (double beta : cfg.beta_schedule) {
      for (std::uint32_t s = 0; s < cfg.sweeps_per_beta; ++s) {
        for (std::uint32_t i = 0; i < cm.n; ++i) {
          const double delta = detail::local_field(cm, q, i);
          q[i] = rng.uniform() < detail::heat_bath_p1(beta, delta) ? 1 : 0;
        }
      }
    }
    batch.energies.push_back(detail::energy(cm, q));
    batch.samples.push_back(std::move(q));
  }
  return batch;
}

// Heat-bath sampling restricted to configurations satisfying every one-hot
// group: each group is resampled as a categorical (option weight
// ~ exp(-beta * option field), conditioned on everything outside the group),
// ungrouped indices get ordinary single-site updates. Every emitted sample
// satisfies every group exactly.
inline SampleBatch onehot_gibbs_sample(const EffectiveModel& m, const SamplerConfig& cfg) {
  cfg.validate();
  const auto cm = detail::compile(m);
  constexpr std::uint32_t kNoGroup = 0xFFFFFFFFu;
  std::vector<std::uint32_t> group_of(cm.n, kNoGroup);
  for (std::size_t g = 0; g < m.onehot_groups.size(); ++g) {
    if (m.onehot_groups[g].empty()) throw std::invalid_argument("empty one-hot group");
    for (std::uint32_t i : m.onehot_groups[g]) {
      if (i >= cm.n) throw std::invalid_argument("group index out of range");
      if (group_of[i] != kNoGroup)
        throw std::invalid_argument("index appears in two one-hot groups");
      group_of[i] = static_cast<std::uint32_t>(g);
    }
  }

  // Sweep plan: ascending index order, a group fires at its first member.
  struct Action {
    bool is_group;
    std::uint32_t id;  // group id or site index
  };
  std::vector<Action> plan;
  {
    std::vector<std::uint8_t> fired(m.onehot_groups.size(), 0);
    for (std::uint32_t i = 0; i < cm.n; ++i) {
      const std::uint32_t g = group_of[i];
      if (g == kNoGroup) {
        plan.push_back({false, i});
      } else if (!fired[g]) {
        fired[g] = 1;
        plan.push_back({true, g});
      }
    }
  }

  const auto group_update = [&](BinaryVector& q, Rng& rng, double beta, std::uint32_t g) {
    const auto& group = m.onehot_groups[g];
    thread_local std::vector<double> weights;
    weights.assign(group.size(), 0.0);
    double lo = 0.0;
    for (std::size_t a = 0; a < group.size(); ++a) {
      const std::uint32_t i = group[a];
      double f = cm.linear[i];
      for (const auto& [j, w] : cm.adj[i])
        if (group_of[j] != g && q[j]) f += w;
      weights[a] = f;
      if (a == 0 || f < lo) lo = f;
    }
    double z = 0.0;
    for (double& w : weights) {
      w = std::exp(-beta * (w - lo));
      z += w;
    }
    const double u = rng.uniform() * z;
    double acc = 0.0;
    std::size_t pick = group.size() - 1;
    for (std::size_t a = 0; a < group.size(); ++a) {
      acc += weights[a];
      if (u < acc) {
        pick = a;
        break;
      }
    }
    for (std::size_t a = 0; a < group.size(); ++a) q[group[a]] = (a == pick) ? 1 : 0;
  };

  SampleBatch batch;
  batch.sampler_id = "onehot_gibbs";
  batch.samples.reserve(cfg.n_samples);
  batch.energies.reserve(cfg.n_samples);
  for (std::uint32_t r = 0; r < cfg.n_samples; ++r) {
    Rng rng(cfg.seed ^ r);
    BinaryVector q(cm.n);
    for (const auto& action : plan) {
      if (action.is_group) {
        const auto& group = m.onehot_groups[action.id];
        q[group[rng.uniform_int(static_cast<std::uint32_t>(group.size()))]] = 1;
      } else {
        q[action.id] = rng.coin() ? 1 : 0;
      }
    }
    if (cm.field_only) {
      // One pass at read_beta is an exact draw from the product of categoricals.
      for (const auto& action : plan) {
        if (action.is_group) {
          group_update(q, rng, cfg.read_beta, action.id);
        } else {
          q[action.id] =
              rng.uniform() < detail::heat_bath_p1(cfg.read_beta, cm.linear[action.id]) ? 1 : 0;
        }
      }
    } else {
      for (double beta : cfg.beta_schedule) {
        for (std::uint32_t s = 0; s < cfg.sweeps_per_beta; ++s) {
          for (const auto& action : plan) {
            if (action.is_group) {
              group_update(q, rng, beta, action.id);
            } else {
              const double delta = detail::local_field(cm, q, action.id);
              q[action.id] = rng.uniform() < detail::heat_bath_p1(beta, delta) ? 1 : 0;
            }
          }
        }
      }
    }
    for (const auto& group : m.onehot_groups) {
      std::uint32_t count = 0;
      for (std::uint32_t i : group) count += q[i];
      if (count != 1) throw std::logic_error("one-hot sampler emitted an infeasible sample");
    }
    batch.energies.push_back(detail::energy(cm, q));
    batch.samples.push_back(std::move(q));
  }
  return batch;
}

// Empirical mean of each F_k over the batch.
inline std::vector<double> estimate_expectations(const SampleBatch& batch, const ProblemView& view) {
  if (batch.samples.empty()) throw std::invalid_argument("empty sample batch");
  std::vector<double> exp(view.constraints.size(), 0.0);
  for (std::size_t k = 0; k < view.constraints.size(); ++k) {
    double acc = 0.0;
    for (const auto& q : batch.samples) acc += view.constraint_value(k, q);
    exp[k] = acc / static_cast<double>(batch.samples.size());
  }
  return exp;
}

inline std::vector<double> estimate_expectations(const SampleBatch& batch,
                                                 const ConstrainedProblem& p) {
  return estimate_expectations(batch, ProblemView(p));
}

}  // namespace qlag
