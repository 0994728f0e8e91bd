#pragma once

// Problem representation for constrained binary quadratic optimization:
// a sparse quadratic base objective f0(q) plus linear equality constraints
// F_k(q) = C_k carried either as squared penalties (penalty form) or as
// multiplier-linearized terms (effective model).
//
// All types are immutable once constructed and safe to share across threads;
// every operation here is a pure function of its arguments.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qlag {

struct BinaryVector {
  std::vector<std::uint8_t> bits;

  BinaryVector() = default;
  explicit BinaryVector(std::size_t n) : bits(n, 0) {}
  BinaryVector(std::initializer_list<int> init) {
    bits.reserve(init.size());
    for (int b : init) bits.push_back(static_cast<std::uint8_t>(b));
  }

  std::size_t size() const { return bits.size(); }
  std::uint8_t& operator[](std::size_t i) { return bits[i]; }
  std::uint8_t operator[](std::size_t i) const { return bits[i]; }
  bool operator==(const BinaryVector&) const = default;
};

struct SpinVector {
  std::vector<std::int8_t> spins;

  SpinVector() = default;
  explicit SpinVector(std::size_t n) : spins(n, -1) {}
  SpinVector(std::initializer_list<int> init) {
    spins.reserve(init.size());
    for (int s : init) spins.push_back(static_cast<std::int8_t>(s));
  }

  std::size_t size() const { return spins.size(); }
  std::int8_t& operator[](std::size_t i) { return spins[i]; }
  std::int8_t operator[](std::size_t i) const { return spins[i]; }
  bool operator==(const SpinVector&) const = default;
};

// q_i = (1 + sigma_i) / 2
inline SpinVector to_spin(const BinaryVector& q) {
  SpinVector s(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] > 1) throw std::invalid_argument("BinaryVector entry not in {0,1}");
    s[i] = static_cast<std::int8_t>(2 * q[i] - 1);
  }
  return s;
}

inline BinaryVector to_binary(const SpinVector& s) {
  BinaryVector q(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != 1 && s[i] != -1) throw std::invalid_argument("SpinVector entry not in {-1,+1}");
    q[i] = static_cast<std::uint8_t>((1 + s[i]) / 2);
  }
  return q;
}

// Sparse quadratic objective: sum_i linear_i q_i + sum_{i<j} quad_ij q_i q_j + constant.
// Ordered maps keep evaluation order (and hence floating-point sums) deterministic.
struct QuadraticObjective {
  std::map<std::uint32_t, double> linear;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> quadratic;
  double constant = 0.0;

  void add_linear(std::uint32_t i, double c) { linear[i] += c; }

  void add_quadratic(std::uint32_t i, std::uint32_t j, double c) {
    if (i == j) throw std::invalid_argument("quadratic term requires i != j");
    if (i > j) std::swap(i, j);
    quadratic[{i, j}] += c;
  }

  bool field_only() const { return quadratic.empty(); }

  std::uint32_t max_index() const {
    std::uint32_t m = 0;
    bool any = false;
    if (!linear.empty()) { m = linear.rbegin()->first; any = true; }
    if (!quadratic.empty()) {
      const auto j = quadratic.rbegin()->first.second;
      m = any ? std::max(m, j) : j;
      any = true;
    }
    return any ? m : 0;
  }
};

inline double evaluate(const QuadraticObjective& obj, const BinaryVector& q) {
  double e = obj.constant;
  for (const auto& [i, c] : obj.linear) {
    if (i >= q.size()) throw std::invalid_argument("objective index out of range");
    if (q[i]) e += c;
  }
  for (const auto& [ij, c] : obj.quadratic) {
    if (ij.second >= q.size()) throw std::invalid_argument("objective index out of range");
    if (q[ij.first] && q[ij.second]) e += c;
  }
  return e;
}

inline constexpr double kInfinitePenalty = std::numeric_limits<double>::infinity();

inline bool is_infinite_penalty(double w) { return std::isinf(w); }

// Linear equality constraint F(q) = sum_i coeffs_i q_i = target.
// penalty_weight > 0 encodes the squared-penalty strength; kInfinitePenalty
// (the default) means the constraint is hard. hard_onehot marks constraints
// enforced inside samplers as exactly-one groups instead of being linearized.
struct LinearConstraint {
  std::map<std::uint32_t, double> coeffs;
  double target = 0.0;
  double penalty_weight = kInfinitePenalty;
  bool hard_onehot = false;

  void validate() const {
    bool nonzero = false;
    for (const auto& [i, a] : coeffs) {
      (void)i;
      if (a != 0.0) { nonzero = true; break; }
    }
    if (!nonzero) throw std::invalid_argument("constraint has no nonzero coefficient");
    if (!(penalty_weight > 0.0))
      throw std::invalid_argument("penalty weight must be > 0 or infinite");
    if (hard_onehot) {
      if (!is_infinite_penalty(penalty_weight))
        throw std::invalid_argument("hard-onehot constraint must carry infinite penalty weight");
      if (target != 1.0)
        throw std::invalid_argument("hard-onehot constraint must have target 1");
      for (const auto& [i, a] : coeffs) {
        (void)i;
        if (a != 1.0)
          throw std::invalid_argument("hard-onehot constraint coefficients must all be 1");
      }
    }
  }
};

inline double constraint_value(const LinearConstraint& c, const BinaryVector& q) {
  double v = 0.0;
  for (const auto& [i, a] : c.coeffs) {
    if (i >= q.size()) throw std::invalid_argument("constraint index out of range");
    if (q[i]) v += a;
  }
  return v;
}

struct ConstrainedProblem {
  std::uint32_t n_vars = 0;
  QuadraticObjective base;
  std::vector<LinearConstraint> constraints;
  // Original encoding of the instance; energies are identical either way,
  // reports use the recorded convention.
  bool spin_encoded = false;

  void validate() const {
    if (n_vars == 0) throw std::invalid_argument("problem has no variables");
    if (!base.linear.empty() || !base.quadratic.empty()) {
      if (base.max_index() >= n_vars)
        throw std::invalid_argument("objective index out of range");
    }
    for (const auto& c : constraints) {
      c.validate();
      if (!c.coeffs.empty() && c.coeffs.rbegin()->first >= n_vars)
        throw std::invalid_argument("constraint index out of range");
    }
  }
};

// Builds the binary-form constraint equivalent to sum_i coeffs_i sigma_i = target
// over spins sigma = 2q - 1.
inline LinearConstraint spin_constraint(const std::map<std::uint32_t, double>& spin_coeffs,
                                        double spin_target,
                                        double penalty_weight = kInfinitePenalty) {
  LinearConstraint c;
  double shift = 0.0;
  for (const auto& [i, a] : spin_coeffs) {
    c.coeffs[i] = 2.0 * a;
    shift += a;
  }
  c.target = spin_target + shift;
  c.penalty_weight = penalty_weight;
  return c;
}

struct MultiplierState {
  std::vector<double> nu;
  std::uint64_t iteration = 0;

  static MultiplierState zeros(std::size_t k) { return MultiplierState{std::vector<double>(k, 0.0), 0}; }
};

// f0(q) - sum_k nu_k F_k(q) with the multiplier-independent part folded into
// objective.constant; hard-onehot constraints are kept as index groups.
struct EffectiveModel {
  std::uint32_t n_vars = 0;
  QuadraticObjective objective;
  std::vector<std::vector<std::uint32_t>> onehot_groups;
};

inline std::vector<double> constraint_values(const ConstrainedProblem& p, const BinaryVector& q) {
  if (q.size() != p.n_vars) throw std::invalid_argument("configuration length mismatch");
  std::vector<double> values;
  values.reserve(p.constraints.size());
  for (const auto& c : p.constraints) values.push_back(constraint_value(c, q));
  return values;
}

// f0(q) + 1/2 sum_k lambda_k (F_k(q) - C_k)^2. Rejects infinite weights.
inline double evaluate_penalty_form(const ConstrainedProblem& p, const BinaryVector& q) {
  if (q.size() != p.n_vars) throw std::invalid_argument("configuration length mismatch");
  for (const auto& c : p.constraints) {
    if (is_infinite_penalty(c.penalty_weight))
      throw std::invalid_argument("penalty form undefined for infinite penalty weight");
  }
  double e = evaluate(p.base, q);
  for (const auto& c : p.constraints) {
    const double v = constraint_value(c, q) - c.target;
    e += 0.5 * c.penalty_weight * v * v;
  }
  return e;
}

// Reporting/ranking energy: like the penalty form but with weight 1 standing in
// for infinite penalties, so every configuration gets a finite score and
// feasible ones score exactly f0 plus their finite-weight penalties.
inline double solution_energy(const ConstrainedProblem& p, const BinaryVector& q) {
  if (q.size() != p.n_vars) throw std::invalid_argument("configuration length mismatch");
  double e = evaluate(p.base, q);
  for (const auto& c : p.constraints) {
    const double v = constraint_value(c, q) - c.target;
    const double w = is_infinite_penalty(c.penalty_weight) ? 1.0 : c.penalty_weight;
    e += 0.5 * w * v * v;
  }
  return e;
}

// Hard constraints are those that define feasibility: infinite penalty weight
// or hard-onehot. Finite-weight constraints are soft cost terms.
inline bool constraint_is_hard(const LinearConstraint& c) {
  return c.hard_onehot || is_infinite_penalty(c.penalty_weight);
}

inline double max_hard_violation(const ConstrainedProblem& p, const BinaryVector& q) {
  double worst = 0.0;
  for (const auto& c : p.constraints) {
    if (!constraint_is_hard(c)) continue;
    worst = std::max(worst, std::abs(constraint_value(c, q) - c.target));
  }
  return worst;
}

inline bool is_feasible(const ConstrainedProblem& p, const BinaryVector& q, double eps = 1e-9) {
  return max_hard_violation(p, q) <= eps;
}

// Linearizes the constraints: objective = f0(q) - sum_k nu_k F_k(q) up to the
// additive constant sum_k (nu_k C_k - nu_k^2/(2 lambda_k)); hard-onehot
// constraints are excluded from folding and listed as groups.
inline EffectiveModel build_effective(const ConstrainedProblem& p, const MultiplierState& nu) {
  if (nu.nu.size() != p.constraints.size())
    throw std::invalid_argument("multiplier length mismatch");
  EffectiveModel m;
  m.n_vars = p.n_vars;
  m.objective.quadratic = p.base.quadratic;
  m.objective.constant = p.base.constant;
  // Dense accumulator; per index the fold order is base value then ascending
  // constraint order, the same arithmetic a map-based fold would do.
  std::vector<double> field(p.n_vars, 0.0);
  std::vector<std::uint8_t> present(p.n_vars, 0);
  for (const auto& [i, c] : p.base.linear) {
    field[i] = c;
    present[i] = 1;
  }
  for (std::size_t k = 0; k < p.constraints.size(); ++k) {
    const auto& c = p.constraints[k];
    if (c.hard_onehot) {
      std::vector<std::uint32_t> group;
      group.reserve(c.coeffs.size());
      for (const auto& [i, a] : c.coeffs) {
        (void)a;
        group.push_back(i);
      }
      m.onehot_groups.push_back(std::move(group));
      continue;
    }
    const double v = nu.nu[k];
    for (const auto& [i, a] : c.coeffs) {
      field[i] -= v * a;
      present[i] = 1;
    }
    m.objective.constant += v * c.target - v * v / (2.0 * c.penalty_weight);
  }
  auto hint = m.objective.linear.end();
  for (std::uint32_t i = 0; i < p.n_vars; ++i)
    if (present[i]) hint = m.objective.linear.emplace_hint(hint, i, field[i]);
  return m;
}

// Gradient of the dual objective: r_k = C_k - <F_k>.
inline std::vector<double> residual(const ConstrainedProblem& p,
                                    const std::vector<double>& expectations) {
  if (expectations.size() != p.constraints.size())
    throw std::invalid_argument("expectation length mismatch");
  std::vector<double> r(p.constraints.size());
  for (std::size_t k = 0; k < r.size(); ++k)
    r[k] = p.constraints[k].target - expectations[k];
  return r;
}

// Regularized variant: r_k = C_k - <F_k> - nu_k/lambda_k (the nu_k/lambda_k
// term vanishes for infinite weights).
inline std::vector<double> residual(const ConstrainedProblem& p,
                                    const std::vector<double>& expectations,
                                    const MultiplierState& nu) {
  if (nu.nu.size() != p.constraints.size())
    throw std::invalid_argument("multiplier length mismatch");
  std::vector<double> r = residual(p, expectations);
  for (std::size_t k = 0; k < r.size(); ++k)
    r[k] -= nu.nu[k] / p.constraints[k].penalty_weight;
  return r;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Flattened read-only view of a problem for batch scoring; building it once
// per batch avoids walking the sparse maps for every sample.
struct ProblemView {
  struct FlatConstraint {
    std::vector<std::pair<std::uint32_t, double>> coeffs;
    double target = 0.0;
    double weight = 1.0;  // 1.0 substituted for infinite penalties
    bool hard = false;
  };

  std::vector<std::pair<std::uint32_t, double>> linear;
  std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, double>> quadratic;
  double constant = 0.0;
  std::vector<FlatConstraint> constraints;

  explicit ProblemView(const ConstrainedProblem& p)
      : linear(p.base.linear.begin(), p.base.linear.end()),
        quadratic(p.base.quadratic.begin(), p.base.quadratic.end()),
        constant(p.base.constant) {
    constraints.reserve(p.constraints.size());
    for (const auto& c : p.constraints) {
      FlatConstraint fc;
      fc.coeffs.assign(c.coeffs.begin(), c.coeffs.end());
      fc.target = c.target;
      fc.weight = is_infinite_penalty(c.penalty_weight) ? 1.0 : c.penalty_weight;
      fc.hard = constraint_is_hard(c);
      constraints.push_back(std::move(fc));
    }
  }

  double base_energy(const BinaryVector& q) const {
    double e = constant;
    for (const auto& [i, c] : linear)
      if (q[i]) e += c;
    for (const auto& [ij, c] : quadratic)
      if (q[ij.first] && q[ij.second]) e += c;
    return e;
  }

  double constraint_value(std::size_t k, const BinaryVector& q) const {
    double v = 0.0;
    for (const auto& [i, a] : constraints[k].coeffs)
      if (q[i]) v += a;
    return v;
  }

  // solution_energy and max hard violation in a single constraint sweep.
  struct Score {
    double energy = 0.0;
    double hard_violation = 0.0;
  };
  Score score(const BinaryVector& q) const {
    Score s;
    s.energy = base_energy(q);
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const double d = constraint_value(k, q) - constraints[k].target;
      s.energy += 0.5 * constraints[k].weight * d * d;
      if (constraints[k].hard) s.hard_violation = std::max(s.hard_violation, std::abs(d));
    }
    return s;
  }
};

// Folds each one-hot group into an explicit quadratic penalty
// weight/2 (sum_g q_i - 1)^2 so the model can be handed to samplers that only
// understand plain QUBOs.
inline EffectiveModel penalize_onehot(const EffectiveModel& m, double weight) {
  if (!(weight > 0.0) || is_infinite_penalty(weight))
    throw std::invalid_argument("one-hot penalty weight must be finite and positive");
  EffectiveModel out;
  out.n_vars = m.n_vars;
  out.objective = m.objective;
  for (const auto& group : m.onehot_groups) {
    for (std::size_t a = 0; a < group.size(); ++a) {
      out.objective.linear[group[a]] += -0.5 * weight;
      for (std::size_t b = a + 1; b < group.size(); ++b)
        out.objective.add_quadratic(group[a], group[b], weight);
    }
    out.objective.constant += 0.5 * weight;
  }
  return out;
}

}  // namespace qlag
