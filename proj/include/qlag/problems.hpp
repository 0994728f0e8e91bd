#pragma once

// Instance generators, exact oracles, and baseline solvers: K-min selection,
// number partitioning, linear inference, 2D structured compressed sensing,
// grid traffic assignment, the double-constraint (assignment) problem, the
// spectral linearization of a PSD QUBO matrix, exhaustive brute force, and a
// Hungarian assignment oracle. Generators are deterministic per seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qlag/model.hpp"
#include "qlag/rng.hpp"
#include "qlag/samplers.hpp"
#include "qlag/serialize.hpp"

namespace qlag::problems {

// ---------------------------------------------------------------------------
// K-min selection: f0 = sum h_i q_i with h_i ~ U(0,1), one cardinality
// constraint sum q_i = K.
inline ConstrainedProblem gen_kmin(std::uint32_t n, std::uint32_t k, std::uint64_t seed) {
  if (k < 1 || k > n) throw std::invalid_argument("K must satisfy 1 <= K <= N");
  Rng rng(seed);
  ConstrainedProblem p;
  p.n_vars = n;
  LinearConstraint c;
  for (std::uint32_t i = 0; i < n; ++i) {
    p.base.linear[i] = rng.uniform();
    c.coeffs[i] = 1.0;
  }
  c.target = static_cast<double>(k);
  p.constraints.push_back(std::move(c));
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Number partitioning: numbers n_i = pi(i)/N for a seeded permutation of 1..N,
// encoded in spin form as the single constraint sum n_i sigma_i = 0. Requires
// N(N+1)/2 even so a perfect partition can exist.
inline ConstrainedProblem gen_number_partition(std::uint32_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("N must be >= 2");
  if (n % 4 == 1 || n % 4 == 2)
    throw std::invalid_argument("N(N+1)/2 must be even (N = 1 or 2 mod 4 has no perfect partition)");
  Rng rng(seed);
  std::vector<std::uint32_t> perm(n);
  for (std::uint32_t i = 0; i < n; ++i) perm[i] = i + 1;
  shuffle(perm, rng);
  std::map<std::uint32_t, double> spin_coeffs;
  for (std::uint32_t i = 0; i < n; ++i)
    spin_coeffs[i] = static_cast<double>(perm[i]) / static_cast<double>(n);
  ConstrainedProblem p;
  p.n_vars = n;
  p.constraints.push_back(spin_constraint(spin_coeffs, 0.0));
  p.spin_encoded = true;
  p.validate();
  return p;
}

// Smallest nonzero residual energy of the N-number partition, (1/N)^2 / 2.
inline double np_residual_unit(std::uint32_t n) {
  return 0.5 / (static_cast<double>(n) * static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Linear inference y = A q0 with Gaussian A and a fair binary truth.
struct InferenceInstance {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::vector<double> matrix;  // row-major M x N
  BinaryVector truth;
  std::vector<double> output;

  double mse(const BinaryVector& q) const {
    if (q.size() != truth.size()) throw std::invalid_argument("length mismatch in mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double d = static_cast<double>(q[i]) - static_cast<double>(truth[i]);
      acc += d * d;
    }
    return acc / static_cast<double>(truth.size());
  }
};

struct InferenceProblem {
  InferenceInstance instance;
  ConstrainedProblem problem;
};

inline InferenceProblem gen_linear_system(std::uint32_t n, std::uint32_t m, std::uint64_t seed) {
  if (n < 1 || m < 1) throw std::invalid_argument("N and M must be >= 1");
  Rng rng(seed);
  InferenceProblem out;
  out.instance.n = n;
  out.instance.m = m;
  out.instance.matrix.resize(static_cast<std::size_t>(m) * n);
  for (std::uint32_t mu = 0; mu < m; ++mu)
    for (std::uint32_t i = 0; i < n; ++i)
      out.instance.matrix[static_cast<std::size_t>(mu) * n + i] = rng.gaussian();
  out.instance.truth = BinaryVector(n);
  for (std::uint32_t i = 0; i < n; ++i) out.instance.truth[i] = rng.coin() ? 1 : 0;

  out.problem.n_vars = n;
  out.instance.output.reserve(m);
  for (std::uint32_t mu = 0; mu < m; ++mu) {
    LinearConstraint c;
    for (std::uint32_t i = 0; i < n; ++i)
      c.coeffs[i] = out.instance.matrix[static_cast<std::size_t>(mu) * n + i];
    // Target computed through the same evaluation path used later, so the
    // truth is feasible bit-exactly.
    c.target = constraint_value(c, out.instance.truth);
    out.instance.output.push_back(c.target);
    out.problem.constraints.push_back(std::move(c));
  }
  out.problem.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Structured compressed sensing: connected blob truth on a width x height
// grid, nearest-neighbour prior in f0, round(alpha*N) Gaussian measurements.
struct CsOptions {
  double coupling = 1.0;    // prior strength; 0 disables the prior
  bool literal_sign = false;  // +J q_i q_j (penalizes neighbours) instead of -J
  double fill = 0.25;
};

inline InferenceProblem gen_structured_cs(std::uint32_t width, std::uint32_t height, double alpha,
                                          std::uint64_t seed, const CsOptions& options = {}) {
  if (width < 2 || height < 2) throw std::invalid_argument("degenerate grid");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  const std::uint32_t n = width * height;
  Rng rng(seed);

  // Random-walk blob growth until the target fill fraction.
  const std::uint32_t target =
      std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(options.fill * n)));
  BinaryVector truth(n);
  std::uint32_t x = rng.uniform_int(width);
  std::uint32_t y = rng.uniform_int(height);
  truth[y * width + x] = 1;
  std::uint32_t filled = 1;
  while (filled < target) {
    const std::uint32_t dir = rng.uniform_int(4);
    if (dir == 0 && x + 1 < width) ++x;
    else if (dir == 1 && x > 0) --x;
    else if (dir == 2 && y + 1 < height) ++y;
    else if (dir == 3 && y > 0) --y;
    std::uint8_t& cell = truth[y * width + x];
    if (!cell) {
      cell = 1;
      ++filled;
    }
  }

  InferenceProblem out;
  out.problem.n_vars = n;
  out.problem.spin_encoded = false;
  if (options.coupling != 0.0) {
    const double j = options.literal_sign ? options.coupling : -options.coupling;
    for (std::uint32_t gy = 0; gy < height; ++gy)
      for (std::uint32_t gx = 0; gx + 1 < width; ++gx)
        out.problem.base.add_quadratic(gy * width + gx, gy * width + gx + 1, j);
    for (std::uint32_t gy = 0; gy + 1 < height; ++gy)
      for (std::uint32_t gx = 0; gx < width; ++gx)
        out.problem.base.add_quadratic(gy * width + gx, (gy + 1) * width + gx, j);
  }

  const std::uint32_t m =
      std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(alpha * n)));
  out.instance.n = n;
  out.instance.m = m;
  out.instance.truth = truth;
  out.instance.matrix.resize(static_cast<std::size_t>(m) * n);
  for (std::uint32_t mu = 0; mu < m; ++mu)
    for (std::uint32_t i = 0; i < n; ++i)
      out.instance.matrix[static_cast<std::size_t>(mu) * n + i] = rng.gaussian();
  out.instance.output.reserve(m);
  for (std::uint32_t mu = 0; mu < m; ++mu) {
    LinearConstraint c;
    for (std::uint32_t i = 0; i < n; ++i)
      c.coeffs[i] = out.instance.matrix[static_cast<std::size_t>(mu) * n + i];
    c.target = constraint_value(c, truth);
    out.instance.output.push_back(c.target);
    out.problem.constraints.push_back(std::move(c));
  }
  out.problem.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Traffic assignment on a synthetic grid road network.
struct TrafficInstance {
  std::uint32_t n_cars = 0;
  std::uint32_t n_routes = 0;
  std::uint32_t segment_count = 0;
  // route_edges[car][route] = sorted segment ids used by that candidate route.
  std::vector<std::vector<std::vector<std::uint32_t>>> route_edges;

  std::uint32_t var(std::uint32_t route, std::uint32_t car) const {
    return car * n_routes + route;
  }
  std::uint32_t n_vars() const { return n_cars * n_routes; }
  std::size_t route_length(std::uint32_t route, std::uint32_t car) const {
    return route_edges[car][route].size();
  }

  // Direct 1/2 sum_e (sum_{mu,i} S_{e,mu,i} q_{mu,i})^2 from the occupancy
  // tensor; the independent check for the stored QuadraticObjective.
  double congestion_cost(const BinaryVector& q) const {
    if (q.size() != n_vars()) throw std::invalid_argument("assignment length mismatch");
    std::vector<double> load(segment_count, 0.0);
    for (std::uint32_t car = 0; car < n_cars; ++car)
      for (std::uint32_t route = 0; route < n_routes; ++route)
        if (q[var(route, car)])
          for (std::uint32_t e : route_edges[car][route]) load[e] += 1.0;
    double cost = 0.0;
    for (double l : load) cost += l * l;
    return 0.5 * cost;
  }
};

struct TrafficProblem {
  TrafficInstance instance;
  ConstrainedProblem problem;  // quadratic congestion f0 + hard one-hot per car
};

namespace detail {

struct GridNetwork {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> adjacency;  // (node, edge id)

  std::uint32_t nodes() const { return width * height; }
};

inline GridNetwork build_grid(std::uint32_t width, std::uint32_t height) {
  GridNetwork net;
  net.width = width;
  net.height = height;
  net.adjacency.resize(net.nodes());
  const auto add_edge = [&](std::uint32_t u, std::uint32_t v) {
    const auto id = static_cast<std::uint32_t>(net.edges.size());
    net.edges.push_back({u, v});
    net.adjacency[u].push_back({v, id});
    net.adjacency[v].push_back({u, id});
  };
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x + 1 < width; ++x)
      add_edge(y * width + x, y * width + x + 1);
  for (std::uint32_t y = 0; y + 1 < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x)
      add_edge(y * width + x, (y + 1) * width + x);
  return net;
}

// Dijkstra over edge weights; returns the edge ids of the path, empty if
// unreachable. Deterministic tie-break via (distance, node id) ordering.
inline std::vector<std::uint32_t> shortest_path(const GridNetwork& net,
                                                const std::vector<double>& weights,
                                                std::uint32_t from, std::uint32_t to) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(net.nodes(), inf);
  std::vector<std::uint32_t> via_edge(net.nodes(), 0);
  std::vector<std::uint32_t> via_node(net.nodes(), 0);
  std::vector<std::uint8_t> done(net.nodes(), 0);
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  dist[from] = 0.0;
  queue.push({0.0, from});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == to) break;
    for (const auto& [v, e] : net.adjacency[u]) {
      const double nd = d + weights[e];
      if (nd < dist[v]) {
        dist[v] = nd;
        via_edge[v] = e;
        via_node[v] = u;
        queue.push({nd, v});
      }
    }
  }
  if (dist[to] == inf) return {};
  std::vector<std::uint32_t> path;
  for (std::uint32_t u = to; u != from; u = via_node[u]) path.push_back(via_edge[u]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

inline TrafficProblem gen_traffic(std::uint32_t grid_w, std::uint32_t grid_h,
                                  std::uint32_t n_cars, std::uint32_t n_routes,
                                  std::uint64_t seed) {
  if (n_routes < 2) throw std::invalid_argument("need at least 2 candidate routes");
  if (grid_w < 2 || grid_h < 2) throw std::invalid_argument("grid must be at least 2x2");
  const auto net = detail::build_grid(grid_w, grid_h);
  Rng rng(seed);

  TrafficProblem out;
  auto& inst = out.instance;
  inst.n_cars = n_cars;
  inst.n_routes = n_routes;
  inst.segment_count = static_cast<std::uint32_t>(net.edges.size());
  inst.route_edges.resize(n_cars);

  const std::vector<double> unit(net.edges.size(), 1.0);
  std::vector<double> perturbed(net.edges.size());
  const std::uint32_t min_sep = std::max<std::uint32_t>(2, (grid_w + grid_h) / 4);

  for (std::uint32_t car = 0; car < n_cars; ++car) {
    std::vector<std::uint32_t> base_route;
    std::uint32_t origin = 0, dest = 0;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      origin = rng.uniform_int(net.nodes());
      dest = rng.uniform_int(net.nodes());
      if (origin == dest) continue;
      const std::uint32_t manhattan =
          (origin % grid_w > dest % grid_w ? origin % grid_w - dest % grid_w
                                           : dest % grid_w - origin % grid_w) +
          (origin / grid_w > dest / grid_w ? origin / grid_w - dest / grid_w
                                           : dest / grid_w - origin / grid_w);
      if (manhattan < min_sep) continue;
      base_route = detail::shortest_path(net, unit, origin, dest);
      ok = !base_route.empty();
    }
    if (!ok) throw std::runtime_error("could not place origin/destination pair");

    auto& routes = inst.route_edges[car];
    routes.push_back(base_route);
    std::uint32_t attempts = 0;
    while (routes.size() < n_routes && attempts < 30 * n_routes) {
      ++attempts;
      for (double& w : perturbed) w = 1.0 + rng.uniform();
      auto variant = detail::shortest_path(net, perturbed, origin, dest);
      if (variant.empty()) continue;
      bool duplicate = false;
      for (const auto& r : routes)
        if (r == variant) { duplicate = true; break; }
      if (!duplicate) routes.push_back(std::move(variant));
    }
    while (routes.size() < n_routes) routes.push_back(base_route);
    for (auto& r : routes) std::sort(r.begin(), r.end());
  }

  // f0 = 1/2 sum_e (load_e)^2 expanded: linear 1/2 * route length, pair
  // coefficient = number of shared segments.
  auto& p = out.problem;
  p.n_vars = inst.n_vars();
  std::vector<std::vector<std::uint32_t>> occupants(inst.segment_count);
  for (std::uint32_t car = 0; car < n_cars; ++car)
    for (std::uint32_t route = 0; route < n_routes; ++route)
      for (std::uint32_t e : inst.route_edges[car][route])
        occupants[e].push_back(inst.var(route, car));
  for (std::uint32_t car = 0; car < n_cars; ++car)
    for (std::uint32_t route = 0; route < n_routes; ++route)
      p.base.add_linear(inst.var(route, car), 0.5 * inst.route_length(route, car));
  for (const auto& vars : occupants)
    for (std::size_t a = 0; a < vars.size(); ++a)
      for (std::size_t b = a + 1; b < vars.size(); ++b)
        p.base.add_quadratic(vars[a], vars[b], 1.0);

  for (std::uint32_t car = 0; car < n_cars; ++car) {
    LinearConstraint c;
    for (std::uint32_t route = 0; route < n_routes; ++route) c.coeffs[inst.var(route, car)] = 1.0;
    c.target = 1.0;
    c.penalty_weight = kInfinitePenalty;
    c.hard_onehot = true;
    p.constraints.push_back(std::move(c));
  }
  p.validate();
  return out;
}

// Replaces the quadratic congestion cost by one multiplier per occupied
// segment: f0 = 0, per-car hard one-hots first, then per-segment constraints
// F_e(q) = 0 with weight 1 so the unit-weight penalty form equals the original
// congestion cost exactly.
inline ConstrainedProblem linearize_traffic(const TrafficInstance& inst) {
  ConstrainedProblem p;
  p.n_vars = inst.n_vars();
  for (std::uint32_t car = 0; car < inst.n_cars; ++car) {
    LinearConstraint c;
    for (std::uint32_t route = 0; route < inst.n_routes; ++route)
      c.coeffs[inst.var(route, car)] = 1.0;
    c.target = 1.0;
    c.penalty_weight = kInfinitePenalty;
    c.hard_onehot = true;
    p.constraints.push_back(std::move(c));
  }
  std::vector<std::vector<std::uint32_t>> occupants(inst.segment_count);
  for (std::uint32_t car = 0; car < inst.n_cars; ++car)
    for (std::uint32_t route = 0; route < inst.n_routes; ++route)
      for (std::uint32_t e : inst.route_edges[car][route])
        occupants[e].push_back(inst.var(route, car));
  for (std::uint32_t e = 0; e < inst.segment_count; ++e) {
    if (occupants[e].empty()) continue;
    LinearConstraint c;
    for (std::uint32_t v : occupants[e]) c.coeffs[v] = 1.0;
    c.target = 0.0;
    c.penalty_weight = 1.0;
    p.constraints.push_back(std::move(c));
  }
  p.validate();
  return p;
}

// Every car takes its shortest candidate route (ties -> lowest route index).
inline BinaryVector shortest_path_baseline(const TrafficInstance& inst) {
  BinaryVector q(inst.n_vars());
  for (std::uint32_t car = 0; car < inst.n_cars; ++car) {
    std::uint32_t best = 0;
    for (std::uint32_t route = 1; route < inst.n_routes; ++route)
      if (inst.route_length(route, car) < inst.route_length(best, car)) best = route;
    q[inst.var(best, car)] = 1;
  }
  return q;
}

// Mean-field baseline: exact field minimization of the linearized model,
// iterated with unit-step multiplier updates until the assignment repeats.
inline BinaryVector deterministic_baseline(const TrafficInstance& inst,
                                           std::optional<MultiplierState> nu0 = {},
                                           std::uint32_t max_iterations = 50) {
  const ConstrainedProblem p = linearize_traffic(inst);
  MultiplierState nu = nu0 ? *nu0 : MultiplierState::zeros(p.constraints.size());
  if (nu.nu.size() != p.constraints.size())
    throw std::invalid_argument("multiplier length mismatch");
  BinaryVector q, prev;
  for (std::uint32_t it = 0; it < max_iterations; ++it) {
    q = exact_field_minimize(build_effective(p, nu));
    if (it > 0 && q == prev) break;
    prev = q;
    const std::vector<double> r = residual(p, constraint_values(p, q));
    for (std::size_t k = 0; k < nu.nu.size(); ++k) nu.nu[k] += r[k];
  }
  return q;
}

// ---------------------------------------------------------------------------
// Double-constraint problem: f0 = sum h_it q_it with row and column sums
// both constrained to 1 (the feasible set is the permutation matrices).
inline ConstrainedProblem gen_double_constraint(std::uint32_t l, std::uint64_t seed) {
  if (l < 2) throw std::invalid_argument("L must be >= 2");
  Rng rng(seed);
  ConstrainedProblem p;
  p.n_vars = l * l;
  const auto idx = [l](std::uint32_t i, std::uint32_t t) { return i * l + t; };
  for (std::uint32_t i = 0; i < l; ++i)
    for (std::uint32_t t = 0; t < l; ++t) p.base.linear[idx(i, t)] = rng.uniform();
  for (std::uint32_t t = 0; t < l; ++t) {
    LinearConstraint c;
    for (std::uint32_t i = 0; i < l; ++i) c.coeffs[idx(i, t)] = 1.0;
    c.target = 1.0;
    p.constraints.push_back(std::move(c));
  }
  for (std::uint32_t i = 0; i < l; ++i) {
    LinearConstraint c;
    for (std::uint32_t t = 0; t < l; ++t) c.coeffs[idx(i, t)] = 1.0;
    c.target = 1.0;
    p.constraints.push_back(std::move(c));
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Hungarian algorithm (Jonker-Volgenant style potentials), O(n^3).
// Returns (row -> column assignment, total cost).
inline std::pair<std::vector<std::uint32_t>, double> assignment_oracle(
    const std::vector<double>& cost, std::uint32_t n) {
  if (cost.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("cost matrix size mismatch");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::uint32_t> match(n + 1, 0), way(n + 1, 0);
  for (std::uint32_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::uint32_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<std::uint8_t> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::uint32_t i0 = match[j0];
      std::uint32_t j1 = 0;
      double delta = inf;
      for (std::uint32_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::uint32_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::uint32_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::uint32_t> assignment(n, 0);
  for (std::uint32_t j = 1; j <= n; ++j)
    if (match[j] != 0) assignment[match[j] - 1] = j - 1;
  double total = 0.0;
  for (std::uint32_t i = 0; i < n; ++i)
    total += cost[static_cast<std::size_t>(i) * n + assignment[i]];
  return {assignment, total};
}

// Reads the double-constraint field matrix back out of the generated problem
// and solves the assignment exactly.
inline std::pair<BinaryVector, double> double_constraint_oracle(const ConstrainedProblem& p,
                                                                std::uint32_t l) {
  if (p.n_vars != l * l) throw std::invalid_argument("L does not match problem size");
  std::vector<double> cost(static_cast<std::size_t>(l) * l, 0.0);
  for (const auto& [i, c] : p.base.linear) cost[i] = c;
  const auto [assignment, total] = assignment_oracle(cost, l);
  BinaryVector q(p.n_vars);
  for (std::uint32_t i = 0; i < l; ++i) q[i * l + assignment[i]] = 1;
  return {q, total};
}

// ---------------------------------------------------------------------------
// Spectral linearization of f(q) = q^T A q for symmetric PSD A: one linear
// constraint sqrt(lambda_k) u_k per nonzero eigenvalue with target 0 and
// weight 1, so 1/2 sum_k F_k(q)^2 = 1/2 q^T A q.
namespace detail {

struct EigenDecomposition {
  std::vector<double> values;                 // descending
  std::vector<std::vector<double>> vectors;   // vectors[k] matches values[k]
};

// Cyclic Jacobi rotations; fine for the small dense matrices used here.
inline EigenDecomposition symmetric_eigen(std::vector<double> a, std::uint32_t n) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (std::uint32_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  const auto at = [n](std::vector<double>& m, std::uint32_t r, std::uint32_t c) -> double& {
    return m[static_cast<std::size_t>(r) * n + c];
  };
  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) scale = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::uint32_t p = 0; p < n; ++p)
      for (std::uint32_t q = p + 1; q < n; ++q) off += std::abs(at(a, p, q));
    if (off <= 1e-14 * scale * n) break;
    for (std::uint32_t p = 0; p < n; ++p) {
      for (std::uint32_t q = p + 1; q < n; ++q) {
        const double apq = at(a, p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double tau = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::uint32_t i = 0; i < n; ++i) {
          const double aip = at(a, i, p), aiq = at(a, i, q);
          at(a, i, p) = c * aip - s * aiq;
          at(a, i, q) = s * aip + c * aiq;
        }
        for (std::uint32_t i = 0; i < n; ++i) {
          const double api = at(a, p, i), aqi = at(a, q, i);
          at(a, p, i) = c * api - s * aqi;
          at(a, q, i) = s * api + c * aqi;
        }
        for (std::uint32_t i = 0; i < n; ++i) {
          const double vip = at(v, i, p), viq = at(v, i, q);
          at(v, i, p) = c * vip - s * viq;
          at(v, i, q) = s * vip + c * viq;
        }
      }
    }
  }
  EigenDecomposition out;
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
    const double ex = at(a, x, x), ey = at(a, y, y);
    if (ex != ey) return ex > ey;
    return x < y;
  });
  for (std::uint32_t k : order) {
    out.values.push_back(at(a, k, k));
    std::vector<double> vec(n);
    for (std::uint32_t i = 0; i < n; ++i) vec[i] = at(v, i, k);
    out.vectors.push_back(std::move(vec));
  }
  return out;
}

}  // namespace detail

inline ConstrainedProblem spectral_linearize(const std::vector<double>& a, std::uint32_t n) {
  if (a.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("matrix size mismatch");
  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  const double sym_tol = 1e-10 * std::max(1.0, scale);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (std::abs(a[static_cast<std::size_t>(i) * n + j] -
                   a[static_cast<std::size_t>(j) * n + i]) > sym_tol)
        throw std::invalid_argument("matrix is not symmetric");

  const auto eig = detail::symmetric_eigen(a, n);
  ConstrainedProblem p;
  p.n_vars = n;
  const double zero_tol = 1e-10 * std::max(1.0, scale);
  for (std::uint32_t k = 0; k < n; ++k) {
    const double lambda = eig.values[k];
    if (lambda < -zero_tol)
      throw std::invalid_argument("matrix has a negative eigenvalue; only PSD inputs supported");
    if (lambda <= zero_tol) continue;
    const double root = std::sqrt(lambda);
    LinearConstraint c;
    for (std::uint32_t i = 0; i < n; ++i) c.coeffs[i] = root * eig.vectors[k][i];
    c.target = 0.0;
    c.penalty_weight = 1.0;
    p.constraints.push_back(std::move(c));
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Exhaustive minimizer, n_vars <= 24. Hard constraints must hold exactly
// (within 1e-9); among feasible configurations minimizes the unit-weight
// penalty energy. Ties broken lexicographically on (q_0, q_1, ...).
inline std::pair<BinaryVector, double> brute_force(const ConstrainedProblem& p) {
  p.validate();
  if (p.n_vars > 24) throw std::invalid_argument("brute force limited to 24 variables");
  const std::uint32_t n = p.n_vars;

  std::vector<std::pair<std::uint32_t, double>> linear(p.base.linear.begin(),
                                                       p.base.linear.end());
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> quad;
  for (const auto& [ij, c] : p.base.quadratic) quad.push_back({ij.first, ij.second, c});
  struct FlatConstraint {
    std::vector<std::pair<std::uint32_t, double>> coeffs;
    double target;
    double weight;  // 1.0 substituted for infinite
    bool hard;
  };
  std::vector<FlatConstraint> cons;
  for (const auto& c : p.constraints) {
    FlatConstraint fc;
    fc.coeffs.assign(c.coeffs.begin(), c.coeffs.end());
    fc.target = c.target;
    fc.hard = constraint_is_hard(c);
    fc.weight = is_infinite_penalty(c.penalty_weight) ? 1.0 : c.penalty_weight;
    cons.push_back(std::move(fc));
  }

  const auto lex_less = [](const BinaryVector& x, const BinaryVector& y) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] != y[i]) return x[i] < y[i];
    return false;
  };

  BinaryVector q(n), best_q;
  double best_e = 0.0;
  bool found = false;
  const std::uint64_t total = 1ULL << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::uint32_t i = 0; i < n; ++i) q[i] = static_cast<std::uint8_t>((mask >> i) & 1);
    double e = p.base.constant;
    for (const auto& [i, c] : linear)
      if (q[i]) e += c;
    for (const auto& [i, j, c] : quad)
      if (q[i] && q[j]) e += c;
    bool feasible = true;
    for (const auto& fc : cons) {
      double f = 0.0;
      for (const auto& [i, a] : fc.coeffs)
        if (q[i]) f += a;
      const double d = f - fc.target;
      if (fc.hard && std::abs(d) > 1e-9) {
        feasible = false;
        break;
      }
      e += 0.5 * fc.weight * d * d;
    }
    if (!feasible) continue;
    if (!found || e < best_e || (e == best_e && lex_less(q, best_q))) {
      found = true;
      best_e = e;
      best_q = q;
    }
  }
  if (!found) throw std::runtime_error("no feasible configuration exists");
  return {best_q, solution_energy(p, best_q)};
}

// ---------------------------------------------------------------------------
// Instance files: problem.json in the shared schema plus a provenance sidecar,
// and for traffic the occupancy tensor as {e, mu, i} triplets.
inline json to_json(const TrafficInstance& inst) {
  json triplets = json::array();
  json lengths = json::object();
  for (std::uint32_t car = 0; car < inst.n_cars; ++car) {
    for (std::uint32_t route = 0; route < inst.n_routes; ++route) {
      for (std::uint32_t e : inst.route_edges[car][route])
        triplets.push_back(json{{"e", e}, {"mu", route}, {"i", car}});
      lengths[std::to_string(route) + "," + std::to_string(car)] =
          inst.route_length(route, car);
    }
  }
  return json{{"n_cars", inst.n_cars},
              {"n_routes", inst.n_routes},
              {"segment_count", inst.segment_count},
              {"occupancy", triplets},
              {"route_lengths", lengths}};
}

inline TrafficInstance traffic_from_json(const json& j) {
  TrafficInstance inst;
  inst.n_cars = j.at("n_cars").get<std::uint32_t>();
  inst.n_routes = j.at("n_routes").get<std::uint32_t>();
  inst.segment_count = j.at("segment_count").get<std::uint32_t>();
  inst.route_edges.assign(inst.n_cars,
                          std::vector<std::vector<std::uint32_t>>(inst.n_routes));
  for (const auto& t : j.at("occupancy"))
    inst.route_edges[t.at("i").get<std::uint32_t>()][t.at("mu").get<std::uint32_t>()].push_back(
        t.at("e").get<std::uint32_t>());
  for (auto& car : inst.route_edges)
    for (auto& route : car) std::sort(route.begin(), route.end());
  return inst;
}

inline void save_instance(const std::string& dir, const ConstrainedProblem& p,
                          const json& provenance,
                          const TrafficInstance* traffic = nullptr,
                          const BinaryVector* truth = nullptr) {
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/problem.json", to_json(p).dump(2) + "\n");
  write_text_file(dir + "/provenance.json", provenance.dump(2) + "\n");
  if (traffic) write_text_file(dir + "/occupancy.json", to_json(*traffic).dump(2) + "\n");
  if (truth) write_text_file(dir + "/truth.json", binary_to_json(*truth).dump() + "\n");
}

inline ConstrainedProblem load_problem(const std::string& path) {
  return problem_from_json(json::parse(read_text_file(path)));
}

}  // namespace qlag::problems
