#include <filesystem>

#include "doctest.h"
#include "qlag/problems.hpp"
#include "qlag/rng.hpp"
#include "qlag/serialize.hpp"

using namespace qlag;

namespace {

ConstrainedProblem messy_problem(std::uint64_t seed) {
  Rng rng(seed);
  ConstrainedProblem p;
  p.n_vars = 12;
  for (std::uint32_t i = 0; i < 12; ++i)
    if (rng.uniform() < 0.6) p.base.linear[i] = rng.gaussian();
  for (std::uint32_t i = 0; i < 12; ++i)
    for (std::uint32_t j = i + 1; j < 12; ++j)
      if (rng.uniform() < 0.2) p.base.add_quadratic(i, j, rng.gaussian() * 1e3);
  p.base.constant = rng.gaussian() * 1e-7;
  {
    LinearConstraint c;
    for (std::uint32_t i = 0; i < 12; ++i) c.coeffs[i] = rng.gaussian();
    c.target = rng.gaussian();
    c.penalty_weight = kInfinitePenalty;
    p.constraints.push_back(c);
  }
  {
    LinearConstraint c;
    c.coeffs[3] = 0.1 + rng.uniform();
    c.coeffs[7] = -rng.uniform();
    c.target = 1.0 / 3.0;
    c.penalty_weight = rng.uniform(0.1, 9.0);
    p.constraints.push_back(c);
  }
  {
    LinearConstraint c;
    c.coeffs[0] = c.coeffs[1] = c.coeffs[2] = 1.0;
    c.target = 1.0;
    c.hard_onehot = true;
    p.constraints.push_back(c);
  }
  p.spin_encoded = seed % 2 == 0;
  p.validate();
  return p;
}

bool problems_identical(const ConstrainedProblem& a, const ConstrainedProblem& b) {
  if (a.n_vars != b.n_vars || a.spin_encoded != b.spin_encoded) return false;
  if (a.base.linear != b.base.linear || a.base.quadratic != b.base.quadratic) return false;
  if (a.base.constant != b.base.constant) return false;
  if (a.constraints.size() != b.constraints.size()) return false;
  for (std::size_t k = 0; k < a.constraints.size(); ++k) {
    const auto& x = a.constraints[k];
    const auto& y = b.constraints[k];
    if (x.coeffs != y.coeffs || x.target != y.target || x.hard_onehot != y.hard_onehot)
      return false;
    const bool xi = is_infinite_penalty(x.penalty_weight);
    if (xi != is_infinite_penalty(y.penalty_weight)) return false;
    if (!xi && x.penalty_weight != y.penalty_weight) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("serialize") {
  TEST_CASE("problem JSON round trip is bit-exact") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
      const auto p = messy_problem(seed);
      const std::string text = to_json(p).dump();
      const auto back = problem_from_json(json::parse(text));
      CHECK(problems_identical(p, back));
      // A second hop through text stays identical too.
      const auto again = problem_from_json(json::parse(to_json(back).dump()));
      CHECK(problems_identical(back, again));
    }
  }

  TEST_CASE("schema shape") {
    const auto p = messy_problem(4);
    const json j = to_json(p);
    CHECK(j.contains("n_vars"));
    CHECK(j.at("base").contains("linear"));
    CHECK(j.at("base").contains("quadratic"));
    CHECK(j.at("base").contains("constant"));
    for (const auto& [key, value] : j.at("base").at("quadratic").items()) {
      (void)value;
      const auto comma = key.find(',');
      REQUIRE(comma != std::string::npos);
      CHECK(std::stoul(key.substr(0, comma)) < std::stoul(key.substr(comma + 1)));
    }
    CHECK(j.at("constraints")[0].at("lambda") == "inf");
    CHECK(j.at("constraints")[1].at("lambda").is_number());
    CHECK(j.at("constraints")[2].at("hard_onehot") == true);
  }

  TEST_CASE("parser rejects malformed documents") {
    auto j = to_json(messy_problem(5));
    json bad = j;
    bad["constraints"][0]["lambda"] = "huge";
    CHECK_THROWS_AS(problem_from_json(bad), std::invalid_argument);
    bad = j;
    bad["base"]["quadratic"]["7,3"] = 1.0;  // i >= j
    CHECK_THROWS_AS(problem_from_json(bad), std::invalid_argument);
    bad = j;
    bad["base"]["linear"]["xyz"] = 1.0;
    CHECK_THROWS(problem_from_json(bad));
  }

  TEST_CASE("binary vector JSON validation") {
    CHECK(binary_from_json(json::parse("[0,1,1,0]"), 4) == BinaryVector{0, 1, 1, 0});
    CHECK_THROWS_AS(binary_from_json(json::parse("[0,1,2]"), 3), std::invalid_argument);
    CHECK_THROWS_AS(binary_from_json(json::parse("[0,1]"), 3), std::invalid_argument);
    CHECK_THROWS_AS(binary_from_json(json::parse("[0,0.5,1]"), 3), std::invalid_argument);
    CHECK_THROWS_AS(binary_from_json(json::parse("7"), 1), std::invalid_argument);
  }

  TEST_CASE("instance files round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "qlag_serialize_test";
    std::filesystem::remove_all(dir);
    const auto p = problems::gen_kmin(24, 3, 17);
    problems::save_instance(dir.string(), p,
                            json{{"seed", 17}, {"generator", "kmin"}, {"params", {{"n", 24}, {"k", 3}}}});
    const auto loaded = problems::load_problem((dir / "problem.json").string());
    CHECK(problems_identical(p, loaded));
    const json prov = json::parse(read_text_file((dir / "provenance.json").string()));
    CHECK(prov.at("generator") == "kmin");
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("traffic occupancy round trip") {
    const auto gen = problems::gen_traffic(5, 4, 6, 3, 21);
    const json j = problems::to_json(gen.instance);
    const auto back = problems::traffic_from_json(j);
    CHECK(back.n_cars == gen.instance.n_cars);
    CHECK(back.n_routes == gen.instance.n_routes);
    CHECK(back.segment_count == gen.instance.segment_count);
    CHECK(back.route_edges == gen.instance.route_edges);
  }
}
