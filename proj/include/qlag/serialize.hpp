#pragma once

// JSON schema for problems (also the annealer wire format):
//   {n_vars, base: {linear: {"i": c}, quadratic: {"i,j": c}, constant},
//    constraints: [{coeffs: {"i": c}, target, lambda, hard_onehot}]}
// quadratic keys are "i,j" strings with i < j; lambda is a number or the
// string "inf". Doubles round-trip bit-exactly (shortest representation).

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "qlag/model.hpp"

namespace qlag {

using json = nlohmann::json;

namespace detail {

inline std::uint32_t parse_index(const std::string& key) {
  std::size_t pos = 0;
  const unsigned long v = std::stoul(key, &pos);
  if (pos != key.size()) throw std::invalid_argument("bad index key: " + key);
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline json to_json(const QuadraticObjective& obj) {
  json linear = json::object();
  for (const auto& [i, c] : obj.linear) linear[std::to_string(i)] = c;
  json quadratic = json::object();
  for (const auto& [ij, c] : obj.quadratic)
    quadratic[std::to_string(ij.first) + "," + std::to_string(ij.second)] = c;
  return json{{"linear", linear}, {"quadratic", quadratic}, {"constant", obj.constant}};
}

inline QuadraticObjective objective_from_json(const json& j) {
  QuadraticObjective obj;
  for (const auto& [key, value] : j.at("linear").items())
    obj.linear[detail::parse_index(key)] = value.get<double>();
  for (const auto& [key, value] : j.at("quadratic").items()) {
    const auto comma = key.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("bad quadratic key: " + key);
    const std::uint32_t a = detail::parse_index(key.substr(0, comma));
    const std::uint32_t b = detail::parse_index(key.substr(comma + 1));
    if (a >= b) throw std::invalid_argument("quadratic key must have i < j: " + key);
    obj.quadratic[{a, b}] = value.get<double>();
  }
  obj.constant = j.at("constant").get<double>();
  return obj;
}

inline json to_json(const LinearConstraint& c) {
  json coeffs = json::object();
  for (const auto& [i, a] : c.coeffs) coeffs[std::to_string(i)] = a;
  json out{{"coeffs", coeffs}, {"target", c.target}, {"hard_onehot", c.hard_onehot}};
  if (is_infinite_penalty(c.penalty_weight))
    out["lambda"] = "inf";
  else
    out["lambda"] = c.penalty_weight;
  return out;
}

inline LinearConstraint constraint_from_json(const json& j) {
  LinearConstraint c;
  for (const auto& [key, value] : j.at("coeffs").items())
    c.coeffs[detail::parse_index(key)] = value.get<double>();
  c.target = j.at("target").get<double>();
  const auto& lambda = j.at("lambda");
  if (lambda.is_string()) {
    if (lambda.get<std::string>() != "inf")
      throw std::invalid_argument("lambda must be a number or \"inf\"");
    c.penalty_weight = kInfinitePenalty;
  } else {
    c.penalty_weight = lambda.get<double>();
  }
  c.hard_onehot = j.value("hard_onehot", false);
  return c;
}

inline json to_json(const ConstrainedProblem& p) {
  json constraints = json::array();
  for (const auto& c : p.constraints) constraints.push_back(to_json(c));
  json out{{"n_vars", p.n_vars}, {"base", to_json(p.base)}, {"constraints", constraints}};
  if (p.spin_encoded) out["spin_encoded"] = true;
  return out;
}

inline ConstrainedProblem problem_from_json(const json& j) {
  ConstrainedProblem p;
  p.n_vars = j.at("n_vars").get<std::uint32_t>();
  p.base = objective_from_json(j.at("base"));
  for (const auto& cj : j.at("constraints")) p.constraints.push_back(constraint_from_json(cj));
  p.spin_encoded = j.value("spin_encoded", false);
  p.validate();
  return p;
}

inline json binary_to_json(const BinaryVector& q) {
  json arr = json::array();
  for (std::size_t i = 0; i < q.size(); ++i) arr.push_back(static_cast<int>(q[i]));
  return arr;
}

inline BinaryVector binary_from_json(const json& j, std::size_t expected_size) {
  if (!j.is_array()) throw std::invalid_argument("sample is not an array");
  if (expected_size != 0 && j.size() != expected_size)
    throw std::invalid_argument("sample length mismatch");
  BinaryVector q(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer())
      throw std::invalid_argument("sample entry is not an integer");
    const long long b = j[i].get<long long>();
    if (b != 0 && b != 1) throw std::invalid_argument("sample entry not in {0,1}");
    q[i] = static_cast<std::uint8_t>(b);
  }
  return q;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move " + tmp + " to " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace qlag
