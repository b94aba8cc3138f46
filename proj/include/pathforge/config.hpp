#pragma once

// Pipeline configuration (JSON). Unknown keys are rejected so typos surface.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathforge/error.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/kg.hpp"
#include "pathforge/reasoning.hpp"
#include "pathforge/rewards.hpp"
#include "pathforge/services.hpp"

namespace pathforge {

struct ServiceConfig {
  std::string endpoint;
  std::string model;
  int timeout_ms = 30000;
  int max_inflight = 4;
};

struct PipelineConfig {
  std::vector<std::string> graphs;
  double alignment_threshold = kDefaultAlignThreshold;
  double anchor_threshold = kDefaultAnchorThreshold;
  std::map<std::string, double> path_priority = default_priority();
  double max_cost = kDefaultMaxCost;
  double alpha = kDefaultAlpha;
  double beta = 0.5;
  double epsilon = 1e-8;
  GrpoConfig grpo;
  double learning_rate = 0.1;
  std::map<Role, ServiceConfig> services{{Role::Extractor, {}}, {Role::Generator, {}}, {Role::Judge, {}}};
  bool mock = false;
  std::uint64_t seed = 7;
  std::size_t jobs = 1;

  PathOptions path_options() const { return {path_priority, max_cost}; }
  EntityRewardParams entity_params() const { return {beta, epsilon}; }
  RewardParams reward_params() const { return {alpha, entity_params(), anchor_threshold}; }

  void validate() const {
    auto unit = [](double v, const char* key) {
      if (!(v > 0 && v <= 1)) throw Error(ErrorKind::BadConfig, std::string(key) + " must lie in (0, 1]");
    };
    unit(alignment_threshold, "alignment_threshold");
    unit(anchor_threshold, "anchor_threshold");
    if (!(max_cost > 0)) throw Error(ErrorKind::BadConfig, "max_cost must be > 0");
    for (const auto& [rel, m] : path_priority)
      if (!(m > 0) || !std::isfinite(m))
        throw Error(ErrorKind::BadConfig, "path_priority." + rel + " must be a positive multiplier");
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw Error(ErrorKind::BadConfig, "reward.alpha must be >= 0");
    if (!(beta >= 0 && beta <= 1)) throw Error(ErrorKind::BadConfig, "reward.beta must lie in [0, 1]");
    if (!(epsilon > 0)) throw Error(ErrorKind::BadConfig, "reward.epsilon must be > 0");
    grpo.validate();
    if (!(learning_rate > 0)) throw Error(ErrorKind::BadConfig, "grpo.learning_rate must be > 0");
    for (const auto& [role, s] : services) {
      std::string base = "services." + std::string(to_string(role));
      if (s.max_inflight < 1) throw Error(ErrorKind::BadConfig, base + ".max_inflight must be >= 1");
      if (s.timeout_ms < 1) throw Error(ErrorKind::BadConfig, base + ".timeout_ms must be >= 1");
    }
    if (jobs < 1) throw Error(ErrorKind::BadConfig, "jobs must be >= 1");
  }

  ClientConfig client_config(Role role) const {
    const auto& s = services.at(role);
    return {role, s.endpoint, s.model, std::chrono::milliseconds(s.timeout_ms), s.max_inflight};
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw Error(ErrorKind::BadConfig, "unknown config key: " + prefix + k);
}

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::BadConfig, "config key " + prefix + key + " has the wrong type");
  }
}

inline const nlohmann::json& object_at(const nlohmann::json& obj, const char* key, const std::string& prefix) {
  const auto& v = obj.at(key);
  if (!v.is_object()) throw Error(ErrorKind::BadConfig, "config key " + prefix + key + " must be an object");
  return v;
}

}  // namespace detail

inline PipelineConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::BadConfig, "config must be a JSON object");
  detail::reject_unknown(j,
                         {"graphs", "alignment_threshold", "anchor_threshold", "path_priority", "max_cost", "reward",
                          "grpo", "services", "mock", "seed", "jobs"},
                         "");
  PipelineConfig c;
  detail::read_key(j, "graphs", c.graphs, "");
  detail::read_key(j, "alignment_threshold", c.alignment_threshold, "");
  detail::read_key(j, "anchor_threshold", c.anchor_threshold, "");
  detail::read_key(j, "path_priority", c.path_priority, "");
  detail::read_key(j, "max_cost", c.max_cost, "");
  detail::read_key(j, "mock", c.mock, "");
  detail::read_key(j, "seed", c.seed, "");
  std::int64_t jobs = 1;
  detail::read_key(j, "jobs", jobs, "");
  if (jobs < 1) throw Error(ErrorKind::BadConfig, "jobs must be >= 1");
  c.jobs = static_cast<std::size_t>(jobs);
  if (j.contains("reward")) {
    const auto& r = detail::object_at(j, "reward", "");
    detail::reject_unknown(r, {"alpha", "beta", "epsilon"}, "reward.");
    detail::read_key(r, "alpha", c.alpha, "reward.");
    detail::read_key(r, "beta", c.beta, "reward.");
    detail::read_key(r, "epsilon", c.epsilon, "reward.");
  }
  if (j.contains("grpo")) {
    const auto& g = detail::object_at(j, "grpo", "");
    detail::reject_unknown(g, {"group_size", "clip_eps", "kl_coef", "sigma_tol", "learning_rate"}, "grpo.");
    detail::read_key(g, "group_size", c.grpo.group_size, "grpo.");
    detail::read_key(g, "clip_eps", c.grpo.clip_eps, "grpo.");
    detail::read_key(g, "kl_coef", c.grpo.kl_coef, "grpo.");
    detail::read_key(g, "sigma_tol", c.grpo.sigma_tol, "grpo.");
    detail::read_key(g, "learning_rate", c.learning_rate, "grpo.");
  }
  if (j.contains("services")) {
    const auto& s = detail::object_at(j, "services", "");
    detail::reject_unknown(s, {"extractor", "generator", "judge"}, "services.");
    for (Role role : {Role::Extractor, Role::Generator, Role::Judge}) {
      std::string name(to_string(role));
      if (!s.contains(name)) continue;
      std::string prefix = "services." + name + ".";
      const auto& o = detail::object_at(s, name.c_str(), "services.");
      detail::reject_unknown(o, {"endpoint", "model", "timeout_ms", "max_inflight"}, prefix);
      auto& sc = c.services[role];
      detail::read_key(o, "endpoint", sc.endpoint, prefix);
      detail::read_key(o, "model", sc.model, prefix);
      detail::read_key(o, "timeout_ms", sc.timeout_ms, prefix);
      detail::read_key(o, "max_inflight", sc.max_inflight, prefix);
    }
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

}  // namespace pathforge
