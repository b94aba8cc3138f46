#pragma once

// Group-relative policy optimization: advantages, clipped surrogate, KL
// penalty, loss and gradient, plus a softmax toy policy for desk-scale runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pathforge/error.hpp"
#include "pathforge/rewards.hpp"

namespace pathforge {

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_eps = 0.2;
  double kl_coef = 0.03;
  double sigma_tol = 1e-8;

  void validate() const {
    if (group_size < 2) throw Error(ErrorKind::BadConfig, "grpo.group_size must be >= 2");
    if (!(clip_eps > 0) || !std::isfinite(clip_eps)) throw Error(ErrorKind::BadConfig, "grpo.clip_eps must be > 0");
    if (!(kl_coef >= 0) || !std::isfinite(kl_coef)) throw Error(ErrorKind::BadConfig, "grpo.kl_coef must be >= 0");
    if (!(sigma_tol > 0)) throw Error(ErrorKind::BadConfig, "grpo.sigma_tol must be > 0");
  }
};

struct GroupSample {
  double reward = 0;
  double logp_new = 0;
  double logp_old = 0;
  double logp_ref = 0;
};

using Group = std::vector<GroupSample>;

namespace detail {
inline void require_finite(std::initializer_list<double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "non-finite input");
}
}  // namespace detail

/// (R_i - mean) / sigma with the population sigma; all zeros when sigma < tol.
inline std::vector<double> group_advantages(std::span<const double> rewards, double sigma_tol = 1e-8) {
  if (rewards.size() < 2) throw Error(ErrorKind::GroupTooSmall, "a group needs at least two rewards");
  for (double r : rewards) detail::require_finite({r});
  const double n = static_cast<double>(rewards.size());
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  double sigma = std::sqrt(var / n);
  std::vector<double> a(rewards.size(), 0.0);
  if (sigma < sigma_tol) return a;
  for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = (rewards[i] - mean) / sigma;
  return a;
}

inline double clipped_surrogate(double logp_new, double logp_old, double advantage, double clip_eps) {
  detail::require_finite({logp_new, logp_old, advantage, clip_eps});
  double r = std::exp(logp_new - logp_old);
  double clipped = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(r * advantage, clipped * advantage);
}

/// exp(d) - d - 1 with d = logp_ref - logp_new.
inline double kl_penalty(double logp_new, double logp_ref) {
  detail::require_finite({logp_new, logp_ref});
  double d = logp_ref - logp_new;
  return std::max(0.0, std::expm1(d) - d);
}

namespace detail {
inline std::vector<double> rewards_of(const Group& g) {
  std::vector<double> r;
  r.reserve(g.size());
  for (const auto& s : g) r.push_back(s.reward);
  return r;
}
inline void check_group(const Group& g, const GrpoConfig& c) {
  if (g.size() < 2) throw Error(ErrorKind::GroupTooSmall, "a group needs at least two samples");
  if (g.size() != c.group_size)
    throw Error(ErrorKind::InvalidArgument,
                "group has " + std::to_string(g.size()) + " samples, config expects " + std::to_string(c.group_size));
}
}  // namespace detail

/// Negated objective: -(mean clipped surrogate - kl_coef * mean KL).
inline double grpo_loss(const Group& group, const GrpoConfig& config) {
  detail::check_group(group, config);
  auto rewards = detail::rewards_of(group);
  auto adv = group_advantages(rewards, config.sigma_tol);
  const double n = static_cast<double>(group.size());
  double surrogate = 0, kl = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    surrogate += clipped_surrogate(group[i].logp_new, group[i].logp_old, adv[i], config.clip_eps);
    kl += kl_penalty(group[i].logp_new, group[i].logp_ref);
  }
  return -(surrogate / n - config.kl_coef * kl / n);
}

inline double mean_kl(const Group& group) {
  double kl = 0;
  for (const auto& s : group) kl += kl_penalty(s.logp_new, s.logp_ref);
  return kl / static_cast<double>(group.size());
}

/// d loss / d logp_new_i. The clipped branch carries no gradient.
inline std::vector<double> grpo_loss_grad(const Group& group, const GrpoConfig& config) {
  detail::check_group(group, config);
  auto adv = group_advantages(detail::rewards_of(group), config.sigma_tol);
  const double n = static_cast<double>(group.size());
  std::vector<double> g(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& s = group[i];
    double r = std::exp(s.logp_new - s.logp_old);
    double clipped = std::clamp(r, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
    double ds = (r * adv[i] <= clipped * adv[i]) ? r * adv[i] : 0.0;
    double d = s.logp_ref - s.logp_new;
    double dkl = 1.0 - std::exp(d);  // d/d logp_new of exp(d)-d-1
    g[i] = -ds / n + config.kl_coef * dkl / n;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Toy policy

/// Categorical policy over K candidates, pi = softmax(theta).
struct ToyPolicy {
  std::vector<double> logits;

  std::size_t size() const { return logits.size(); }

  std::vector<double> log_probs() const {
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    double lz = mx + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lz;
    return out;
  }

  std::vector<double> probs() const {
    auto lp = log_probs();
    for (double& x : lp) x = std::exp(x);
    return lp;
  }
};

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  double u = unit_uniform(rng), acc = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

/// Loss of a fixed set of sampled actions as a function of the current
/// policy logits; old and reference log-probabilities are frozen.
struct ToyObjective {
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> logp_old;  // per action
  std::vector<double> logp_ref;  // per action
  GrpoConfig config;

  Group group_at(const ToyPolicy& p) const {
    auto lp = p.log_probs();
    Group g(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i)
      g[i] = {rewards[i], lp[actions[i]], logp_old[i], logp_ref[i]};
    return g;
  }

  double loss(const ToyPolicy& p) const { return grpo_loss(group_at(p), config); }

  /// Chain rule through d log pi(a) / d theta_k = [k == a] - pi_k.
  std::vector<double> grad(const ToyPolicy& p) const {
    auto g = group_at(p);
    auto dl = grpo_loss_grad(g, config);
    auto pi = p.probs();
    std::vector<double> out(p.size(), 0.0);
    for (std::size_t i = 0; i < actions.size(); ++i)
      for (std::size_t k = 0; k < p.size(); ++k) out[k] += dl[i] * ((k == actions[i] ? 1.0 : 0.0) - pi[k]);
    return out;
  }
};

inline constexpr double kRelativeErrorFloor = 1e-6;

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// with central differences of step h.
inline double finite_difference_check(const std::function<double(const std::vector<double>&)>& loss,
                                      const std::function<std::vector<double>(const std::vector<double>&)>& grad,
                                      const std::vector<double>& params, double h = 1e-5,
                                      double floor = kRelativeErrorFloor) {
  if (!(h > 0)) throw Error(ErrorKind::InvalidArgument, "h must be positive");
  auto analytic = grad(params);
  double worst = 0;
  auto x = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    x[k] = params[k] + h;
    double up = loss(x);
    x[k] = params[k] - h;
    double down = loss(x);
    x[k] = params[k];
    double numeric = (up - down) / (2 * h);
    double denom = std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

/// Whether every ratio of the objective at p keeps at least `margin` away
/// from both clip boundaries.
inline bool away_from_clip(const ToyObjective& obj, const ToyPolicy& p, double margin) {
  auto g = obj.group_at(p);
  for (const auto& s : g) {
    double r = std::exp(s.logp_new - s.logp_old);
    if (std::abs(r - (1 - obj.config.clip_eps)) < margin || std::abs(r - (1 + obj.config.clip_eps)) < margin)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Toy training

struct ToyEnvironment {
  std::vector<double> rewards;  // one total reward per candidate
  std::vector<RewardBreakdown> breakdowns;

  static ToyEnvironment from_rewards(std::vector<double> r) {
    ToyEnvironment e;
    e.rewards = std::move(r);
    return e;
  }

  static ToyEnvironment from_breakdowns(std::vector<RewardBreakdown> b) {
    ToyEnvironment e;
    for (const auto& x : b) e.rewards.push_back(x.total);
    e.breakdowns = std::move(b);
    return e;
  }

  double best() const { return *std::max_element(rewards.begin(), rewards.end()); }
};

struct TrainingStep {
  std::size_t iteration = 0;
  double mean_reward = 0;
  double loss = 0;
  double kl = 0;
};

struct TrainingOptions {
  std::size_t iterations = 200;
  std::uint64_t seed = 7;
  double learning_rate = 0.1;
};

struct TrainingRun {
  std::vector<TrainingStep> steps;
  ToyPolicy final_policy;
};

/// Uniform initial logits; the initial policy doubles as the frozen
/// reference. Each iteration snapshots the old policy, samples a group,
/// and takes one gradient step on the group loss.
inline TrainingRun run_toy_training(const ToyEnvironment& env, const GrpoConfig& config, const TrainingOptions& opt) {
  config.validate();
  if (env.rewards.size() < 2) throw Error(ErrorKind::BadConfig, "toy environment needs at least two candidates");
  if (!(opt.learning_rate > 0)) throw Error(ErrorKind::BadConfig, "learning_rate must be > 0");
  for (double r : env.rewards)
    if (!std::isfinite(r)) throw Error(ErrorKind::BadConfig, "candidate reward is not finite");

  std::mt19937_64 rng(opt.seed);
  ToyPolicy policy{std::vector<double>(env.rewards.size(), 0.0)};
  const auto ref_lp = policy.log_probs();
  TrainingRun run;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    const auto old_lp = policy.log_probs();
    const auto old_pi = policy.probs();
    ToyObjective obj;
    obj.config = config;
    double mean_r = 0;
    for (std::size_t i = 0; i < config.group_size; ++i) {
      auto a = sample_index(old_pi, rng);
      obj.actions.push_back(a);
      obj.rewards.push_back(env.rewards[a]);
      obj.logp_old.push_back(old_lp[a]);
      obj.logp_ref.push_back(ref_lp[a]);
      mean_r += env.rewards[a];
    }
    mean_r /= static_cast<double>(config.group_size);
    auto group = obj.group_at(policy);
    TrainingStep step{it, mean_r, grpo_loss(group, config), mean_kl(group)};
    auto g = obj.grad(policy);
    for (std::size_t k = 0; k < g.size(); ++k) policy.logits[k] -= opt.learning_rate * g[k];
    run.steps.push_back(step);
  }
  run.final_policy = policy;
  return run;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string trajectory_csv(const std::vector<TrainingStep>& steps) {
  std::string out = "iteration,mean_reward,loss,kl\n";
  for (const auto& s : steps)
    out += std::to_string(s.iteration) + "," + format_double(s.mean_reward) + "," + format_double(s.loss) + "," +
           format_double(s.kl) + "\n";
  return out;
}

}  // namespace pathforge
