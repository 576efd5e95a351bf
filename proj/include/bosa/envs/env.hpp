#pragma once

#include "bosa/common.hpp"

#include <json.hpp>

#include <string>

namespace bosa::envs {

enum class Family { point_mass_2d, pendulum };
enum class RewardId { goal_tracking, upright };

std::string to_string(Family f);
Family parse_family(std::string_view name);
std::string to_string(RewardId r);

/// One MDP of a family. Members of a family share state space, action space and
/// reward; they differ only through `mass_scale` and `joint_noise`.
struct EnvSpec
{
  Family family = Family::point_mass_2d;
  Index state_dim = 4;
  Index action_dim = 2;
  double mass_scale = 1.0;
  double joint_noise = 0.0; // executed action = commanded + U[-joint_noise, joint_noise] per component
  int horizon = 100;
  RewardId reward = RewardId::goal_tracking;
  double init_std = 0.3;

  void validate() const;
  bool operator==(const EnvSpec &) const = default;
};

/// Family defaults with the given dynamics shift applied.
EnvSpec make_env(Family family, double mass_scale = 1.0, double joint_noise = 0.0);

nlohmann::json to_json(const EnvSpec &spec);
EnvSpec env_from_json(const nlohmann::json &j);

struct EnvState
{
  Vector x;
  int t = 0;
};

struct StepResult
{
  EnvState next;
  double reward = 0.0;
  bool done = false;
  bool failed = false;  // the family's failure predicate fired
  bool timeout = false; // horizon reached without failure
  Vector executed;      // action actually applied, after clipping and joint noise
};

/// Sample from the family's initial-state distribution.
EnvState reset(const EnvSpec &spec, Rng &rng);

/// Deterministic dynamics for an already-executed action; the pure part of `step`.
Vector dynamics(const EnvSpec &spec, const Eigen::Ref<const Vector> &state, const Eigen::Ref<const Vector> &executed);

/// Reward shared by every member of the family. Depends on (state, action) only.
double reward(const EnvSpec &spec, const Eigen::Ref<const Vector> &state, const Eigen::Ref<const Vector> &action);

bool failure(const EnvSpec &spec, const Eigen::Ref<const Vector> &state);

/// Clip the action to [-1, 1], apply joint noise (drawn from `rng` when the
/// amplitude is positive) and advance one step. Throws on non-finite actions or
/// when stepping a finished episode.
StepResult step(const EnvSpec &spec, const EnvState &state, const Eigen::Ref<const Vector> &action, Rng &rng);

Vector clip_action(const Eigen::Ref<const Vector> &action);

enum class Tier { random, medium, expert, medium_replay, medium_expert };

std::string to_string(Tier t);
Tier parse_tier(std::string_view name);

struct BehaviorSpec
{
  Tier tier = Tier::medium;
  double noise_std = 0.3;

  void validate() const;
  bool operator==(const BehaviorSpec &) const = default;
};

nlohmann::json to_json(const BehaviorSpec &spec);
BehaviorSpec behavior_from_json(const nlohmann::json &j);

/// Where a composite tier is in its schedule. `progress` in [0,1] drives the
/// random-to-medium annealing of medium-replay; `episode` alternates the halves
/// of medium-expert.
struct PolicyContext
{
  double progress = 1.0;
  long episode = 0;
};

/// Analytic near-optimal controller for the target dynamics (mass scale 1).
Vector expert_action(const EnvSpec &spec, const Eigen::Ref<const Vector> &state);

/// Medium attenuates the expert action by this factor before adding noise.
inline constexpr double medium_attenuation = 0.6;

Vector scripted_policy(const EnvSpec &spec, const BehaviorSpec &behavior, const EnvState &state, Rng &rng,
                       const PolicyContext &context = {});

struct References
{
  double random_return = 0.0;
  double expert_return = 0.0;
};

/// Monte-Carlo mean returns of the uniform-random and noiseless-expert policies.
References compute_references(const EnvSpec &spec, int episodes, std::uint64_t seed);

/// Per-family normalisation references: 1000-episode Monte-Carlo on the
/// unshifted family member, computed once per process and memoised.
const References &family_references(Family family);

double normalized_score(Family family, double mean_return);

} // namespace bosa::envs
