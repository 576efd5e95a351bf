#include "bosa/envs/env.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace bosa::envs {

namespace {

// point-mass-2d: state (px, py, vx, vy), action = planar force.
constexpr double pm_dt = 0.1;
constexpr double pm_damping = 0.5;
constexpr double pm_arena = 2.0;
constexpr double pm_goal_x = 1.0;
constexpr double pm_goal_y = 1.0;
constexpr double pm_kp = 3.0;
constexpr double pm_kd = 2.5;

// pendulum: state (cos th, sin th, th_dot), th = 0 upright, action = torque.
constexpr double pd_dt = 0.05;
constexpr double pd_gravity = 10.0;
constexpr double pd_length = 1.0;
constexpr double pd_max_torque = 5.0;
constexpr double pd_max_speed = 8.0;
constexpr double pd_kp = 3.0;
constexpr double pd_kd = 0.6;

double pendulum_angle(const Eigen::Ref<const Vector> &s) { return std::atan2(s[1], s[0]); }

} // namespace

std::string to_string(Family f) { return f == Family::point_mass_2d ? "point-mass-2d" : "pendulum-like"; }

Family parse_family(std::string_view name)
{
  if (name == "point-mass-2d") { return Family::point_mass_2d; }
  if (name == "pendulum-like") { return Family::pendulum; }
  throw std::invalid_argument("unknown environment family: " + std::string(name));
}

std::string to_string(RewardId r) { return r == RewardId::goal_tracking ? "goal-tracking" : "upright"; }

namespace {

EnvSpec family_defaults(Family family, double mass_scale, double joint_noise)
{
  EnvSpec spec;
  spec.family = family;
  spec.mass_scale = mass_scale;
  spec.joint_noise = joint_noise;
  if (family == Family::point_mass_2d) {
    spec.state_dim = 4;
    spec.action_dim = 2;
    spec.horizon = 100;
    spec.reward = RewardId::goal_tracking;
    spec.init_std = 0.3;
  } else {
    spec.state_dim = 3;
    spec.action_dim = 1;
    spec.horizon = 200;
    spec.reward = RewardId::upright;
    spec.init_std = 0.3;
  }
  return spec;
}

} // namespace

EnvSpec make_env(Family family, double mass_scale, double joint_noise)
{
  EnvSpec spec = family_defaults(family, mass_scale, joint_noise);
  spec.validate();
  return spec;
}

void EnvSpec::validate() const
{
  if (!(mass_scale > 0.0)) { throw std::invalid_argument("EnvSpec: mass scale must be > 0"); }
  if (!(joint_noise >= 0.0)) { throw std::invalid_argument("EnvSpec: joint-noise amplitude must be >= 0"); }
  if (horizon < 1) { throw std::invalid_argument("EnvSpec: horizon must be >= 1"); }
  if (!(init_std >= 0.0)) { throw std::invalid_argument("EnvSpec: initial std must be >= 0"); }
  const EnvSpec base = family_defaults(family, 1.0, 0.0);
  if (state_dim != base.state_dim || action_dim != base.action_dim) {
    throw std::invalid_argument("EnvSpec: dimensions do not match family " + to_string(family));
  }
}

nlohmann::json to_json(const EnvSpec &spec)
{
  return {{"family", to_string(spec.family)},   {"state_dim", spec.state_dim},
          {"action_dim", spec.action_dim},      {"mass_scale", spec.mass_scale},
          {"joint_noise", spec.joint_noise},    {"horizon", spec.horizon},
          {"reward", to_string(spec.reward)},   {"init_std", spec.init_std}};
}

EnvSpec env_from_json(const nlohmann::json &j)
{
  EnvSpec spec = make_env(parse_family(j.at("family").get<std::string>()), j.value("mass_scale", 1.0),
                          j.value("joint_noise", 0.0));
  spec.horizon = j.value("horizon", spec.horizon);
  spec.init_std = j.value("init_std", spec.init_std);
  spec.validate();
  return spec;
}

EnvState reset(const EnvSpec &spec, Rng &rng)
{
  spec.validate();
  EnvState state{Vector::Zero(spec.state_dim), 0};
  if (spec.family == Family::point_mass_2d) {
    state.x[0] = spec.init_std * rng.normal();
    state.x[1] = spec.init_std * rng.normal();
  } else {
    const double theta = spec.init_std * rng.normal();
    state.x[0] = std::cos(theta);
    state.x[1] = std::sin(theta);
  }
  return state;
}

Vector clip_action(const Eigen::Ref<const Vector> &action) { return action.cwiseMax(-1.0).cwiseMin(1.0); }

Vector dynamics(const EnvSpec &spec, const Eigen::Ref<const Vector> &s, const Eigen::Ref<const Vector> &executed)
{
  require_dim("state", spec.state_dim, s.size());
  require_dim("action", spec.action_dim, executed.size());
  Vector next(spec.state_dim);
  if (spec.family == Family::point_mass_2d) {
    for (Index k = 0; k < 2; ++k) {
      const double v = s[2 + k] + pm_dt * (executed[k] / spec.mass_scale - pm_damping * s[2 + k]);
      next[2 + k] = v;
      next[k] = s[k] + pm_dt * v;
    }
  } else {
    const double theta = pendulum_angle(s);
    const double inertia = spec.mass_scale * pd_length * pd_length;
    double omega = s[2] + pd_dt * (1.5 * pd_gravity / pd_length * std::sin(theta) +
                                   3.0 / inertia * pd_max_torque * executed[0]);
    omega = std::clamp(omega, -pd_max_speed, pd_max_speed);
    const double next_theta = theta + pd_dt * omega;
    next[0] = std::cos(next_theta);
    next[1] = std::sin(next_theta);
    next[2] = omega;
  }
  return next;
}

double reward(const EnvSpec &spec, const Eigen::Ref<const Vector> &s, const Eigen::Ref<const Vector> &a)
{
  require_dim("state", spec.state_dim, s.size());
  require_dim("action", spec.action_dim, a.size());
  if (spec.reward == RewardId::goal_tracking) {
    const double dx = s[0] - pm_goal_x;
    const double dy = s[1] - pm_goal_y;
    return std::exp(-2.0 * std::sqrt(dx * dx + dy * dy)) - 0.01 * a.squaredNorm() / static_cast<double>(a.size());
  }
  const double theta = pendulum_angle(s);
  return -(theta * theta + 0.1 * s[2] * s[2] + 0.001 * a.squaredNorm());
}

bool failure(const EnvSpec &spec, const Eigen::Ref<const Vector> &s)
{
  if (spec.family == Family::point_mass_2d) { return std::abs(s[0]) > pm_arena || std::abs(s[1]) > pm_arena; }
  return false;
}

StepResult step(const EnvSpec &spec, const EnvState &state, const Eigen::Ref<const Vector> &action, Rng &rng)
{
  require_dim("action", spec.action_dim, action.size());
  require_dim("state", spec.state_dim, state.x.size());
  if (!action.allFinite()) { throw std::invalid_argument("step: action contains non-finite entries"); }
  if (state.t >= spec.horizon) { throw std::logic_error("step: episode already finished"); }

  StepResult out;
  const Vector commanded = clip_action(action);
  out.executed = commanded;
  if (spec.joint_noise > 0.0) {
    for (Index i = 0; i < out.executed.size(); ++i) { out.executed[i] += rng.uniform(-spec.joint_noise, spec.joint_noise); }
  }
  out.reward = reward(spec, state.x, commanded);
  out.next = EnvState{dynamics(spec, state.x, out.executed), state.t + 1};
  out.failed = failure(spec, out.next.x);
  out.timeout = !out.failed && out.next.t >= spec.horizon;
  out.done = out.failed || out.timeout;
  return out;
}

std::string to_string(Tier t)
{
  switch (t) {
  case Tier::random: return "random";
  case Tier::medium: return "medium";
  case Tier::expert: return "expert";
  case Tier::medium_replay: return "medium-replay";
  case Tier::medium_expert: return "medium-expert";
  }
  return "?";
}

Tier parse_tier(std::string_view name)
{
  for (Tier t : {Tier::random, Tier::medium, Tier::expert, Tier::medium_replay, Tier::medium_expert}) {
    if (name == to_string(t)) { return t; }
  }
  throw std::invalid_argument("unknown behavior tier: " + std::string(name));
}

void BehaviorSpec::validate() const
{
  if (!(noise_std >= 0.0)) { throw std::invalid_argument("BehaviorSpec: noise std must be >= 0"); }
}

nlohmann::json to_json(const BehaviorSpec &spec) { return {{"tier", to_string(spec.tier)}, {"noise_std", spec.noise_std}}; }

BehaviorSpec behavior_from_json(const nlohmann::json &j)
{
  BehaviorSpec spec{parse_tier(j.at("tier").get<std::string>()), j.value("noise_std", 0.3)};
  spec.validate();
  return spec;
}

Vector expert_action(const EnvSpec &spec, const Eigen::Ref<const Vector> &s)
{
  require_dim("state", spec.state_dim, s.size());
  Vector a(spec.action_dim);
  if (spec.family == Family::point_mass_2d) {
    a[0] = pm_kp * (pm_goal_x - s[0]) - pm_kd * s[2];
    a[1] = pm_kp * (pm_goal_y - s[1]) - pm_kd * s[3];
  } else {
    a[0] = -(pd_kp * pendulum_angle(s) + pd_kd * s[2]);
  }
  return clip_action(a);
}

Vector scripted_policy(const EnvSpec &spec, const BehaviorSpec &behavior, const EnvState &state, Rng &rng,
                       const PolicyContext &context)
{
  behavior.validate();
  auto uniform_action = [&] {
    Vector a(spec.action_dim);
    for (Index i = 0; i < a.size(); ++i) { a[i] = rng.uniform(-1.0, 1.0); }
    return a;
  };
  auto noisy = [&](Vector a) {
    if (behavior.noise_std > 0.0) {
      for (Index i = 0; i < a.size(); ++i) { a[i] += behavior.noise_std * rng.normal(); }
    }
    return clip_action(a);
  };
  auto medium = [&] { return noisy(medium_attenuation * expert_action(spec, state.x)); };

  switch (behavior.tier) {
  case Tier::random: return uniform_action();
  case Tier::expert: return noisy(expert_action(spec, state.x));
  case Tier::medium: return medium();
  case Tier::medium_replay:
    // Replay buffer of a behavior annealing from uniform-random towards medium.
    if (rng.uniform() >= context.progress) { return uniform_action(); }
    return medium();
  case Tier::medium_expert:
    if (context.episode % 2 == 0) { return medium(); }
    return noisy(expert_action(spec, state.x));
  }
  return uniform_action();
}

References compute_references(const EnvSpec &spec, int episodes, std::uint64_t seed)
{
  if (episodes < 1) { throw std::invalid_argument("compute_references: episodes must be >= 1"); }
  const Rng root(seed);
  auto rollout_mean = [&](bool expert, std::uint64_t stream) {
    Rng rng = root.split(stream);
    CompensatedSum total;
    for (int e = 0; e < episodes; ++e) {
      EnvState s = reset(spec, rng);
      for (;;) {
        Vector a(spec.action_dim);
        if (expert) {
          a = expert_action(spec, s.x);
        } else {
          for (Index i = 0; i < a.size(); ++i) { a[i] = rng.uniform(-1.0, 1.0); }
        }
        StepResult r = step(spec, s, a, rng);
        total.add(r.reward);
        if (r.done) { break; }
        s = std::move(r.next);
      }
    }
    return total.value() / episodes;
  };
  return References{rollout_mean(false, 1), rollout_mean(true, 2)};
}

const References &family_references(Family family)
{
  static std::mutex mutex;
  static std::map<Family, References> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(family);
  if (it == cache.end()) { it = cache.emplace(family, compute_references(make_env(family), 1000, 20240611)).first; }
  return it->second;
}

double normalized_score(Family family, double mean_return)
{
  const References &ref = family_references(family);
  const double span = ref.expert_return - ref.random_return;
  if (!(std::abs(span) > 0.0)) { throw std::runtime_error("normalized_score: degenerate references"); }
  return 100.0 * (mean_return - ref.random_return) / span;
}

} // namespace bosa::envs
