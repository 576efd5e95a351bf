#pragma once

#include "bosa/agent/actor_critic.hpp"

namespace bosa::agent {

/// A minibatch as the losses consume it: raw states plus per-member flags.
struct CriticBatch
{
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Vector rewards;
  Vector not_done;
  std::vector<std::uint8_t> bellman; // member enters the Bellman term
  std::vector<std::uint8_t> source;  // member enters the conservation term

  Index size() const { return rewards.size(); }
};

struct CriticTerms
{
  double loss = 0.0;
  double bellman = 0.0;
  double conservation = 0.0;
  Index passed = 0;
  bool starved = false; // nothing passed the mask; Bellman term is 0
  double mean_q_source = 0.0;
  double mean_q_target = 0.0;
};

/// 0.5 * mean over masked members of (Q1 - y)^2 + (Q2 - y)^2
///   + w * mean over source members of min(Q1, Q2),
/// with y = r + discount * not_done * min(Q1', Q2')(s', pi'(s') + clipped noise).
/// Gradients are added into the critic stores when `accumulate` is set.
CriticTerms critic_loss(ActorCriticState &ac, const BosaConfig &config, const CriticBatch &batch, Rng &noise,
                        bool accumulate);

struct ActorTerms
{
  double loss = 0.0;
  double q_term = 0.0;  // -mean Q1 / scale
  double q_scale = 1.0; // detached mean |Q1| when constrained, else 1
  double mean_log_likelihood = 0.0;
  double gap = 0.0; // mean log-likelihood - threshold; 0 when the constraint is off
};

/// -mean Q1(s, pi(s)) / mean|Q1| - lambda * (mean log pi_beta(pi(s)|s) - eps_th).
/// `behavior` may be null when lambda is 0 and the constraint is off. `rng`
/// drives actor dropout and the importance samples.
ActorTerms actor_loss(ActorCriticState &ac, const BosaConfig &config, const Eigen::Ref<const Matrix> &states,
                      const density::DensityModel *behavior, double lambda, Rng &rng, bool accumulate);

/// Mean squared error between pi(s) and the dataset action.
double behavior_clone_loss(ActorCriticState &ac, const Eigen::Ref<const Matrix> &states,
                           const Eigen::Ref<const Matrix> &actions, Rng &rng, bool accumulate);

/// Projected dual descent: lambda <- max(0, lambda - lr * gap).
double dual_step(ActorCriticState &ac, double gap, double lr);

} // namespace bosa::agent
