#pragma once

#include "bosa/data/dataset.hpp"
#include "bosa/density/density_model.hpp"
#include "bosa/nn/mlp.hpp"

namespace bosa::agent {

/// Learner variants. The first one is the complete method; the next four each
/// remove one component; the last two are reference learners on the same code path.
enum class Variant {
  full,
  no_policy_reg,       // lambda pinned to 0, no behavior model needed
  no_filter,           // Bellman term over every transition
  no_conservation,     // w = 0
  target_data_bellman, // Bellman term over target-tagged transitions only, no filter
  naive_mix_baseline,  // support-constrained policy, plain Bellman over the mix, w = 0
  behavior_clone,      // action regression, critics untouched
};

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);
std::vector<Variant> all_variants();

struct Td3Config
{
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  int policy_frequency = 2;
  double target_rate = 0.005;
};

struct BosaConfig
{
  double lambda_policy = 0.1;     // initial Lagrange multiplier
  double lambda_transition = 0.1; // accepted for completeness; the filter is a hard indicator
  density::SupportThreshold policy_threshold = density::SupportThreshold::from_likelihood(0.1);
  density::SupportThreshold transition_threshold = density::SupportThreshold::from_likelihood(0.08);
  double conservation_weight = 0.1;
  double discount = 0.99;
  Td3Config td3;
  Variant variant = Variant::full;

  double dual_lr = 1e-3;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  Index batch_size = 256;
  Index hidden_dim = 256;
  Index depth = 3; // affine layers per network
  double actor_dropout = 0.1;
  int likelihood_samples = 10; // importance samples inside the actor constraint

  void validate() const;
  nlohmann::json to_json() const;
  static BosaConfig from_json(const nlohmann::json &j);

  /// Which pieces the variant switches on.
  bool uses_policy_constraint() const;
  bool uses_transition_filter() const;
  double effective_conservation_weight() const;
};

/// Online networks, their EMA targets and the dual variable.
///
/// Networks see states standardised by `state_norm`. The actor emits
/// pre-squash values; actions are tanh of that.
struct ActorCriticState
{
  nn::Mlp<double> actor;
  nn::Mlp<double> critic1;
  nn::Mlp<double> critic2;
  nn::EmaTracker<double> actor_target;
  nn::EmaTracker<double> critic1_target;
  nn::EmaTracker<double> critic2_target;
  data::Normalizer state_norm;
  double lambda = 0.0;
  double lambda_peak = 0.0;
  Index step = 0;
  Index actor_updates = 0;

  Index state_dim() const { return actor.spec.input_dim; }
  Index action_dim() const { return actor.spec.output_dim; }
};

ActorCriticState make_actor_critic(Index state_dim, Index action_dim, const BosaConfig &config,
                                   const data::Normalizer &state_norm, Rng &rng);

/// Deterministic evaluation action(s) in [-1, 1]; columns are raw states.
Matrix act(const ActorCriticState &ac, const Eigen::Ref<const Matrix> &states);
Vector act_one(const ActorCriticState &ac, const Eigen::Ref<const Vector> &state);

/// min(Q1, Q2) of the online critics; raw states.
Vector min_twin_q(const ActorCriticState &ac, const Eigen::Ref<const Matrix> &states,
                  const Eigen::Ref<const Matrix> &actions);

/// Target-network TD value min(Q1', Q2')(s', pi'(s')) without smoothing noise; raw states.
Vector target_value(const ActorCriticState &ac, const Eigen::Ref<const Matrix> &next_states);

/// Parameters and targets as checkpoints in `dir`; lambda and counters in a JSON sidecar.
void save_actor_critic(const std::filesystem::path &dir, const ActorCriticState &ac);
ActorCriticState load_actor_critic(const std::filesystem::path &dir);

} // namespace bosa::agent
