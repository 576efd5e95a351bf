#include "bosa/agent/losses.hpp"

#include <algorithm>
#include <cmath>

namespace bosa::agent {

namespace {

Matrix stack(const Eigen::Ref<const Matrix> &top, const Eigen::Ref<const Matrix> &bottom)
{
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

} // namespace

CriticTerms critic_loss(ActorCriticState &ac, const BosaConfig &config, const CriticBatch &batch, Rng &noise,
                        bool accumulate)
{
  const Index n = batch.size();
  const Index ad = ac.action_dim();
  require_dim("critic batch actions", n, batch.actions.cols());
  require_dim("critic batch next states", n, batch.next_states.cols());
  require_dim("critic batch not_done", n, batch.not_done.size());
  require_dim("critic batch bellman mask", n, static_cast<Index>(batch.bellman.size()));
  require_dim("critic batch source mask", n, static_cast<Index>(batch.source.size()));

  // TD target with target-policy smoothing; no gradient flows through it.
  const Matrix next_n = ac.state_norm.apply(batch.next_states);
  Matrix next_a = nn::forward<double>(ac.actor.spec, ac.actor_target.shadow, next_n).array().tanh().matrix();
  const double clip = config.td3.noise_clip;
  for (Index j = 0; j < n; ++j) {
    for (Index d = 0; d < ad; ++d) {
      const double eps = std::clamp(noise.normal() * config.td3.policy_noise, -clip, clip);
      next_a(d, j) = std::clamp(next_a(d, j) + eps, -1.0, 1.0);
    }
  }
  const Matrix next_in = stack(next_n, next_a);
  const Vector next_q = nn::forward<double>(ac.critic1.spec, ac.critic1_target.shadow, next_in)
                          .cwiseMin(nn::forward<double>(ac.critic2.spec, ac.critic2_target.shadow, next_in))
                          .row(0)
                          .transpose();
  const Vector y = batch.rewards + config.discount * batch.not_done.cwiseProduct(next_q);

  const Matrix in = stack(ac.state_norm.apply(batch.states), batch.actions);
  nn::Tape<double> tape1, tape2;
  const Vector q1 = ac.critic1(in, accumulate ? &tape1 : nullptr).row(0).transpose();
  const Vector q2 = ac.critic2(in, accumulate ? &tape2 : nullptr).row(0).transpose();
  const Vector qmin = q1.cwiseMin(q2);

  CriticTerms t;
  Index n_source = 0, n_target = 0;
  double sum_bellman = 0.0, sum_source = 0.0, sum_target = 0.0;
  for (Index j = 0; j < n; ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (batch.bellman[k]) {
      ++t.passed;
      sum_bellman += 0.5 * ((q1[j] - y[j]) * (q1[j] - y[j]) + (q2[j] - y[j]) * (q2[j] - y[j]));
    }
    if (batch.source[k]) {
      ++n_source;
      sum_source += qmin[j];
    } else {
      ++n_target;
      sum_target += qmin[j];
    }
  }
  const double w = config.effective_conservation_weight();
  t.starved = t.passed == 0;
  t.bellman = t.starved ? 0.0 : sum_bellman / static_cast<double>(t.passed);
  t.conservation = n_source > 0 ? w * sum_source / static_cast<double>(n_source) : 0.0;
  t.loss = t.bellman + t.conservation;
  t.mean_q_source = n_source > 0 ? sum_source / static_cast<double>(n_source) : 0.0;
  t.mean_q_target = n_target > 0 ? sum_target / static_cast<double>(n_target) : 0.0;

  if (accumulate) {
    Matrix g1 = Matrix::Zero(1, n);
    Matrix g2 = Matrix::Zero(1, n);
    for (Index j = 0; j < n; ++j) {
      const auto k = static_cast<std::size_t>(j);
      if (batch.bellman[k]) {
        g1(0, j) += (q1[j] - y[j]) / static_cast<double>(t.passed);
        g2(0, j) += (q2[j] - y[j]) / static_cast<double>(t.passed);
      }
      if (batch.source[k] && w > 0.0) {
        // The min routes its gradient to whichever twin attains it.
        (q1[j] <= q2[j] ? g1 : g2)(0, j) += w / static_cast<double>(n_source);
      }
    }
    ac.critic1.backprop(tape1, g1);
    ac.critic2.backprop(tape2, g2);
  }
  return t;
}

ActorTerms actor_loss(ActorCriticState &ac, const BosaConfig &config, const Eigen::Ref<const Matrix> &states,
                      const density::DensityModel *behavior, double lambda, Rng &rng, bool accumulate)
{
  const Index n = states.cols();
  if (n == 0) { throw std::invalid_argument("actor_loss: empty batch"); }
  const bool constrained = config.uses_policy_constraint();
  if (constrained && behavior == nullptr) { throw std::invalid_argument("actor_loss: variant needs a behavior model"); }
  if (constrained && !std::isfinite(config.policy_threshold.log_value)) {
    throw std::invalid_argument("actor_loss: the policy constraint needs a finite threshold");
  }

  const Matrix sn = ac.state_norm.apply(states);
  nn::Tape<double> actor_tape, critic_tape;
  Rng dropout = rng.split(1);
  const Matrix a = ac.actor(sn, &actor_tape, &dropout).array().tanh().matrix();
  const Matrix in = stack(sn, a);
  const Vector q = ac.critic1(in, &critic_tape).row(0).transpose();

  ActorTerms t;
  // Without the constraint there is nothing to balance against, so the Q term stays unscaled.
  t.q_scale = constrained ? std::max(q.cwiseAbs().mean(), 1e-6) : 1.0;
  t.q_term = -q.mean() / t.q_scale;
  t.loss = t.q_term;

  Matrix d_action = Matrix::Zero(a.rows(), n);
  if (accumulate) {
    const Matrix gq = Matrix::Constant(1, n, -1.0 / (static_cast<double>(n) * t.q_scale));
    d_action = ac.critic1.input_gradient(critic_tape, gq).bottomRows(a.rows());
  }
  if (constrained) {
    Rng importance = rng.split(2);
    const density::ActionLikelihood ll =
      density::behavior_log_likelihood_with_grad(*behavior, states, a, importance, config.likelihood_samples);
    t.mean_log_likelihood = ll.value.mean();
    t.gap = t.mean_log_likelihood - config.policy_threshold.log_value;
    t.loss -= lambda * t.gap;
    if (accumulate) { d_action -= (lambda / static_cast<double>(n)) * ll.d_action; }
  }
  if (accumulate) {
    const Matrix d_pre = (d_action.array() * (1.0 - a.array().square())).matrix();
    ac.actor.backprop(actor_tape, d_pre);
  }
  return t;
}

double behavior_clone_loss(ActorCriticState &ac, const Eigen::Ref<const Matrix> &states,
                           const Eigen::Ref<const Matrix> &actions, Rng &rng, bool accumulate)
{
  require_dim("behavior clone actions", ac.action_dim(), actions.rows());
  require_dim("behavior clone columns", states.cols(), actions.cols());
  nn::Tape<double> tape;
  Rng dropout = rng.split(1);
  const Matrix a = ac.actor(ac.state_norm.apply(states), &tape, &dropout).array().tanh().matrix();
  const Matrix diff = a - actions;
  const double count = static_cast<double>(diff.size());
  if (accumulate) {
    const Matrix d_pre = ((2.0 / count) * diff.array() * (1.0 - a.array().square())).matrix();
    ac.actor.backprop(tape, d_pre);
  }
  return diff.squaredNorm() / count;
}

double dual_step(ActorCriticState &ac, double gap, double lr)
{
  if (!(lr > 0.0)) { throw std::invalid_argument("dual_step: learning rate must be > 0"); }
  if (std::isnan(gap)) { throw std::invalid_argument("dual_step: NaN constraint gap"); }
  ac.lambda = std::max(0.0, ac.lambda - lr * gap);
  ac.lambda_peak = std::max(ac.lambda_peak, ac.lambda);
  return ac.lambda;
}

} // namespace bosa::agent
