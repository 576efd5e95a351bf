#pragma once

#include "bosa/agent/losses.hpp"
#include "bosa/density/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace bosa::testing {

/// max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, floor)
inline double max_relative_error(const Vector &analytic, const Vector &numeric, double floor = 1e-6)
{
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

/// Central differences of f with respect to every entry of x (x is restored).
inline Vector numeric_gradient(const std::function<double()> &f, Vector &x, double h = 1e-5)
{
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Kolmogorov-Smirnov statistic of samples against U[lo, hi].
inline double ks_uniform(std::vector<double> xs, double lo, double hi)
{
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = std::clamp((xs[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value at significance 0.01.
inline double ks_critical_01(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

/// Small actor-critic with random weights on a 3-d state, 2-d action problem.
inline agent::ActorCriticState small_agent(const agent::BosaConfig &cfg, std::uint64_t seed, Index sd = 3, Index ad = 2)
{
  Rng rng(seed);
  return agent::make_actor_critic(sd, ad, cfg, data::Normalizer::identity(sd), rng);
}

inline agent::CriticBatch random_critic_batch(Index sd, Index ad, Index n, Rng &rng)
{
  agent::CriticBatch b;
  b.states = rng.normal_matrix(sd, n);
  b.actions = rng.normal_matrix(ad, n).array().tanh().matrix();
  b.next_states = rng.normal_matrix(sd, n);
  b.rewards = rng.normal_vector(n);
  b.not_done = Vector::Ones(n);
  b.not_done[0] = 0.0;
  for (Index j = 0; j < n; ++j) {
    b.bellman.push_back(rng.uniform() < 0.7 ? 1 : 0);
    b.source.push_back(rng.uniform() < 0.5 ? 1 : 0);
  }
  b.bellman[0] = 1;
  return b;
}

/// Worst relative error of the critic loss gradient over both critics.
inline double critic_gradient_error(std::uint64_t seed)
{
  agent::BosaConfig cfg;
  cfg.hidden_dim = 8;
  cfg.conservation_weight = 0.1;
  agent::ActorCriticState ac = small_agent(cfg, seed);
  Rng rng(seed + 100);
  const agent::CriticBatch batch = random_critic_batch(3, 2, 16, rng);
  const Rng noise(seed + 200);

  ac.critic1.store.zero_grad();
  ac.critic2.store.zero_grad();
  Rng n0 = noise;
  agent::critic_loss(ac, cfg, batch, n0, true);
  const Vector a1 = ac.critic1.store.grad, a2 = ac.critic2.store.grad;

  auto f = [&] {
    Rng n1 = noise;
    return agent::critic_loss(ac, cfg, batch, n1, false).loss;
  };
  const Vector g1 = numeric_gradient(f, ac.critic1.store.params);
  const Vector g2 = numeric_gradient(f, ac.critic2.store.params);
  return std::max(max_relative_error(a1, g1), max_relative_error(a2, g2));
}

/// A behavior model fit briefly on random (state, action) pairs.
inline density::DensityModel toy_behavior(std::uint64_t seed, Index sd = 3, Index ad = 2)
{
  Rng rng(seed);
  const Index n = 256;
  data::OfflineDataset d = data::make_dataset(sd, ad, n);
  for (Index i = 0; i < n; ++i) {
    data::Transition t;
    t.state = rng.normal_vector(sd);
    t.action = (0.5 * t.state.head(ad) + 0.3 * rng.normal_vector(ad)).array().tanh().matrix();
    t.next_state = t.state;
    set_transition(d, i, t);
  }
  data::recompute_stats(d);
  density::DensityConfig dc;
  dc.hidden_dim = 16;
  dc.train.iterations = 200;
  dc.train.batch_size = 64;
  Rng fit = rng.split(1);
  return density::fit_behavior(d, dc, fit);
}

/// Worst relative error of the actor loss gradient (Q term with the scale held fixed, plus the constraint).
inline double actor_gradient_error(std::uint64_t seed)
{
  agent::BosaConfig cfg;
  cfg.hidden_dim = 8;
  cfg.likelihood_samples = 4;
  agent::ActorCriticState ac = small_agent(cfg, seed);
  const density::DensityModel behavior = toy_behavior(seed + 1);
  Rng rng(seed + 300);
  const Matrix states = rng.normal_matrix(3, 12);
  const Rng stream(seed + 400);
  const double lambda = 0.7;

  ac.actor.store.zero_grad();
  Rng r0 = stream;
  const agent::ActorTerms base = agent::actor_loss(ac, cfg, states, &behavior, lambda, r0, true);
  const Vector analytic = ac.actor.store.grad;
  const double scale = base.q_scale;

  auto f = [&] {
    Rng r1 = stream;
    const agent::ActorTerms t = agent::actor_loss(ac, cfg, states, &behavior, lambda, r1, false);
    return t.q_term * t.q_scale / scale + (t.loss - t.q_term);
  };
  const Vector numeric = numeric_gradient(f, ac.actor.store.params);
  return max_relative_error(analytic, numeric);
}

/// Worst relative error of the ELBO gradient over encoder and decoder.
inline double elbo_gradient_error(std::uint64_t seed)
{
  Rng rng(seed);
  const density::CvaeSpec spec = density::make_cvae_spec(3, 2, 8, 3, 0.5);
  density::CvaeModel model = density::make_cvae(spec, rng);
  const Matrix cond = rng.normal_matrix(3, 10);
  const Matrix out = rng.normal_matrix(2, 10);
  const Rng stream(seed + 500);

  model.encoder.store.zero_grad();
  model.decoder.store.zero_grad();
  Rng r0 = stream;
  density::elbo_loss(model, cond, out, r0, 2);
  const Vector ae = model.encoder.store.grad, ad = model.decoder.store.grad;

  auto f = [&] {
    Rng r1 = stream;
    return density::elbo_value(model, cond, out, r1, 2, spec.kl_weight).loss;
  };
  const Vector ne = numeric_gradient(f, model.encoder.store.params);
  const Vector nd = numeric_gradient(f, model.decoder.store.params);
  return std::max(max_relative_error(ae, ne), max_relative_error(ad, nd));
}

} // namespace bosa::testing
