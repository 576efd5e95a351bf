#include "bosa/agent/train.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace bosa::agent {

namespace {

enum Stream : std::uint64_t { batch_stream = 0, noise_stream = 1, actor_stream = 2 };

SupportFilter pass_everything(const data::OfflineDataset &data)
{
  SupportFilter f;
  f.bellman.assign(static_cast<std::size_t>(data.size()), 1);
  f.source.resize(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < f.source.size(); ++i) { f.source[i] = data::is_source_like(data.tags[i]) ? 1 : 0; }
  return f;
}

} // namespace

double SupportFilter::pass_rate() const
{
  if (bellman.empty()) { return 0.0; }
  return static_cast<double>(std::accumulate(bellman.begin(), bellman.end(), Index{0})) /
         static_cast<double>(bellman.size());
}

double SupportFilter::pass_rate(const data::OfflineDataset &data, data::DomainTag tag) const
{
  require_dim("filter size", data.size(), static_cast<Index>(bellman.size()));
  Index seen = 0, passed = 0;
  for (std::size_t i = 0; i < bellman.size(); ++i) {
    if (data.tags[i] != tag) { continue; }
    ++seen;
    passed += bellman[i];
  }
  return seen == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(seen);
}

SupportFilter make_filter(const data::OfflineDataset &data, const BosaConfig &config, const Vector &scores)
{
  SupportFilter f = pass_everything(data);
  if (config.uses_transition_filter()) {
    require_dim("filter scores", data.size(), scores.size());
    for (Index i = 0; i < data.size(); ++i) {
      f.bellman[static_cast<std::size_t>(i)] = config.transition_threshold.passes(scores[i]) ? 1 : 0;
    }
  } else if (config.variant == Variant::target_data_bellman) {
    for (std::size_t i = 0; i < f.bellman.size(); ++i) { f.bellman[i] = data.tags[i] == data::DomainTag::target; }
  }
  return f;
}

std::string StepDiagnostics::csv_header()
{
  return "step,critic_loss,actor_loss,lambda,gap,pass_rate,mean_q_source,mean_q_target,starved";
}

std::string StepDiagnostics::csv_row() const
{
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.6f,%.9g,%.9g,%d", static_cast<long long>(step),
                critic_loss, actor_loss, lambda, gap, pass_rate, mean_q_source, mean_q_target, starved ? 1 : 0);
  return buf;
}

StepDiagnostics train_step(ActorCriticState &ac, const BosaConfig &config, const TrainInputs &in, const Rng &rng)
{
  if (in.data == nullptr || in.filter == nullptr) { throw std::invalid_argument("train_step: missing data or filter"); }
  const data::OfflineDataset &d = *in.data;
  const SupportFilter &filter = *in.filter;
  require_dim("filter size", d.size(), static_cast<Index>(filter.bellman.size()));
  if (d.empty()) { throw std::invalid_argument("train_step: empty dataset"); }

  const auto step = static_cast<std::uint64_t>(ac.step);
  Rng batch_rng = rng.split(step, batch_stream);
  Rng noise_rng = rng.split(step, noise_stream);
  Rng actor_rng = rng.split(step, actor_stream);

  const data::Batch raw = data::sample_batch(d, config.batch_size, batch_rng, data::StateMode::raw);
  CriticBatch batch{raw.states, raw.actions, raw.next_states, raw.rewards, raw.not_done, {}, {}};
  batch.bellman.reserve(raw.indices.size());
  batch.source.reserve(raw.indices.size());
  for (Index i : raw.indices) {
    batch.bellman.push_back(filter.bellman[static_cast<std::size_t>(i)]);
    batch.source.push_back(filter.source[static_cast<std::size_t>(i)]);
  }

  StepDiagnostics diag;
  diag.step = ac.step;
  if (config.variant != Variant::behavior_clone) {
    ac.critic1.store.zero_grad();
    ac.critic2.store.zero_grad();
    const CriticTerms ct = critic_loss(ac, config, batch, noise_rng, true);
    nn::adam_step<double>(ac.critic1.store, config.critic_lr);
    nn::adam_step<double>(ac.critic2.store, config.critic_lr);
    diag.critic_loss = ct.loss;
    diag.pass_rate = static_cast<double>(ct.passed) / static_cast<double>(batch.size());
    diag.mean_q_source = ct.mean_q_source;
    diag.mean_q_target = ct.mean_q_target;
    diag.starved = ct.starved;
  }

  if (step % static_cast<std::uint64_t>(config.td3.policy_frequency) == 0) {
    ac.actor.store.zero_grad();
    if (config.variant == Variant::behavior_clone) {
      diag.actor_loss = behavior_clone_loss(ac, batch.states, batch.actions, actor_rng, true);
    } else {
      const ActorTerms at = actor_loss(ac, config, batch.states, in.behavior, ac.lambda, actor_rng, true);
      diag.actor_loss = at.loss;
      if (config.uses_policy_constraint()) {
        diag.gap = at.gap;
        dual_step(ac, at.gap, config.dual_lr);
      }
    }
    nn::adam_step<double>(ac.actor.store, config.actor_lr);
    nn::ema_update<double>(ac.actor_target, ac.actor.store);
    nn::ema_update<double>(ac.critic1_target, ac.critic1.store);
    nn::ema_update<double>(ac.critic2_target, ac.critic2.store);
    ++ac.actor_updates;
    diag.actor_updated = true;
  }
  diag.lambda = ac.lambda;
  ++ac.step;
  return diag;
}

TrainResult train(const BosaConfig &config, const TrainInputs &in, const TrainOptions &options, std::uint64_t seed)
{
  config.validate();
  if (in.data == nullptr) { throw std::invalid_argument("train: missing dataset"); }
  const data::OfflineDataset &d = *in.data;
  if (config.uses_policy_constraint() && in.behavior == nullptr) {
    throw std::invalid_argument("train: variant " + to_string(config.variant) + " needs a behavior model");
  }
  SupportFilter fallback;
  TrainInputs inputs = in;
  if (inputs.filter == nullptr) {
    if (config.uses_transition_filter() && std::isfinite(config.transition_threshold.log_value)) {
      throw std::invalid_argument("train: variant " + to_string(config.variant) + " needs transition scores");
    }
    fallback = make_filter(d, config, Vector::Constant(d.size(), 0.0));
    inputs.filter = &fallback;
  }

  const Rng root(seed);
  Rng init = root.split(0);
  TrainResult result = options.resume_from
                         ? *options.resume_from
                         : TrainResult{make_actor_critic(d.state_dim, d.action_dim, config, d.state_stats, init), {}, 0,
                                       {}, {}};
  result.history.clear();
  const Rng step_rng = root.split(1);
  for (Index t = result.state.step; t < options.steps; ++t) {
    const StepDiagnostics diag = train_step(result.state, config, inputs, step_rng);
    result.starvation_events += diag.starved ? 1 : 0;
    if (diag.actor_updated && config.uses_policy_constraint()) {
      result.lambda_trace.push_back(diag.lambda);
      result.gap_trace.push_back(diag.gap);
    }
    if (options.log_every > 0 && (t % options.log_every == 0 || t + 1 == options.steps)) {
      result.history.push_back(diag);
      if (options.on_log) { options.on_log(diag); }
    }
    if (options.on_checkpoint && options.checkpoint_every > 0 && (t + 1) % options.checkpoint_every == 0) {
      options.on_checkpoint(result);
    }
  }
  return result;
}

void save_progress(const std::filesystem::path &dir, const TrainResult &progress)
{
  save_actor_critic(dir, progress.state);
  std::string bytes;
  append_f64(bytes, static_cast<double>(progress.starvation_events));
  append_f64(bytes, static_cast<double>(progress.lambda_trace.size()));
  for (double v : progress.lambda_trace) { append_f64(bytes, v); }
  for (double v : progress.gap_trace) { append_f64(bytes, v); }
  nn::write_file(dir / "progress.bin", bytes);
}

TrainResult load_progress(const std::filesystem::path &dir)
{
  TrainResult r;
  r.state = load_actor_critic(dir);
  const std::string bytes = nn::read_file(dir / "progress.bin");
  if (bytes.size() < 16) { throw std::runtime_error(dir.string() + "/progress.bin: truncated"); }
  r.starvation_events = static_cast<Index>(read_f64(bytes, 0));
  const auto n = static_cast<std::size_t>(read_f64(bytes, 8));
  if (bytes.size() != 16 + 16 * n) { throw std::runtime_error(dir.string() + "/progress.bin: size mismatch"); }
  for (std::size_t i = 0; i < n; ++i) {
    r.lambda_trace.push_back(read_f64(bytes, 16 + 8 * i));
    r.gap_trace.push_back(read_f64(bytes, 16 + 8 * (n + i)));
  }
  return r;
}

} // namespace bosa::agent
