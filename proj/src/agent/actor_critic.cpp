#include "bosa/agent/actor_critic.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <algorithm>
#include <cmath>

namespace bosa::agent {

namespace {

constexpr std::pair<Variant, const char *> variant_names[] = {
  {Variant::full, "full"},
  {Variant::no_policy_reg, "no-policy-reg"},
  {Variant::no_filter, "no-filter"},
  {Variant::no_conservation, "no-conservation"},
  {Variant::target_data_bellman, "target-data-bellman"},
  {Variant::naive_mix_baseline, "naive-mix-baseline"},
  {Variant::behavior_clone, "behavior-clone"},
};

nlohmann::json threshold_json(const density::SupportThreshold &t)
{
  if (t.as_likelihood) { return {{"likelihood", t.likelihood()}}; }
  if (std::isinf(t.log_value)) { return {{"log", t.log_value > 0 ? "inf" : "-inf"}}; }
  return {{"log", t.log_value}};
}

density::SupportThreshold threshold_from_json(const nlohmann::json &j)
{
  if (j.is_number()) { return density::SupportThreshold::from_likelihood(j.get<double>()); }
  if (j.contains("likelihood")) { return density::SupportThreshold::from_likelihood(j.at("likelihood").get<double>()); }
  const auto &v = j.at("log");
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "-inf") { return density::SupportThreshold::disabled(); }
    if (s == "inf") { return density::SupportThreshold::from_log(std::numeric_limits<double>::infinity()); }
    throw std::invalid_argument("threshold: unknown log value '" + s + "'");
  }
  return density::SupportThreshold::from_log(v.get<double>());
}

Matrix critic_input(const Eigen::Ref<const Matrix> &states_n, const Eigen::Ref<const Matrix> &actions)
{
  Matrix in(states_n.rows() + actions.rows(), states_n.cols());
  in << states_n, actions;
  return in;
}

} // namespace

std::string to_string(Variant v)
{
  for (const auto &[id, name] : variant_names) {
    if (id == v) { return name; }
  }
  return "?";
}

Variant parse_variant(std::string_view name)
{
  for (const auto &[id, n] : variant_names) {
    if (name == n) { return id; }
  }
  // Accept snake_case spellings too.
  std::string dashed(name);
  std::replace(dashed.begin(), dashed.end(), '_', '-');
  for (const auto &[id, n] : variant_names) {
    if (dashed == n) { return id; }
  }
  throw std::invalid_argument("unknown variant: " + std::string(name));
}

std::vector<Variant> all_variants()
{
  std::vector<Variant> out;
  for (const auto &[id, name] : variant_names) { out.push_back(id); }
  return out;
}

void BosaConfig::validate() const
{
  if (!(discount >= 0.0 && discount <= 1.0)) { throw std::invalid_argument("config: discount must lie in [0, 1]"); }
  if (td3.policy_frequency < 1) { throw std::invalid_argument("config: policy update frequency must be >= 1"); }
  if (!(td3.noise_clip >= 0.0)) { throw std::invalid_argument("config: noise clip must be >= 0"); }
  if (!(td3.policy_noise >= 0.0)) { throw std::invalid_argument("config: policy noise must be >= 0"); }
  if (!(td3.target_rate >= 0.0 && td3.target_rate <= 1.0)) {
    throw std::invalid_argument("config: target rate must lie in [0, 1]");
  }
  if (!(conservation_weight >= 0.0)) { throw std::invalid_argument("config: conservation weight must be >= 0"); }
  if (!(lambda_policy >= 0.0)) { throw std::invalid_argument("config: lambda_policy must be >= 0"); }
  if (!(dual_lr > 0.0)) { throw std::invalid_argument("config: dual learning rate must be > 0"); }
  if (batch_size < 1 || hidden_dim < 1 || depth < 1) { throw std::invalid_argument("config: bad network/batch sizes"); }
  if (likelihood_samples < 1) { throw std::invalid_argument("config: likelihood_samples must be >= 1"); }
  if (!(actor_dropout >= 0.0 && actor_dropout < 1.0)) { throw std::invalid_argument("config: dropout in [0, 1)"); }
}

nlohmann::json BosaConfig::to_json() const
{
  return {{"lambda_policy", lambda_policy},
          {"lambda_transition", lambda_transition},
          {"policy_threshold", threshold_json(policy_threshold)},
          {"transition_threshold", threshold_json(transition_threshold)},
          {"conservation_weight", conservation_weight},
          {"discount", discount},
          {"policy_noise", td3.policy_noise},
          {"noise_clip", td3.noise_clip},
          {"policy_frequency", td3.policy_frequency},
          {"target_rate", td3.target_rate},
          {"variant", to_string(variant)},
          {"dual_lr", dual_lr},
          {"actor_lr", actor_lr},
          {"critic_lr", critic_lr},
          {"batch_size", batch_size},
          {"hidden_dim", hidden_dim},
          {"depth", depth},
          {"actor_dropout", actor_dropout},
          {"likelihood_samples", likelihood_samples}};
}

BosaConfig BosaConfig::from_json(const nlohmann::json &j)
{
  BosaConfig c;
  c.lambda_policy = j.value("lambda_policy", c.lambda_policy);
  c.lambda_transition = j.value("lambda_transition", c.lambda_transition);
  if (j.contains("policy_threshold")) { c.policy_threshold = threshold_from_json(j.at("policy_threshold")); }
  if (j.contains("transition_threshold")) { c.transition_threshold = threshold_from_json(j.at("transition_threshold")); }
  c.conservation_weight = j.value("conservation_weight", c.conservation_weight);
  c.discount = j.value("discount", c.discount);
  c.td3.policy_noise = j.value("policy_noise", c.td3.policy_noise);
  c.td3.noise_clip = j.value("noise_clip", c.td3.noise_clip);
  c.td3.policy_frequency = j.value("policy_frequency", c.td3.policy_frequency);
  c.td3.target_rate = j.value("target_rate", c.td3.target_rate);
  if (j.contains("variant")) { c.variant = parse_variant(j.at("variant").get<std::string>()); }
  c.dual_lr = j.value("dual_lr", c.dual_lr);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.depth = j.value("depth", c.depth);
  c.actor_dropout = j.value("actor_dropout", c.actor_dropout);
  c.likelihood_samples = j.value("likelihood_samples", c.likelihood_samples);
  c.validate();
  return c;
}

bool BosaConfig::uses_policy_constraint() const
{
  return variant != Variant::no_policy_reg && variant != Variant::behavior_clone;
}

bool BosaConfig::uses_transition_filter() const
{
  return variant == Variant::full || variant == Variant::no_policy_reg || variant == Variant::no_conservation;
}

double BosaConfig::effective_conservation_weight() const
{
  switch (variant) {
  case Variant::no_conservation:
  case Variant::naive_mix_baseline:
  case Variant::behavior_clone: return 0.0;
  default: return conservation_weight;
  }
}

ActorCriticState make_actor_critic(Index state_dim, Index action_dim, const BosaConfig &config,
                                   const data::Normalizer &state_norm, Rng &rng)
{
  config.validate();
  require_dim("actor-critic state normalizer", state_dim, state_norm.dim());
  const nn::MlpSpec actor_spec{state_dim, config.hidden_dim, config.depth, action_dim, nn::Activation::relu,
                               config.actor_dropout};
  const nn::MlpSpec critic_spec{state_dim + action_dim, config.hidden_dim, config.depth, 1, nn::Activation::relu, 0.0};
  Rng ra = rng.split(1);
  Rng r1 = rng.split(2);
  Rng r2 = rng.split(3);
  ActorCriticState ac{nn::make_mlp<double>(actor_spec, ra),
                      nn::make_mlp<double>(critic_spec, r1),
                      nn::make_mlp<double>(critic_spec, r2),
                      {},
                      {},
                      {},
                      state_norm,
                      config.uses_policy_constraint() ? config.lambda_policy : 0.0,
                      0.0,
                      0,
                      0};
  const double rate = 1.0 - config.td3.target_rate;
  ac.actor_target = nn::make_ema<double>(ac.actor.store, rate);
  ac.critic1_target = nn::make_ema<double>(ac.critic1.store, rate);
  ac.critic2_target = nn::make_ema<double>(ac.critic2.store, rate);
  ac.lambda_peak = ac.lambda;
  return ac;
}

Matrix act(const ActorCriticState &ac, const Eigen::Ref<const Matrix> &states)
{
  require_dim("act state", ac.state_dim(), states.rows());
  return ac.actor(ac.state_norm.apply(states)).array().tanh().matrix();
}

Vector act_one(const ActorCriticState &ac, const Eigen::Ref<const Vector> &state)
{
  require_dim("act state", ac.state_dim(), state.size());
  const Matrix s = state;
  return act(ac, s).col(0);
}

Vector min_twin_q(const ActorCriticState &ac, const Eigen::Ref<const Matrix> &states,
                  const Eigen::Ref<const Matrix> &actions)
{
  const Matrix in = critic_input(ac.state_norm.apply(states), actions);
  return ac.critic1(in).cwiseMin(ac.critic2(in)).row(0).transpose();
}

Vector target_value(const ActorCriticState &ac, const Eigen::Ref<const Matrix> &next_states)
{
  const Matrix sn = ac.state_norm.apply(next_states);
  const Matrix a = nn::forward<double>(ac.actor.spec, ac.actor_target.shadow, sn).array().tanh().matrix();
  const Matrix in = critic_input(sn, a);
  const Matrix q1 = nn::forward<double>(ac.critic1.spec, ac.critic1_target.shadow, in);
  const Matrix q2 = nn::forward<double>(ac.critic2.spec, ac.critic2_target.shadow, in);
  return q1.cwiseMin(q2).row(0).transpose();
}

void save_actor_critic(const std::filesystem::path &dir, const ActorCriticState &ac)
{
  std::filesystem::create_directories(dir);
  const auto save = [&](const std::string &name, const nn::MlpSpec &spec, const Vector &params, std::int64_t step) {
    nn::save_checkpoint(dir / (name + ".ckpt"), nn::Checkpoint{spec, params, step, 0, nlohmann::json::object()});
  };
  const auto save_net = [&](const std::string &name, const nn::Mlp<double> &net, const nn::EmaTracker<double> &target) {
    save(name, net.spec, net.store.params, static_cast<std::int64_t>(ac.step));
    save(name + "_target", net.spec, target.shadow, static_cast<std::int64_t>(ac.step));
    // Optimiser moments, so a resumed run continues exactly where it stopped.
    save(name + ".adam_m", net.spec, net.store.m, net.store.step);
    save(name + ".adam_v", net.spec, net.store.v, net.store.step);
  };
  save_net("actor", ac.actor, ac.actor_target);
  save_net("critic1", ac.critic1, ac.critic1_target);
  save_net("critic2", ac.critic2, ac.critic2_target);
  const nlohmann::json meta = {{"format", "bosa-agent"},
                               {"version", 1},
                               {"lambda", ac.lambda},
                               {"lambda_peak", ac.lambda_peak},
                               {"step", ac.step},
                               {"actor_updates", ac.actor_updates},
                               {"target_rate", 1.0 - ac.actor_target.rate},
                               {"state_norm", ac.state_norm.to_json()}};
  nn::write_file(dir / "agent.json", meta.dump(2) + "\n");
}

ActorCriticState load_actor_critic(const std::filesystem::path &dir)
{
  const auto meta = nlohmann::json::parse(nn::read_file(dir / "agent.json"));
  if (meta.value("format", "") != "bosa-agent") { throw std::runtime_error("agent sidecar: unexpected format tag"); }
  const double rate = 1.0 - meta.at("target_rate").get<double>();
  const auto load_net = [&](const std::string &name, nn::Mlp<double> &net, nn::EmaTracker<double> &target) {
    net = nn::restore_mlp(nn::load_checkpoint(dir / (name + ".ckpt")));
    target = {nn::load_checkpoint(dir / (name + "_target.ckpt")).params, rate};
    if (std::filesystem::exists(dir / (name + ".adam_m.ckpt"))) {
      const nn::Checkpoint m = nn::load_checkpoint(dir / (name + ".adam_m.ckpt"));
      net.store.m = m.params;
      net.store.v = nn::load_checkpoint(dir / (name + ".adam_v.ckpt")).params;
      net.store.step = m.step;
    }
  };
  ActorCriticState ac;
  load_net("actor", ac.actor, ac.actor_target);
  load_net("critic1", ac.critic1, ac.critic1_target);
  load_net("critic2", ac.critic2, ac.critic2_target);
  ac.state_norm = data::Normalizer::from_json(meta.at("state_norm"));
  ac.lambda = meta.at("lambda").get<double>();
  ac.lambda_peak = meta.at("lambda_peak").get<double>();
  ac.step = meta.at("step").get<Index>();
  ac.actor_updates = meta.at("actor_updates").get<Index>();
  return ac;
}

} // namespace bosa::agent
