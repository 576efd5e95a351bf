#include "bosa/harness/config.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <set>

namespace bosa::harness {

namespace {

template <typename T> std::vector<T> list_or(const nlohmann::json &j, const char *key, std::vector<T> fallback)
{
  return j.contains(key) ? j.at(key).get<std::vector<T>>() : fallback;
}

} // namespace

nlohmann::json DomainStanza::to_json() const
{
  nlohmann::json j = {{"mass_scale", mass_scale},
                      {"joint_noise", joint_noise},
                      {"tier", envs::to_string(tier)},
                      {"behavior_noise", behavior_noise},
                      {"size", size},
                      {"seed", seed}};
  if (!path.empty()) { j["path"] = path; }
  return j;
}

DomainStanza DomainStanza::from_json(const nlohmann::json &j, const DomainStanza &defaults)
{
  DomainStanza d = defaults;
  d.mass_scale = j.value("mass_scale", d.mass_scale);
  d.joint_noise = j.value("joint_noise", d.joint_noise);
  if (j.contains("tier")) { d.tier = envs::parse_tier(j.at("tier").get<std::string>()); }
  d.behavior_noise = j.value("behavior_noise", d.behavior_noise);
  d.size = j.value("size", d.size);
  d.seed = j.value("seed", d.seed);
  d.path = j.value("path", d.path);
  return d;
}

std::string to_string(SourceMode m)
{
  switch (m) {
  case SourceMode::collected: return "collected";
  case SourceMode::noise: return "noise";
  case SourceMode::model: return "model";
  case SourceMode::none: return "none";
  }
  return "?";
}

SourceMode parse_source_mode(std::string_view name)
{
  for (SourceMode m : {SourceMode::collected, SourceMode::noise, SourceMode::model, SourceMode::none}) {
    if (name == to_string(m)) { return m; }
  }
  throw std::invalid_argument("unknown source mode: " + std::string(name));
}

nlohmann::json AugmentStanza::to_json() const
{
  return {{"n", n},
          {"amplitude", amplitude},
          {"amplitude_scale", amplitude_scale},
          {"model_budget", model_budget},
          {"seed", seed}};
}

AugmentStanza AugmentStanza::from_json(const nlohmann::json &j)
{
  AugmentStanza a;
  a.n = j.value("n", a.n);
  a.amplitude = j.value("amplitude", a.amplitude);
  a.amplitude_scale = j.value("amplitude_scale", a.amplitude_scale);
  a.model_budget = j.value("model_budget", a.model_budget);
  a.seed = j.value("seed", a.seed);
  return a;
}

std::string to_string(Setting s)
{
  switch (s) {
  case Setting::cross: return "cross";
  case Setting::target_subset: return "target-10";
  case Setting::target_full: return "target-100";
  }
  return "?";
}

Setting parse_setting(std::string_view name)
{
  for (Setting s : {Setting::cross, Setting::target_subset, Setting::target_full}) {
    if (name == to_string(s)) { return s; }
  }
  throw std::invalid_argument("unknown setting: " + std::string(name));
}

void ExperimentConfig::validate() const
{
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) {
    throw std::invalid_argument("config: target_fraction must lie in (0, 1]");
  }
  if (seeds.empty()) { throw std::invalid_argument("config: seed list must be non-empty"); }
  if (settings.empty()) { throw std::invalid_argument("config: settings list must be non-empty"); }
  if (ensemble_size < 1) { throw std::invalid_argument("config: ensemble_size must be >= 1"); }
  if (steps < 0 || eval_episodes < 1 || probe_states < 1) { throw std::invalid_argument("config: bad run lengths"); }
  if (target.path.empty() && target.size < 1) { throw std::invalid_argument("config: target needs a size or a path"); }
  const bool needs_source = std::find(settings.begin(), settings.end(), Setting::cross) != settings.end();
  if (needs_source && source_mode == SourceMode::none) {
    throw std::invalid_argument("config: the cross setting needs a source (source_mode is none)");
  }
  if (needs_source && source_mode == SourceMode::collected && source.path.empty() && source.size < 1) {
    throw std::invalid_argument("config: source needs a size or a path");
  }
  for (double t : transition_sweep) { density::SupportThreshold::from_likelihood(t); }
  for (double t : policy_sweep) { density::SupportThreshold::from_likelihood(t); }
  agent.validate();
}

std::filesystem::path ExperimentConfig::resolved_cache_dir() const
{
  return cache_dir.empty() ? output_dir / "cache" : cache_dir;
}

envs::EnvSpec ExperimentConfig::target_env() const
{
  return envs::make_env(family, target.mass_scale, target.joint_noise);
}

envs::EnvSpec ExperimentConfig::source_env() const
{
  return envs::make_env(family, source.mass_scale, source.joint_noise);
}

nlohmann::json ExperimentConfig::to_json() const
{
  nlohmann::json variants_j = nlohmann::json::array();
  for (auto v : variants) { variants_j.push_back(agent::to_string(v)); }
  nlohmann::json settings_j = nlohmann::json::array();
  for (auto s : settings) { settings_j.push_back(to_string(s)); }
  nlohmann::json agent_j = agent.to_json();
  agent_j["steps"] = steps;
  agent_j["log_every"] = log_every;
  agent_j["checkpoint_every"] = checkpoint_every;
  nlohmann::json j = {
    {"schema_version", schema_version},
    {"name", name},
    {"output_dir", output_dir.string()},
    {"env", {{"family", envs::to_string(family)}}},
    {"target", target.to_json()},
    {"source", source.to_json()},
    {"data",
     {{"target_fraction", target_fraction}, {"subsample_seed", subsample_seed}, {"source_mode", to_string(source_mode)}}},
    {"augment", augment.to_json()},
    {"density",
     {{"behavior", behavior_density.to_json()},
      {"transition", transition_density.to_json()},
      {"ensemble_size", ensemble_size},
      {"seed", density_seed}}},
    {"agent", agent_j},
    {"variants", variants_j},
    {"seeds", seeds},
    {"settings", settings_j},
    {"sweep", {{"transition_threshold", transition_sweep}, {"policy_threshold", policy_sweep}}},
    {"eval", {{"episodes", eval_episodes}, {"seed", eval_seed}, {"probe_states", probe_states}}}};
  if (!cache_dir.empty()) { j["cache_dir"] = cache_dir.string(); }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json &j)
{
  static const std::set<std::string> known = {"schema_version", "name",     "output_dir", "cache_dir", "env",
                                              "target",         "source",   "data",       "augment",   "density",
                                              "agent",          "variants", "seeds",      "settings",  "sweep",
                                              "eval"};
  for (const auto &[key, value] : j.items()) {
    if (!known.contains(key)) { throw std::invalid_argument("config: unknown key '" + key + "'"); }
  }
  const int version = j.value("schema_version", 0);
  if (version != schema_version) {
    throw std::invalid_argument("config: schema_version " + std::to_string(version) + " is not supported (expected " +
                                std::to_string(schema_version) + ")");
  }

  ExperimentConfig c;
  c.name = j.value("name", c.name);
  c.output_dir = j.value("output_dir", c.output_dir.string());
  c.cache_dir = j.value("cache_dir", std::string());
  const auto env = j.value("env", nlohmann::json::object());
  if (env.contains("family")) { c.family = envs::parse_family(env.at("family").get<std::string>()); }

  DomainStanza source_defaults;
  source_defaults.mass_scale = 0.5;
  source_defaults.seed = 8;
  c.target = DomainStanza::from_json(j.value("target", nlohmann::json::object()), DomainStanza{});
  c.source = DomainStanza::from_json(j.value("source", nlohmann::json::object()), source_defaults);

  const auto d = j.value("data", nlohmann::json::object());
  c.target_fraction = d.value("target_fraction", c.target_fraction);
  c.subsample_seed = d.value("subsample_seed", c.subsample_seed);
  if (d.contains("source_mode")) { c.source_mode = parse_source_mode(d.at("source_mode").get<std::string>()); }
  c.augment = AugmentStanza::from_json(j.value("augment", nlohmann::json::object()));

  const auto dens = j.value("density", nlohmann::json::object());
  c.behavior_density = density::DensityConfig::from_json(dens.value("behavior", nlohmann::json::object()));
  c.transition_density = density::DensityConfig::from_json(dens.value("transition", nlohmann::json::object()));
  c.ensemble_size = dens.value("ensemble_size", c.ensemble_size);
  c.density_seed = dens.value("seed", c.density_seed);

  const auto ag = j.value("agent", nlohmann::json::object());
  c.agent = agent::BosaConfig::from_json(ag);
  c.steps = ag.value("steps", c.steps);
  c.log_every = ag.value("log_every", c.log_every);
  c.checkpoint_every = ag.value("checkpoint_every", c.checkpoint_every);

  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto &v : j.at("variants")) { c.variants.push_back(agent::parse_variant(v.get<std::string>())); }
  }
  c.seeds = list_or<std::uint64_t>(j, "seeds", c.seeds);
  if (j.contains("settings")) {
    c.settings.clear();
    for (const auto &s : j.at("settings")) { c.settings.push_back(parse_setting(s.get<std::string>())); }
  }
  const auto sweep = j.value("sweep", nlohmann::json::object());
  c.transition_sweep = list_or<double>(sweep, "transition_threshold", {});
  c.policy_sweep = list_or<double>(sweep, "policy_threshold", {});

  const auto ev = j.value("eval", nlohmann::json::object());
  c.eval_episodes = ev.value("episodes", c.eval_episodes);
  c.eval_seed = ev.value("seed", c.eval_seed);
  c.probe_states = ev.value("probe_states", c.probe_states);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path &path)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(nn::read_file(path), nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error &e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

} // namespace bosa::harness
