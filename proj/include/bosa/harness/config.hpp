#pragma once

#include "bosa/agent/actor_critic.hpp"
#include "bosa/density/density_model.hpp"
#include "bosa/envs/env.hpp"

#include <filesystem>

namespace bosa::harness {

inline constexpr int schema_version = 1;

/// One domain's data: either generated from a scripted behavior or read from `path`.
struct DomainStanza
{
  double mass_scale = 1.0;
  double joint_noise = 0.0;
  envs::Tier tier = envs::Tier::medium;
  double behavior_noise = 0.3;
  Index size = 100000;
  std::uint64_t seed = 7;
  std::string path;

  nlohmann::json to_json() const;
  static DomainStanza from_json(const nlohmann::json &j, const DomainStanza &defaults);
};

/// Where the source half of the mix comes from.
enum class SourceMode { collected, noise, model, none };

std::string to_string(SourceMode m);
SourceMode parse_source_mode(std::string_view name);

struct AugmentStanza
{
  Index n = 100000;
  double amplitude = 0.1;
  /// When positive, the amplitude is this multiple of the target subset's natural next-state scale.
  double amplitude_scale = 0.0;
  Index model_budget = 500;
  std::uint64_t seed = 13;

  nlohmann::json to_json() const;
  static AugmentStanza from_json(const nlohmann::json &j);
};

/// Which D_mix an agent run trains on.
///   cross:      target subset + source
///   target-10:  target subset only
///   target-100: full target dataset
enum class Setting { cross, target_subset, target_full };

std::string to_string(Setting s);
Setting parse_setting(std::string_view name);

struct ExperimentConfig
{
  std::string name = "experiment";
  std::filesystem::path output_dir = "runs/experiment";
  std::filesystem::path cache_dir; // defaults to output_dir / "cache"

  envs::Family family = envs::Family::point_mass_2d;
  DomainStanza target;
  DomainStanza source;
  double target_fraction = 0.1;
  std::uint64_t subsample_seed = 3;
  SourceMode source_mode = SourceMode::collected;
  AugmentStanza augment;

  density::DensityConfig behavior_density;
  density::DensityConfig transition_density;
  int ensemble_size = 5;
  std::uint64_t density_seed = 11;

  agent::BosaConfig agent;
  Index steps = 100000;
  Index log_every = 1000;
  Index checkpoint_every = 10000;

  std::vector<agent::Variant> variants{agent::Variant::full};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<Setting> settings{Setting::cross};
  /// Threshold grids in likelihood space; each point becomes its own run.
  std::vector<double> transition_sweep;
  std::vector<double> policy_sweep;

  int eval_episodes = 10;
  std::uint64_t eval_seed = 1000;
  /// States sampled from D_mix for the end-of-run support and conservation probes.
  Index probe_states = 5000;

  void validate() const;
  std::filesystem::path resolved_cache_dir() const;
  envs::EnvSpec target_env() const;
  envs::EnvSpec source_env() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json &j);
};

ExperimentConfig load_config(const std::filesystem::path &path);

} // namespace bosa::harness
