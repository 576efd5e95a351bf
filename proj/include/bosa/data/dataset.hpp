#pragma once

#include "bosa/common.hpp"
#include "bosa/envs/env.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <vector>

namespace bosa::data {

enum class DomainTag : std::uint8_t { target = 0, source = 1, generated = 2 };

std::string to_string(DomainTag tag);
DomainTag parse_tag(std::string_view name);

/// Anything that is not target-domain data is treated as source data by the learner.
inline bool is_source_like(DomainTag tag) { return tag != DomainTag::target; }

struct Transition
{
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool done = false;
  bool timeout = false; // episode ended on the horizon, not on failure
  DomainTag tag = DomainTag::target;
};

/// Per-dimension affine standardisation.
struct Normalizer
{
  Vector mean;
  Vector std;

  static constexpr double std_floor = 1e-6;

  /// Population mean/std of the columns of `samples` (dim x n), compensated summation.
  static Normalizer fit(const Eigen::Ref<const Matrix> &samples);
  static Normalizer identity(Index dim);

  Index dim() const { return mean.size(); }
  Matrix apply(const Eigen::Ref<const Matrix> &x) const;
  Matrix invert(const Eigen::Ref<const Matrix> &z) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json &j);
};

/// Columnar transition store: column i of each matrix is transition i.
struct OfflineDataset
{
  Index state_dim = 0;
  Index action_dim = 0;
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Vector rewards;
  std::vector<std::uint8_t> done;
  std::vector<std::uint8_t> timeout;
  std::vector<DomainTag> tags;

  envs::EnvSpec env;
  envs::BehaviorSpec behavior;
  std::uint64_t seed = 0;
  Normalizer state_stats;
  nlohmann::json provenance = nlohmann::json::object();

  Index size() const { return rewards.size(); }
  bool empty() const { return size() == 0; }

  Transition at(Index i) const;
  void validate() const;

  /// Half-open [begin, end) ranges; an episode ends after a `done` transition or at the end of the store.
  std::vector<std::pair<Index, Index>> episodes() const;
  std::vector<Index> indices_with_tag(DomainTag tag) const;
  Index count_tag(DomainTag tag) const;
};

/// Allocate storage for n transitions of the given dimensions.
OfflineDataset make_dataset(Index state_dim, Index action_dim, Index n);
void set_transition(OfflineDataset &data, Index i, const Transition &t);
void recompute_stats(OfflineDataset &data);

/// Roll out the behavior policy until exactly `n` transitions are recorded.
OfflineDataset collect(const envs::EnvSpec &spec, const envs::BehaviorSpec &behavior, Index n, std::uint64_t seed,
                       DomainTag role);

/// Keep whole episodes, chosen in random order, until roughly `fraction` of the transitions are retained.
OfflineDataset subsample(const OfflineDataset &data, double fraction, std::uint64_t seed);

/// D_mix = target U source: concatenation with per-transition tags and joint statistics.
OfflineDataset mix(const OfflineDataset &target, const OfflineDataset &source);

/// Copy of the given transitions (statistics recomputed).
OfflineDataset select(const OfflineDataset &data, std::span<const Index> indices);

enum class StateMode { raw, normalized };

struct Batch
{
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Vector rewards;
  Vector not_done; // 0 where the episode terminated by failure: no bootstrap
  std::vector<Index> indices;
  std::vector<DomainTag> tags;

  Index size() const { return rewards.size(); }
};

Batch gather(const OfflineDataset &data, std::span<const Index> indices, StateMode mode = StateMode::raw);

/// Uniform sampling with replacement.
Batch sample_batch(const OfflineDataset &data, Index batch_size, Rng &rng, StateMode mode = StateMode::raw);

/// Header line (JSON) + binary block of little-endian float64 records.
std::string serialize(const OfflineDataset &data);
OfflineDataset deserialize(std::string_view bytes);
void write_dataset(const std::filesystem::path &path, const OfflineDataset &data);
OfflineDataset read_dataset(const std::filesystem::path &path);
std::string content_hash(const OfflineDataset &data);

/// Mean over dimensions of std(s' - s); the yardstick for noise amplitudes.
double natural_next_state_scale(const OfflineDataset &data);

} // namespace bosa::data
