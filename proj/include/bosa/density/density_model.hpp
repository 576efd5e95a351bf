#pragma once

#include "bosa/data/dataset.hpp"
#include "bosa/density/cvae.hpp"

#include <filesystem>
#include <limits>

namespace bosa::density {

/// What a density model estimates.
///
/// behavior:   pi_beta(a | s). Condition is the standardised state, output the raw action.
/// transition: T(s' | s, a). Condition is [standardised state; action], output is the
///             standardised residual s' - s. Log-likelihoods are in those residual units.
enum class Role { behavior, transition };

std::string to_string(Role r);
Role parse_role(std::string_view name);

struct DensityConfig
{
  Index hidden_dim = 750;
  Index depth = 3;
  double kl_weight = 0.5;
  TrainConfig train;
  int inference_samples = 10;

  nlohmann::json to_json() const;
  static DensityConfig from_json(const nlohmann::json &j);
};

struct DensityModel
{
  Role role = Role::behavior;
  CvaeModel cvae;
  Index state_dim = 0;
  Index action_dim = 0;
  data::Normalizer state_norm;
  data::Normalizer output_norm; // identity for behavior models
  std::string data_hash;        // content hash of the training dataset
  int ensemble_index = 0;

  Matrix condition(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions) const;
  /// For behavior models `next_states` is ignored.
  Matrix output(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions,
                const Eigen::Ref<const Matrix> &next_states) const;
};

/// Behavior model on every transition of `data` (the pipeline passes the mixed dataset).
DensityModel fit_behavior(const data::OfflineDataset &data, const DensityConfig &config, Rng &rng);

/// Transition model on every transition of `data`.
DensityModel fit_transition(const data::OfflineDataset &data, const DensityConfig &config, Rng &rng,
                            int ensemble_index = 0);

/// log pi_beta(a | s) per column; states raw.
Vector behavior_log_likelihood(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                               const Eigen::Ref<const Matrix> &actions, Rng &rng, int samples);

struct ActionLikelihood
{
  Vector value;
  Matrix d_action;
};

/// Same estimate plus d value_j / d action_j (latent noise fixed).
ActionLikelihood behavior_log_likelihood_with_grad(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                                                   const Eigen::Ref<const Matrix> &actions, Rng &rng, int samples);

Vector transition_log_likelihood(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                                 const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states,
                                 Rng &rng, int samples);

/// Draw s' ~ T(. | s, a) in raw coordinates.
Matrix sample_next_states(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                          const Eigen::Ref<const Matrix> &actions, Rng &rng);

/// k transition models scored by their minimum.
struct DensityEnsemble
{
  std::vector<DensityModel> members;

  Index size() const { return static_cast<Index>(members.size()); }
};

/// Members are trained concurrently on `threads` workers; member i uses stream i of `seed`.
DensityEnsemble fit_transition_ensemble(const data::OfflineDataset &data, const DensityConfig &config, int k,
                                        std::uint64_t seed, int threads = 1);

/// Minimum over members. Member m draws its latent samples from rng.split(m).
Vector ensemble_log_likelihood(const DensityEnsemble &ensemble, const Eigen::Ref<const Matrix> &states,
                               const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states,
                               const Rng &rng, int samples);

/// Per-member scores (k x n), same streams as `ensemble_log_likelihood`.
Matrix member_log_likelihoods(const DensityEnsemble &ensemble, const Eigen::Ref<const Matrix> &states,
                              const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states,
                              const Rng &rng, int samples);

/// Log-space threshold; configured in likelihood space.
struct SupportThreshold
{
  double log_value = -std::numeric_limits<double>::infinity();
  bool as_likelihood = false;

  static SupportThreshold from_likelihood(double likelihood);
  static SupportThreshold from_log(double log_value);
  static SupportThreshold disabled() { return {}; }

  bool passes(double log_likelihood) const { return log_likelihood > log_value; }
  double likelihood() const;
};

std::vector<std::uint8_t> in_support(const DensityEnsemble &ensemble, const SupportThreshold &threshold,
                                     const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions,
                                     const Eigen::Ref<const Matrix> &next_states, const Rng &rng, int samples);

/// Ensemble scores for every transition of `data`, in chunks, on `threads` workers.
/// Chunk c uses rng.split(c), so results do not depend on the worker count.
Vector score_dataset(const DensityEnsemble &ensemble, const data::OfflineDataset &data, const Rng &rng, int samples,
                     int threads = 1);

/// Encoder and decoder checkpoints plus a JSON sidecar, all prefixed by `stem`.
void save_density(const std::filesystem::path &dir, const std::string &stem, const DensityModel &model);
DensityModel load_density(const std::filesystem::path &dir, const std::string &stem);

void save_ensemble(const std::filesystem::path &dir, const DensityEnsemble &ensemble);
DensityEnsemble load_ensemble(const std::filesystem::path &dir);

} // namespace bosa::density
