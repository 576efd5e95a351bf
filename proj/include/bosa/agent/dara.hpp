#pragma once

#include "bosa/data/dataset.hpp"
#include "bosa/nn/mlp.hpp"

namespace bosa::agent {

/// Binary domain classifier: P(target | features) = sigmoid(net(standardised features)).
struct DomainClassifier
{
  nn::Mlp<double> net;
  data::Normalizer input_norm;
  bool trained = false;

  Vector target_probability(const Eigen::Ref<const Matrix> &features) const;
};

struct DaraConfig
{
  Index hidden_dim = 64;
  Index depth = 3;
  double lr = 3e-4;
  Index batch_size = 256;
  Index iterations = 5000;
  /// Std of Gaussian noise added to the standardised inputs while training.
  /// Keeps the classifiers from saturating on near-deterministic dynamics.
  double input_noise = 1.0;

  nlohmann::json to_json() const;
  static DaraConfig from_json(const nlohmann::json &j);
};

/// Features [s; a; s' - s] and [s; a].
Matrix sas_features(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions,
                    const Eigen::Ref<const Matrix> &next_states);
Matrix sa_features(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions);

/// Cross-entropy training with class-balanced batches (half target, half source-like).
DomainClassifier train_domain_classifier(const Matrix &features, const std::vector<data::DomainTag> &tags,
                                         const DaraConfig &config, Rng &rng);

struct DaraClassifiers
{
  DomainClassifier sas;
  DomainClassifier sa;
};

DaraClassifiers train_dara(const data::OfflineDataset &mix, const DaraConfig &config, Rng &rng);

/// Probabilities are clamped to [1e-6, 1 - 1e-6] before taking log-odds.
inline constexpr double dara_probability_clamp = 1e-6;

/// log[p_sas / (1 - p_sas)] - log[p_sa / (1 - p_sa)].
double dara_reward_delta(double p_sas_target, double p_sa_target);

/// r + delta for one transition.
double dara_modified_reward(const data::Transition &t, const DomainClassifier &q_sas, const DomainClassifier &q_sa);

/// Delta for every column.
Vector dara_reward_deltas(const DaraClassifiers &c, const Eigen::Ref<const Matrix> &states,
                          const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states);

} // namespace bosa::agent
