#include "bosa/agent/dara.hpp"

#include <algorithm>
#include <cmath>

namespace bosa::agent {

namespace {

double log_odds(double p)
{
  const double c = std::clamp(p, dara_probability_clamp, 1.0 - dara_probability_clamp);
  return std::log(c) - std::log1p(-c);
}

} // namespace

Vector DomainClassifier::target_probability(const Eigen::Ref<const Matrix> &features) const
{
  if (!trained) { throw std::logic_error("domain classifier used before training"); }
  const Matrix z = net(input_norm.apply(features));
  return (1.0 / (1.0 + (-z.row(0).array()).exp())).matrix().transpose();
}

nlohmann::json DaraConfig::to_json() const
{
  return {{"hidden_dim", hidden_dim}, {"depth", depth},           {"lr", lr},
          {"batch_size", batch_size}, {"iterations", iterations}, {"input_noise", input_noise}};
}

DaraConfig DaraConfig::from_json(const nlohmann::json &j)
{
  DaraConfig c;
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.depth = j.value("depth", c.depth);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.input_noise = j.value("input_noise", c.input_noise);
  return c;
}

Matrix sas_features(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions,
                    const Eigen::Ref<const Matrix> &next_states)
{
  require_dim("sas features: action columns", states.cols(), actions.cols());
  require_dim("sas features: next-state rows", states.rows(), next_states.rows());
  Matrix f(2 * states.rows() + actions.rows(), states.cols());
  f << states, actions, next_states - states;
  return f;
}

Matrix sa_features(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions)
{
  require_dim("sa features: action columns", states.cols(), actions.cols());
  Matrix f(states.rows() + actions.rows(), states.cols());
  f << states, actions;
  return f;
}

DomainClassifier train_domain_classifier(const Matrix &features, const std::vector<data::DomainTag> &tags,
                                         const DaraConfig &config, Rng &rng)
{
  require_dim("classifier labels", features.cols(), static_cast<Index>(tags.size()));
  if (config.batch_size < 2 || config.iterations < 1) { throw std::invalid_argument("classifier: bad schedule"); }
  std::vector<Index> target_idx, source_idx;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    (tags[i] == data::DomainTag::target ? target_idx : source_idx).push_back(static_cast<Index>(i));
  }
  if (target_idx.empty() || source_idx.empty()) {
    throw std::invalid_argument("classifier: both domains must be present");
  }

  DomainClassifier c;
  c.input_norm = data::Normalizer::fit(features);
  Rng init = rng.split(1);
  c.net = nn::make_mlp<double>(
    nn::MlpSpec{features.rows(), config.hidden_dim, config.depth, 1, nn::Activation::relu, 0.0}, init);
  Rng draw = rng.split(2);

  const Matrix x = c.input_norm.apply(features);
  const Index half = config.batch_size / 2;
  const Index b = 2 * half;
  Matrix batch(x.rows(), b);
  Eigen::RowVectorXd label(b);
  label.head(half).setOnes();
  label.tail(half).setZero();
  for (Index it = 0; it < config.iterations; ++it) {
    for (Index j = 0; j < half; ++j) {
      batch.col(j) = x.col(target_idx[draw.index(target_idx.size())]);
      batch.col(half + j) = x.col(source_idx[draw.index(source_idx.size())]);
    }
    if (config.input_noise > 0.0) { batch += config.input_noise * draw.normal_matrix(x.rows(), b); }
    nn::Tape<double> tape;
    const Matrix z = c.net(batch, &tape);
    const Eigen::RowVectorXd p = (1.0 / (1.0 + (-z.row(0).array()).exp())).matrix();
    c.net.store.zero_grad();
    c.net.backprop(tape, (p - label) / static_cast<double>(b));
    nn::adam_step<double>(c.net.store, config.lr);
  }
  c.trained = true;
  return c;
}

DaraClassifiers train_dara(const data::OfflineDataset &mix, const DaraConfig &config, Rng &rng)
{
  mix.validate();
  Rng r1 = rng.split(1);
  Rng r2 = rng.split(2);
  return DaraClassifiers{
    train_domain_classifier(sas_features(mix.states, mix.actions, mix.next_states), mix.tags, config, r1),
    train_domain_classifier(sa_features(mix.states, mix.actions), mix.tags, config, r2)};
}

double dara_reward_delta(double p_sas_target, double p_sa_target) { return log_odds(p_sas_target) - log_odds(p_sa_target); }

double dara_modified_reward(const data::Transition &t, const DomainClassifier &q_sas, const DomainClassifier &q_sa)
{
  const Matrix s = t.state;
  const Matrix a = t.action;
  const Matrix sn = t.next_state;
  const double p_sas = q_sas.target_probability(sas_features(s, a, sn))[0];
  const double p_sa = q_sa.target_probability(sa_features(s, a))[0];
  return t.reward + dara_reward_delta(p_sas, p_sa);
}

Vector dara_reward_deltas(const DaraClassifiers &c, const Eigen::Ref<const Matrix> &states,
                          const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states)
{
  const Vector p_sas = c.sas.target_probability(sas_features(states, actions, next_states));
  const Vector p_sa = c.sa.target_probability(sa_features(states, actions));
  Vector out(p_sas.size());
  for (Index i = 0; i < out.size(); ++i) { out[i] = dara_reward_delta(p_sas[i], p_sa[i]); }
  return out;
}

} // namespace bosa::agent
