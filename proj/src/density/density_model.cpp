#include "bosa/density/density_model.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <cmath>

namespace bosa::density {

namespace {

constexpr Index score_chunk = 2048;

DensityModel train_model(Role role, Matrix cond, Matrix out, const DensityConfig &config, Rng &rng)
{
  DensityModel m;
  m.role = role;
  Rng init = rng.split(1);
  Rng train = rng.split(2);
  m.cvae = make_cvae(make_cvae_spec(cond.rows(), out.rows(), config.hidden_dim, config.depth, config.kl_weight), init);
  train_cvae(m.cvae, cond, out, config.train, train);
  return m;
}

void require_role(const DensityModel &m, Role role)
{
  if (m.role != role) { throw std::invalid_argument("density model used in the wrong role (" + to_string(m.role) + ")"); }
}

nlohmann::json sidecar(const DensityModel &m)
{
  const CvaeSpec &s = m.cvae.spec;
  return {{"format", "bosa-density"},
          {"version", 1},
          {"role", to_string(m.role)},
          {"state_dim", m.state_dim},
          {"action_dim", m.action_dim},
          {"condition_dim", s.condition_dim},
          {"output_dim", s.output_dim},
          {"latent_dim", s.latent_dim},
          {"hidden_dim", s.hidden_dim},
          {"depth", s.depth},
          {"kl_weight", s.kl_weight},
          {"decoder_logvar", {s.decoder_logvar_min, s.decoder_logvar_max}},
          {"encoder_logvar", {s.encoder_logvar_min, s.encoder_logvar_max}},
          {"state_norm", m.state_norm.to_json()},
          {"output_norm", m.output_norm.to_json()},
          {"data_hash", m.data_hash},
          {"ensemble_index", m.ensemble_index}};
}

} // namespace

std::string to_string(Role r) { return r == Role::behavior ? "behavior" : "transition"; }

Role parse_role(std::string_view name)
{
  if (name == "behavior") { return Role::behavior; }
  if (name == "transition") { return Role::transition; }
  throw std::invalid_argument("unknown density role: " + std::string(name));
}

nlohmann::json DensityConfig::to_json() const
{
  return {{"hidden_dim", hidden_dim},        {"depth", depth},
          {"kl_weight", kl_weight},          {"lr", train.lr},
          {"batch_size", train.batch_size},  {"iterations", train.iterations},
          {"train_samples", train.samples},  {"inference_samples", inference_samples}};
}

DensityConfig DensityConfig::from_json(const nlohmann::json &j)
{
  DensityConfig c;
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.depth = j.value("depth", c.depth);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.train.lr = j.value("lr", c.train.lr);
  c.train.batch_size = j.value("batch_size", c.train.batch_size);
  c.train.iterations = j.value("iterations", c.train.iterations);
  c.train.samples = j.value("train_samples", c.train.samples);
  c.inference_samples = j.value("inference_samples", c.inference_samples);
  if (c.inference_samples < 1) { throw std::invalid_argument("density: inference_samples must be >= 1"); }
  return c;
}

Matrix DensityModel::condition(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions) const
{
  require_dim("density states", state_dim, states.rows());
  if (role == Role::behavior) { return state_norm.apply(states); }
  require_dim("density actions", action_dim, actions.rows());
  require_dim("density action columns", states.cols(), actions.cols());
  Matrix c(state_dim + action_dim, states.cols());
  c << state_norm.apply(states), actions;
  return c;
}

Matrix DensityModel::output(const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions,
                            const Eigen::Ref<const Matrix> &next_states) const
{
  if (role == Role::behavior) {
    require_dim("density actions", action_dim, actions.rows());
    return actions;
  }
  require_dim("density next states", state_dim, next_states.rows());
  require_dim("density next-state columns", states.cols(), next_states.cols());
  return output_norm.apply(next_states - states);
}

DensityModel fit_behavior(const data::OfflineDataset &data, const DensityConfig &config, Rng &rng)
{
  data.validate();
  if (data.empty()) { throw std::invalid_argument("fit_behavior: empty dataset"); }
  const data::Normalizer norm = data::Normalizer::fit(data.states);
  DensityModel m = train_model(Role::behavior, norm.apply(data.states), data.actions, config, rng);
  m.state_dim = data.state_dim;
  m.action_dim = data.action_dim;
  m.state_norm = norm;
  m.output_norm = data::Normalizer::identity(data.action_dim);
  m.data_hash = data::content_hash(data);
  return m;
}

DensityModel fit_transition(const data::OfflineDataset &data, const DensityConfig &config, Rng &rng, int ensemble_index)
{
  data.validate();
  if (data.empty()) { throw std::invalid_argument("fit_transition: empty dataset"); }
  DensityModel shell;
  shell.role = Role::transition;
  shell.state_dim = data.state_dim;
  shell.action_dim = data.action_dim;
  shell.state_norm = data::Normalizer::fit(data.states);
  shell.output_norm = data::Normalizer::fit(data.next_states - data.states);
  DensityModel m = train_model(Role::transition, shell.condition(data.states, data.actions),
                               shell.output(data.states, data.actions, data.next_states), config, rng);
  shell.cvae = std::move(m.cvae);
  shell.data_hash = data::content_hash(data);
  shell.ensemble_index = ensemble_index;
  return shell;
}

Vector behavior_log_likelihood(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                               const Eigen::Ref<const Matrix> &actions, Rng &rng, int samples)
{
  require_role(model, Role::behavior);
  require_dim("behavior action columns", states.cols(), actions.cols());
  return log_likelihood(model.cvae, model.condition(states, actions), model.output(states, actions, states), rng, samples);
}

ActionLikelihood behavior_log_likelihood_with_grad(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                                                   const Eigen::Ref<const Matrix> &actions, Rng &rng, int samples)
{
  require_role(model, Role::behavior);
  require_dim("behavior action columns", states.cols(), actions.cols());
  LikelihoodWithGrad r = log_likelihood_with_grad(model.cvae, model.condition(states, actions),
                                                  model.output(states, actions, states), rng, samples);
  return ActionLikelihood{std::move(r.value), std::move(r.d_output)};
}

Vector transition_log_likelihood(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                                 const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states,
                                 Rng &rng, int samples)
{
  require_role(model, Role::transition);
  return log_likelihood(model.cvae, model.condition(states, actions), model.output(states, actions, next_states), rng,
                        samples);
}

Matrix sample_next_states(const DensityModel &model, const Eigen::Ref<const Matrix> &states,
                          const Eigen::Ref<const Matrix> &actions, Rng &rng)
{
  require_role(model, Role::transition);
  const Matrix residual = model.output_norm.invert(sample(model.cvae, model.condition(states, actions), rng));
  return states + residual;
}

DensityEnsemble fit_transition_ensemble(const data::OfflineDataset &data, const DensityConfig &config, int k,
                                        std::uint64_t seed, int threads)
{
  if (k < 1) { throw std::invalid_argument("fit_transition_ensemble: k must be >= 1"); }
  DensityEnsemble ens;
  ens.members.resize(static_cast<std::size_t>(k));
  const Rng root(seed);
  parallel_for(k, threads, [&](Index i) {
    Rng r = root.split(static_cast<std::uint64_t>(i));
    ens.members[static_cast<std::size_t>(i)] = fit_transition(data, config, r, static_cast<int>(i));
  });
  return ens;
}

Matrix member_log_likelihoods(const DensityEnsemble &ensemble, const Eigen::Ref<const Matrix> &states,
                              const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states,
                              const Rng &rng, int samples)
{
  if (ensemble.members.empty()) { throw std::invalid_argument("ensemble_log_likelihood: empty ensemble"); }
  Matrix out(ensemble.size(), states.cols());
  for (Index m = 0; m < ensemble.size(); ++m) {
    Rng r = rng.split(static_cast<std::uint64_t>(m));
    out.row(m) = transition_log_likelihood(ensemble.members[static_cast<std::size_t>(m)], states, actions, next_states,
                                           r, samples)
                   .transpose();
  }
  return out;
}

Vector ensemble_log_likelihood(const DensityEnsemble &ensemble, const Eigen::Ref<const Matrix> &states,
                               const Eigen::Ref<const Matrix> &actions, const Eigen::Ref<const Matrix> &next_states,
                               const Rng &rng, int samples)
{
  return member_log_likelihoods(ensemble, states, actions, next_states, rng, samples).colwise().minCoeff().transpose();
}

SupportThreshold SupportThreshold::from_likelihood(double likelihood)
{
  if (!(likelihood > 0.0 && likelihood <= 1.0)) {
    throw std::invalid_argument("support threshold: likelihood must lie in (0, 1]");
  }
  return SupportThreshold{std::log(likelihood), true};
}

SupportThreshold SupportThreshold::from_log(double log_value)
{
  if (std::isnan(log_value)) { throw std::invalid_argument("support threshold: NaN"); }
  return SupportThreshold{log_value, false};
}

double SupportThreshold::likelihood() const { return std::exp(log_value); }

std::vector<std::uint8_t> in_support(const DensityEnsemble &ensemble, const SupportThreshold &threshold,
                                     const Eigen::Ref<const Matrix> &states, const Eigen::Ref<const Matrix> &actions,
                                     const Eigen::Ref<const Matrix> &next_states, const Rng &rng, int samples)
{
  const Vector ll = ensemble_log_likelihood(ensemble, states, actions, next_states, rng, samples);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(ll.size()));
  for (Index i = 0; i < ll.size(); ++i) { mask[static_cast<std::size_t>(i)] = threshold.passes(ll[i]) ? 1 : 0; }
  return mask;
}

Vector score_dataset(const DensityEnsemble &ensemble, const data::OfflineDataset &data, const Rng &rng, int samples,
                     int threads)
{
  const Index n = data.size();
  Vector out(n);
  const Index chunks = (n + score_chunk - 1) / score_chunk;
  parallel_for(chunks, threads, [&](Index c) {
    const Index begin = c * score_chunk;
    const Index len = std::min(score_chunk, n - begin);
    out.segment(begin, len) =
      ensemble_log_likelihood(ensemble, data.states.middleCols(begin, len), data.actions.middleCols(begin, len),
                              data.next_states.middleCols(begin, len), rng.split(static_cast<std::uint64_t>(c)), samples);
  });
  return out;
}

void save_density(const std::filesystem::path &dir, const std::string &stem, const DensityModel &model)
{
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(dir / (stem + ".encoder.ckpt"), nn::make_checkpoint(model.cvae.encoder, 0));
  nn::save_checkpoint(dir / (stem + ".decoder.ckpt"), nn::make_checkpoint(model.cvae.decoder, 0));
  nn::write_file(dir / (stem + ".json"), sidecar(model).dump(2) + "\n");
}

DensityModel load_density(const std::filesystem::path &dir, const std::string &stem)
{
  const auto j = nlohmann::json::parse(nn::read_file(dir / (stem + ".json")));
  if (j.value("format", "") != "bosa-density") { throw std::runtime_error("density sidecar: unexpected format tag"); }
  DensityModel m;
  m.role = parse_role(j.at("role").get<std::string>());
  m.state_dim = j.at("state_dim").get<Index>();
  m.action_dim = j.at("action_dim").get<Index>();
  CvaeSpec &s = m.cvae.spec;
  s.condition_dim = j.at("condition_dim").get<Index>();
  s.output_dim = j.at("output_dim").get<Index>();
  s.latent_dim = j.at("latent_dim").get<Index>();
  s.hidden_dim = j.at("hidden_dim").get<Index>();
  s.depth = j.at("depth").get<Index>();
  s.kl_weight = j.at("kl_weight").get<double>();
  s.decoder_logvar_min = j.at("decoder_logvar").at(0).get<double>();
  s.decoder_logvar_max = j.at("decoder_logvar").at(1).get<double>();
  s.encoder_logvar_min = j.at("encoder_logvar").at(0).get<double>();
  s.encoder_logvar_max = j.at("encoder_logvar").at(1).get<double>();
  s.validate();
  m.cvae.encoder = nn::restore_mlp(nn::load_checkpoint(dir / (stem + ".encoder.ckpt")));
  m.cvae.decoder = nn::restore_mlp(nn::load_checkpoint(dir / (stem + ".decoder.ckpt")));
  if (!(m.cvae.encoder.spec == s.encoder_spec()) || !(m.cvae.decoder.spec == s.decoder_spec())) {
    throw std::runtime_error("density checkpoint: network shapes disagree with the sidecar");
  }
  m.state_norm = data::Normalizer::from_json(j.at("state_norm"));
  m.output_norm = data::Normalizer::from_json(j.at("output_norm"));
  m.data_hash = j.at("data_hash").get<std::string>();
  m.ensemble_index = j.at("ensemble_index").get<int>();
  return m;
}

void save_ensemble(const std::filesystem::path &dir, const DensityEnsemble &ensemble)
{
  std::filesystem::create_directories(dir);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    const std::string stem = "member_" + std::to_string(i);
    save_density(dir, stem, ensemble.members[i]);
    members.push_back(stem);
  }
  nn::write_file(dir / "ensemble.json",
                 nlohmann::json{{"format", "bosa-ensemble"}, {"aggregation", "min"}, {"members", members}}.dump(2) + "\n");
}

DensityEnsemble load_ensemble(const std::filesystem::path &dir)
{
  const auto j = nlohmann::json::parse(nn::read_file(dir / "ensemble.json"));
  DensityEnsemble ens;
  for (const auto &stem : j.at("members")) { ens.members.push_back(load_density(dir, stem.get<std::string>())); }
  if (ens.members.empty()) { throw std::runtime_error("ensemble directory lists no members"); }
  return ens;
}

} // namespace bosa::density
