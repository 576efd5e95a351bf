#include "bosa/augment/augment.hpp"

#include <algorithm>
#include <cmath>

namespace bosa::augment {

namespace {

constexpr Index sample_chunk = 4096;

/// Uniform draw with replacement, all tags set to `generated`.
data::OfflineDataset resample(const data::OfflineDataset &target, Index n_out, Rng &rng)
{
  if (n_out <= 0) { throw std::invalid_argument("augment: output size must be >= 1"); }
  target.validate();
  if (target.empty()) { throw std::invalid_argument("augment: empty target dataset"); }
  std::vector<Index> idx(static_cast<std::size_t>(n_out));
  for (auto &i : idx) { i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(target.size()))); }
  data::OfflineDataset out = data::select(target, idx);
  std::fill(out.tags.begin(), out.tags.end(), data::DomainTag::generated);
  out.seed = rng.seed();
  return out;
}

} // namespace

void NoiseSpec::validate() const
{
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) { throw std::invalid_argument("noise amplitude must be >= 0"); }
}

PseudoModel fit_pseudo_model(const data::OfflineDataset &target, const density::DensityConfig &config, Index budget,
                             Rng &rng)
{
  if (budget < 1) { throw std::invalid_argument("pseudo model: training budget must be >= 1"); }
  density::DensityConfig c = config;
  c.train.iterations = budget;
  return PseudoModel{density::fit_transition(target, c, rng), budget};
}

data::OfflineDataset model_augment(const data::OfflineDataset &target, const PseudoModel &model, Index n_out, Rng &rng)
{
  if (model.model.role != density::Role::transition) {
    throw std::invalid_argument("model_augment: pseudo model must be a transition model");
  }
  require_dim("pseudo model state dim", target.state_dim, model.model.state_dim);
  require_dim("pseudo model action dim", target.action_dim, model.model.action_dim);
  Rng pick = rng.split(1);
  data::OfflineDataset out = resample(target, n_out, pick);
  for (Index begin = 0, chunk = 0; begin < n_out; begin += sample_chunk, ++chunk) {
    const Index len = std::min(sample_chunk, n_out - begin);
    Rng r = rng.split(2, static_cast<std::uint64_t>(chunk));
    out.next_states.middleCols(begin, len) = density::sample_next_states(
      model.model, out.states.middleCols(begin, len), out.actions.middleCols(begin, len), r);
  }
  out.provenance = {{"generator", "model"},
                    {"model_budget", model.budget},
                    {"parent_hash", data::content_hash(target)},
                    {"model_data_hash", model.model.data_hash},
                    {"count", n_out}};
  data::recompute_stats(out);
  return out;
}

data::OfflineDataset noise_augment(const data::OfflineDataset &target, const NoiseSpec &spec, Index n_out, Rng &rng)
{
  spec.validate();
  Rng pick = rng.split(1);
  data::OfflineDataset out = resample(target, n_out, pick);
  if (spec.amplitude > 0.0) {
    Rng noise = rng.split(2);
    for (Index i = 0; i < n_out; ++i) {
      for (Index d = 0; d < out.state_dim; ++d) {
        out.next_states(d, i) += 2.0 * (noise.uniform() - 0.5) * spec.amplitude;
      }
    }
  }
  out.provenance = {{"generator", "noise"},
                    {"amplitude", spec.amplitude},
                    {"parent_hash", data::content_hash(target)},
                    {"count", n_out}};
  data::recompute_stats(out);
  return out;
}

} // namespace bosa::augment
