#pragma once

#include "bosa/density/density_model.hpp"

namespace bosa::augment {

/// Componentwise uniform noise of half-width `amplitude` on the next state.
struct NoiseSpec
{
  double amplitude = 0.1;

  void validate() const;
};

/// A transition-role density model fit on target data with a deliberately
/// limited iteration budget; the budget is the mismatch dial.
struct PseudoModel
{
  density::DensityModel model;
  Index budget = 0;
};

PseudoModel fit_pseudo_model(const data::OfflineDataset &target, const density::DensityConfig &config, Index budget,
                             Rng &rng);

/// Copy (s, a, r, done) of uniformly drawn target transitions and replace s'
/// with a model sample. Every output carries the `generated` tag.
data::OfflineDataset model_augment(const data::OfflineDataset &target, const PseudoModel &model, Index n_out, Rng &rng);

/// Same copy, with s' perturbed by U[-s, s] noise per component.
data::OfflineDataset noise_augment(const data::OfflineDataset &target, const NoiseSpec &spec, Index n_out, Rng &rng);

} // namespace bosa::augment
