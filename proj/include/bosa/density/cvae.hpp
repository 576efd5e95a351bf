#pragma once

#include "bosa/common.hpp"
#include "bosa/nn/mlp.hpp"

#include <vector>

namespace bosa::density {

/// Conditional VAE over y | x.
///
/// Encoder q(z | x, y) and decoder p(y | x, z) are both diagonal Gaussians whose
/// mean and log-variance come out of an MLP; the prior p(z) is standard normal.
/// Log-variances are clamped (gradient zero outside the range).
struct CvaeSpec
{
  Index condition_dim = 1;
  Index output_dim = 1;
  Index latent_dim = 2;
  Index hidden_dim = 750;
  Index depth = 3;
  double kl_weight = 0.5;
  double decoder_logvar_min = -6.0;
  double decoder_logvar_max = 2.0;
  double encoder_logvar_min = -8.0;
  double encoder_logvar_max = 4.0;

  void validate() const;
  nn::MlpSpec encoder_spec() const;
  nn::MlpSpec decoder_spec() const;
};

/// Latent width is twice the modelled variable's width.
CvaeSpec make_cvae_spec(Index condition_dim, Index output_dim, Index hidden_dim = 750, Index depth = 3,
                        double kl_weight = 0.5);

struct CvaeModel
{
  CvaeSpec spec;
  nn::Mlp<double> encoder;
  nn::Mlp<double> decoder;
};

CvaeModel make_cvae(const CvaeSpec &spec, Rng &rng);

/// Batch means of the ELBO pieces. `loss = kl_weight * kl - reconstruction`.
struct ElboTerms
{
  double loss = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
};

/// Closed-form KL(N(mean, exp(logvar)) || N(0, I)) per column.
Vector gaussian_kl(const Eigen::Ref<const Matrix> &mean, const Eigen::Ref<const Matrix> &logvar);

/// Negative empirical lower bound on a batch (columns). `samples` latent draws
/// per column via reparameterisation. Accumulates parameter gradients into the
/// encoder and decoder stores.
ElboTerms elbo_loss(CvaeModel &model, const Eigen::Ref<const Matrix> &condition, const Eigen::Ref<const Matrix> &output,
                    Rng &rng, int samples);

/// Same value as `elbo_loss`, no gradients, with an explicit KL weight.
ElboTerms elbo_value(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                     const Eigen::Ref<const Matrix> &output, Rng &rng, int samples, double kl_weight);

/// Returned for estimates whose importance weights all vanish.
inline constexpr double log_likelihood_floor = -1e6;

/// Importance-sampled log p(y | x) per column, with the encoder as proposal.
Vector log_likelihood(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                      const Eigen::Ref<const Matrix> &output, Rng &rng, int samples = 10);

struct LikelihoodWithGrad
{
  Vector value;      // per column
  Matrix d_output;   // d value_j / d output(:, j), with latent noise held fixed
  Matrix d_condition;
};

LikelihoodWithGrad log_likelihood_with_grad(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                                            const Eigen::Ref<const Matrix> &output, Rng &rng, int samples = 10);

/// y ~ p(y | x, z) with z drawn from the prior.
Matrix sample(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition, Rng &rng);

/// Decoder mean at z = 0 (the prior mode).
Matrix decode_mode(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition);

struct TrainConfig
{
  double lr = 1e-3;
  Index batch_size = 256;
  Index iterations = 100000;
  int samples = 1;
};

/// Minibatch Adam on the ELBO loss. Returns the per-iteration loss.
std::vector<double> train_cvae(CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                               const Eigen::Ref<const Matrix> &output, const TrainConfig &config, Rng &rng);

} // namespace bosa::density
