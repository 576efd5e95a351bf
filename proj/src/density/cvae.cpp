#include "bosa/density/cvae.hpp"

#include <cmath>
#include <numbers>

namespace bosa::density {

namespace {

const double log_two_pi = std::log(2.0 * std::numbers::pi);

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct GaussianHead
{
  Matrix mean;
  Matrix logvar;
  BoolArray active; // raw log-variance inside the clamp range
};

GaussianHead split_head(const Matrix &raw, Index dim, double lo, double hi)
{
  GaussianHead h;
  h.mean = raw.topRows(dim);
  const Matrix lv = raw.bottomRows(dim);
  h.active = (lv.array() >= lo) && (lv.array() <= hi);
  h.logvar = lv.cwiseMax(lo).cwiseMin(hi);
  return h;
}

GaussianHead encode(const CvaeModel &m, const Eigen::Ref<const Matrix> &condition, const Eigen::Ref<const Matrix> &output,
                    nn::Tape<double> *tape)
{
  Matrix in(condition.rows() + output.rows(), condition.cols());
  in << condition, output;
  return split_head(m.encoder(in, tape), m.spec.latent_dim, m.spec.encoder_logvar_min, m.spec.encoder_logvar_max);
}

GaussianHead decode(const CvaeModel &m, const Eigen::Ref<const Matrix> &condition, const Matrix &z, nn::Tape<double> *tape)
{
  Matrix in(condition.rows() + z.rows(), condition.cols());
  in << condition, z;
  return split_head(m.decoder(in, tape), m.spec.output_dim, m.spec.decoder_logvar_min, m.spec.decoder_logvar_max);
}

/// Column-wise log N(y; mean, exp(logvar)).
Vector gaussian_log_density(const Eigen::Ref<const Matrix> &y, const GaussianHead &h)
{
  const Eigen::ArrayXXd diff = y.array() - h.mean.array();
  return (-0.5 * (diff.square() * (-h.logvar.array()).exp() + h.logvar.array() + log_two_pi)).colwise().sum().transpose();
}

void check_inputs(const CvaeModel &m, const Eigen::Ref<const Matrix> &condition, const Eigen::Ref<const Matrix> &output,
                  int samples)
{
  require_dim("cvae condition rows", m.spec.condition_dim, condition.rows());
  require_dim("cvae output rows", m.spec.output_dim, output.rows());
  require_dim("cvae output columns", condition.cols(), output.cols());
  if (samples < 1) { throw std::invalid_argument("cvae: sample count must be >= 1"); }
  if (!condition.allFinite() || !output.allFinite()) { throw std::invalid_argument("cvae: non-finite inputs"); }
}

ElboTerms elbo_impl(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                    const Eigen::Ref<const Matrix> &output, Rng &rng, int samples, double kl_weight, Vector *enc_grad,
                    Vector *dec_grad)
{
  check_inputs(model, condition, output, samples);
  const Index batch = condition.cols();
  const Index lat = model.spec.latent_dim;
  const bool grad = enc_grad != nullptr;

  nn::Tape<double> enc_tape;
  const GaussianHead enc = encode(model, condition, output, grad ? &enc_tape : nullptr);
  const Vector kl = gaussian_kl(enc.mean, enc.logvar);
  const Matrix stddev = (0.5 * enc.logvar.array()).exp().matrix();

  Matrix d_mean = Matrix::Zero(lat, batch);
  Matrix d_logvar = Matrix::Zero(lat, batch);
  Vector recon = Vector::Zero(batch);
  const double scale = 1.0 / (static_cast<double>(batch) * samples);

  for (int l = 0; l < samples; ++l) {
    const Matrix eps = rng.normal_matrix(lat, batch);
    const Matrix z = enc.mean + stddev.cwiseProduct(eps);
    nn::Tape<double> dec_tape;
    const GaussianHead dec = decode(model, condition, z, grad ? &dec_tape : nullptr);
    recon += gaussian_log_density(output, dec) / samples;
    if (!grad) { continue; }

    const Eigen::ArrayXXd diff = output.array() - dec.mean.array();
    const Eigen::ArrayXXd inv_var = (-dec.logvar.array()).exp();
    Matrix g(2 * model.spec.output_dim, batch);
    g.topRows(model.spec.output_dim) = (-scale * diff * inv_var).matrix();
    g.bottomRows(model.spec.output_dim) =
      dec.active.select(scale * 0.5 * (1.0 - diff.square() * inv_var), 0.0).matrix();
    const Matrix g_in = nn::backward<double>(model.decoder.spec, model.decoder.store.params, dec_tape, g, dec_grad);
    const auto g_z = g_in.bottomRows(lat);
    d_mean += g_z;
    d_logvar += (g_z.array() * 0.5 * stddev.array() * eps.array()).matrix();
  }

  ElboTerms terms;
  terms.kl = kl.mean();
  terms.reconstruction = recon.mean();
  terms.loss = kl_weight * terms.kl - terms.reconstruction;

  if (grad) {
    const double kl_scale = kl_weight / static_cast<double>(batch);
    d_mean += kl_scale * enc.mean;
    d_logvar += (kl_scale * 0.5 * (enc.logvar.array().exp() - 1.0)).matrix();
    d_logvar = enc.active.select(d_logvar.array(), 0.0).matrix();
    Matrix g(2 * lat, batch);
    g << d_mean, d_logvar;
    nn::backward<double>(model.encoder.spec, model.encoder.store.params, enc_tape, g, enc_grad);
  }
  return terms;
}

LikelihoodWithGrad likelihood_impl(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                                   const Eigen::Ref<const Matrix> &output, Rng &rng, int samples, bool grad)
{
  check_inputs(model, condition, output, samples);
  const Index batch = condition.cols();
  const Index lat = model.spec.latent_dim;
  const Index odim = model.spec.output_dim;

  nn::Tape<double> enc_tape;
  const GaussianHead enc = encode(model, condition, output, grad ? &enc_tape : nullptr);
  const Matrix stddev = (0.5 * enc.logvar.array()).exp().matrix();

  Matrix log_w(samples, batch);
  std::vector<Matrix> eps(static_cast<std::size_t>(samples));
  std::vector<Matrix> zs(static_cast<std::size_t>(samples));
  std::vector<GaussianHead> decs(static_cast<std::size_t>(samples));
  std::vector<nn::Tape<double>> tapes(grad ? static_cast<std::size_t>(samples) : 0);

  for (int l = 0; l < samples; ++l) {
    const auto k = static_cast<std::size_t>(l);
    eps[k] = rng.normal_matrix(lat, batch);
    zs[k] = enc.mean + stddev.cwiseProduct(eps[k]);
    decs[k] = decode(model, condition, zs[k], grad ? &tapes[k] : nullptr);
    const Vector log_p = gaussian_log_density(output, decs[k]);
    const Eigen::RowVectorXd log_prior = -0.5 * (zs[k].array().square() + log_two_pi).colwise().sum();
    const Eigen::RowVectorXd log_q = -0.5 * (eps[k].array().square() + enc.logvar.array() + log_two_pi).colwise().sum();
    log_w.row(l) = log_p.transpose() + log_prior - log_q;
  }

  LikelihoodWithGrad out;
  out.value.resize(batch);
  Eigen::Array<bool, Eigen::Dynamic, 1> floored(batch);
  const double log_count = std::log(static_cast<double>(samples));
  for (Index b = 0; b < batch; ++b) {
    const double v = log_sum_exp(log_w.col(b)) - log_count;
    floored[b] = !std::isfinite(v) || v < log_likelihood_floor;
    out.value[b] = floored[b] ? log_likelihood_floor : v;
  }
  if (!grad) { return out; }

  // Self-normalised importance weights; floored columns carry no gradient.
  Matrix alpha(samples, batch);
  for (Index b = 0; b < batch; ++b) {
    if (floored[b]) {
      alpha.col(b).setZero();
      continue;
    }
    const double peak = log_w.col(b).maxCoeff();
    alpha.col(b) = (log_w.col(b).array() - peak).exp().matrix();
    alpha.col(b) /= alpha.col(b).sum();
  }

  out.d_output = Matrix::Zero(odim, batch);
  out.d_condition = Matrix::Zero(model.spec.condition_dim, batch);
  Matrix d_mean = Matrix::Zero(lat, batch);
  Matrix d_logvar = Matrix::Zero(lat, batch);
  for (int l = 0; l < samples; ++l) {
    const auto k = static_cast<std::size_t>(l);
    const GaussianHead &dec = decs[k];
    const Eigen::ArrayXXd diff = output.array() - dec.mean.array();
    const Eigen::ArrayXXd inv_var = (-dec.logvar.array()).exp();
    const Eigen::RowVectorXd a = alpha.row(l);

    Matrix g(2 * odim, batch);
    g.topRows(odim) = ((diff * inv_var).rowwise() * a.array()).matrix();
    g.bottomRows(odim) =
      dec.active.select((-0.5 * (1.0 - diff.square() * inv_var)).rowwise() * a.array(), 0.0).matrix();
    const Matrix g_in = model.decoder.input_gradient(tapes[k], g);

    out.d_condition += g_in.topRows(model.spec.condition_dim);
    const Matrix g_z = g_in.bottomRows(lat) - (zs[k].array().rowwise() * a.array()).matrix();
    out.d_output -= ((diff * inv_var).rowwise() * a.array()).matrix();
    d_mean += g_z;
    d_logvar += (g_z.array() * 0.5 * stddev.array() * eps[k].array()).matrix();
    d_logvar.array().rowwise() += 0.5 * a.array();
  }
  d_logvar = enc.active.select(d_logvar.array(), 0.0).matrix();
  Matrix g(2 * lat, batch);
  g << d_mean, d_logvar;
  const Matrix g_in = model.encoder.input_gradient(enc_tape, g);
  out.d_condition += g_in.topRows(model.spec.condition_dim);
  out.d_output += g_in.bottomRows(odim);
  return out;
}

} // namespace

void CvaeSpec::validate() const
{
  if (condition_dim < 1 || output_dim < 1 || hidden_dim < 1 || depth < 1) {
    throw std::invalid_argument("CvaeSpec: dimensions must be >= 1");
  }
  if (latent_dim != 2 * output_dim) { throw std::invalid_argument("CvaeSpec: latent dim must be 2 x output dim"); }
  if (!(kl_weight >= 0.0)) { throw std::invalid_argument("CvaeSpec: KL weight must be >= 0"); }
  if (!(decoder_logvar_min < decoder_logvar_max) || !(encoder_logvar_min < encoder_logvar_max)) {
    throw std::invalid_argument("CvaeSpec: empty log-variance range");
  }
}

nn::MlpSpec CvaeSpec::encoder_spec() const
{
  return nn::MlpSpec{condition_dim + output_dim, hidden_dim, depth, 2 * latent_dim, nn::Activation::relu, 0.0};
}

nn::MlpSpec CvaeSpec::decoder_spec() const
{
  return nn::MlpSpec{condition_dim + latent_dim, hidden_dim, depth, 2 * output_dim, nn::Activation::relu, 0.0};
}

CvaeSpec make_cvae_spec(Index condition_dim, Index output_dim, Index hidden_dim, Index depth, double kl_weight)
{
  CvaeSpec spec;
  spec.condition_dim = condition_dim;
  spec.output_dim = output_dim;
  spec.latent_dim = 2 * output_dim;
  spec.hidden_dim = hidden_dim;
  spec.depth = depth;
  spec.kl_weight = kl_weight;
  spec.validate();
  return spec;
}

CvaeModel make_cvae(const CvaeSpec &spec, Rng &rng)
{
  spec.validate();
  Rng enc_rng = rng.split(1);
  Rng dec_rng = rng.split(2);
  return CvaeModel{spec, nn::make_mlp<double>(spec.encoder_spec(), enc_rng),
                   nn::make_mlp<double>(spec.decoder_spec(), dec_rng)};
}

Vector gaussian_kl(const Eigen::Ref<const Matrix> &mean, const Eigen::Ref<const Matrix> &logvar)
{
  return (0.5 * (mean.array().square() + logvar.array().exp() - logvar.array() - 1.0)).colwise().sum().transpose();
}

ElboTerms elbo_loss(CvaeModel &model, const Eigen::Ref<const Matrix> &condition, const Eigen::Ref<const Matrix> &output,
                    Rng &rng, int samples)
{
  return elbo_impl(model, condition, output, rng, samples, model.spec.kl_weight, &model.encoder.store.grad,
                   &model.decoder.store.grad);
}

ElboTerms elbo_value(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                     const Eigen::Ref<const Matrix> &output, Rng &rng, int samples, double kl_weight)
{
  return elbo_impl(model, condition, output, rng, samples, kl_weight, nullptr, nullptr);
}

Vector log_likelihood(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                      const Eigen::Ref<const Matrix> &output, Rng &rng, int samples)
{
  return likelihood_impl(model, condition, output, rng, samples, false).value;
}

LikelihoodWithGrad log_likelihood_with_grad(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                                            const Eigen::Ref<const Matrix> &output, Rng &rng, int samples)
{
  return likelihood_impl(model, condition, output, rng, samples, true);
}

Matrix sample(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition, Rng &rng)
{
  require_dim("cvae condition rows", model.spec.condition_dim, condition.rows());
  const Matrix z = rng.normal_matrix(model.spec.latent_dim, condition.cols());
  const GaussianHead dec = decode(model, condition, z, nullptr);
  const Matrix noise = rng.normal_matrix(model.spec.output_dim, condition.cols());
  return dec.mean + ((0.5 * dec.logvar.array()).exp() * noise.array()).matrix();
}

Matrix decode_mode(const CvaeModel &model, const Eigen::Ref<const Matrix> &condition)
{
  require_dim("cvae condition rows", model.spec.condition_dim, condition.rows());
  return decode(model, condition, Matrix::Zero(model.spec.latent_dim, condition.cols()), nullptr).mean;
}

std::vector<double> train_cvae(CvaeModel &model, const Eigen::Ref<const Matrix> &condition,
                               const Eigen::Ref<const Matrix> &output, const TrainConfig &config, Rng &rng)
{
  require_dim("cvae training columns", condition.cols(), output.cols());
  if (condition.cols() == 0) { throw std::invalid_argument("train_cvae: empty training set"); }
  if (config.batch_size < 1 || config.iterations < 0) { throw std::invalid_argument("train_cvae: bad schedule"); }

  const Index n = condition.cols();
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.iterations));
  Matrix cond_batch(condition.rows(), config.batch_size);
  Matrix out_batch(output.rows(), config.batch_size);
  for (Index it = 0; it < config.iterations; ++it) {
    for (Index b = 0; b < config.batch_size; ++b) {
      const auto i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
      cond_batch.col(b) = condition.col(i);
      out_batch.col(b) = output.col(i);
    }
    model.encoder.store.zero_grad();
    model.decoder.store.zero_grad();
    const ElboTerms terms = elbo_loss(model, cond_batch, out_batch, rng, config.samples);
    nn::adam_step<double>(model.encoder.store, config.lr);
    nn::adam_step<double>(model.decoder.store, config.lr);
    history.push_back(terms.loss);
  }
  return history;
}

} // namespace bosa::density
