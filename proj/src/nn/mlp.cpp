#include "bosa/nn/mlp.hpp"

#include <cmath>
#include <sstream>

namespace bosa::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view name)
{
  if (name == "relu") { return Activation::relu; }
  if (name == "tanh") { return Activation::tanh; }
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

void MlpSpec::validate() const
{
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("MlpSpec: all dimensions must be >= 1");
  }
  if (depth < 1) { throw std::invalid_argument("MlpSpec: depth must be >= 1"); }
  if (!(dropout >= 0.0 && dropout < 1.0)) { throw std::invalid_argument("MlpSpec: dropout rate must lie in [0, 1)"); }
}

Index MlpSpec::layer_inputs(Index layer) const { return layer == 0 ? input_dim : hidden_dim; }

Index MlpSpec::layer_outputs(Index layer) const { return layer == depth - 1 ? output_dim : hidden_dim; }

Index MlpSpec::layer_offset(Index layer) const
{
  Index offset = 0;
  for (Index l = 0; l < layer; ++l) { offset += layer_outputs(l) * (layer_inputs(l) + 1); }
  return offset;
}

Index MlpSpec::param_count() const { return layer_offset(depth); }

template <typename Scalar>
ParamStore<Scalar>::ParamStore(Index n)
  : params(VectorX<Scalar>::Zero(n))
  , grad(VectorX<Scalar>::Zero(n))
  , m(VectorX<Scalar>::Zero(n))
  , v(VectorX<Scalar>::Zero(n))
{
}

template <typename Scalar> void Tape<Scalar>::clear()
{
  layer_inputs.clear();
  hidden_pre.clear();
  masks.clear();
}

namespace {

template <typename Scalar> void activate(Activation a, MatrixX<Scalar> &x)
{
  if (a == Activation::relu) {
    x = x.cwiseMax(Scalar(0));
  } else {
    x = x.array().tanh().matrix();
  }
}

template <typename Scalar> void scale_by_derivative(Activation a, const MatrixX<Scalar> &pre, MatrixX<Scalar> &g)
{
  if (a == Activation::relu) {
    g = (pre.array() > Scalar(0)).select(g, Scalar(0));
  } else {
    g.array() *= Scalar(1) - pre.array().tanh().square();
  }
}

void check_params(const MlpSpec &spec, Index size)
{
  spec.validate();
  require_dim("mlp parameter vector", spec.param_count(), size);
}

} // namespace

template <typename Scalar>
MatrixX<Scalar> forward(const MlpSpec &spec, const Eigen::Ref<const VectorX<Scalar>> &params,
                        const Eigen::Ref<const MatrixX<Scalar>> &input, Tape<Scalar> *tape, Rng *dropout)
{
  check_params(spec, params.size());
  require_dim("mlp input rows", spec.input_dim, input.rows());
  if (tape) { tape->clear(); }

  const bool drop = dropout != nullptr && spec.dropout > 0.0;
  const Scalar keep_scale = spec.dropout < 1.0 ? Scalar(1.0 / (1.0 - spec.dropout)) : Scalar(0);

  MatrixX<Scalar> x = input;
  for (Index l = 0; l < spec.depth; ++l) {
    const Index rows = spec.layer_outputs(l);
    const Index cols = spec.layer_inputs(l);
    const Index offset = spec.layer_offset(l);
    Eigen::Map<const MatrixX<Scalar>> weight(params.data() + offset, rows, cols);
    Eigen::Map<const VectorX<Scalar>> bias(params.data() + offset + rows * cols, rows);

    MatrixX<Scalar> z = weight * x;
    z.colwise() += bias;
    if (tape) { tape->layer_inputs.push_back(std::move(x)); }

    if (l == spec.depth - 1) { return z; }

    if (tape) { tape->hidden_pre.push_back(z); }
    activate(spec.activation, z);
    if (drop) {
      MatrixX<Scalar> mask(z.rows(), z.cols());
      for (Index j = 0; j < mask.cols(); ++j) {
        for (Index i = 0; i < mask.rows(); ++i) {
          mask(i, j) = dropout->uniform() < spec.dropout ? Scalar(0) : keep_scale;
        }
      }
      z.array() *= mask.array();
      if (tape) { tape->masks.push_back(std::move(mask)); }
    }
    x = std::move(z);
  }
  return x; // unreachable: depth >= 1
}

template <typename Scalar>
MatrixX<Scalar> backward(const MlpSpec &spec, const Eigen::Ref<const VectorX<Scalar>> &params, const Tape<Scalar> &tape,
                         const Eigen::Ref<const MatrixX<Scalar>> &grad_output, VectorX<Scalar> *grad_params)
{
  if (!tape.recorded()) { throw std::logic_error("backward called without a recorded forward pass"); }
  check_params(spec, params.size());
  if (static_cast<Index>(tape.layer_inputs.size()) != spec.depth) {
    throw std::logic_error("backward: tape was recorded for a different network depth");
  }
  require_dim("mlp grad_output rows", spec.output_dim, grad_output.rows());
  const Index batch = tape.layer_inputs.front().cols();
  require_dim("mlp grad_output columns", batch, grad_output.cols());
  if (grad_params) { require_dim("mlp gradient buffer", spec.param_count(), grad_params->size()); }

  MatrixX<Scalar> g = grad_output;
  for (Index l = spec.depth - 1; l >= 0; --l) {
    const Index rows = spec.layer_outputs(l);
    const Index cols = spec.layer_inputs(l);
    const Index offset = spec.layer_offset(l);
    Eigen::Map<const MatrixX<Scalar>> weight(params.data() + offset, rows, cols);
    const auto &x = tape.layer_inputs[static_cast<std::size_t>(l)];

    if (grad_params) {
      Eigen::Map<MatrixX<Scalar>> d_weight(grad_params->data() + offset, rows, cols);
      Eigen::Map<VectorX<Scalar>> d_bias(grad_params->data() + offset + rows * cols, rows);
      d_weight.noalias() += g * x.transpose();
      d_bias += g.rowwise().sum();
    }

    MatrixX<Scalar> gx = weight.transpose() * g;
    if (l > 0) {
      const auto hidden = static_cast<std::size_t>(l - 1);
      if (!tape.masks.empty()) { gx.array() *= tape.masks[hidden].array(); }
      scale_by_derivative(spec.activation, tape.hidden_pre[hidden], gx);
    }
    g = std::move(gx);
  }
  return g;
}

template <typename Scalar> Mlp<Scalar> make_mlp(const MlpSpec &spec, Rng &rng)
{
  spec.validate();
  Mlp<Scalar> net{spec, ParamStore<Scalar>(spec.param_count())};
  for (Index l = 0; l < spec.depth; ++l) {
    const Index rows = spec.layer_outputs(l);
    const Index cols = spec.layer_inputs(l);
    const Index offset = spec.layer_offset(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Index i = 0; i < rows * (cols + 1); ++i) {
      net.store.params[offset + i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }
  return net;
}

template <typename Scalar>
void adam_step(ParamStore<Scalar> &store, const Eigen::Ref<const VectorX<Scalar>> &grad, Scalar lr,
               const AdamConfig &config)
{
  require_dim("adam gradient", store.size(), grad.size());
  if (!grad.allFinite()) {
    std::ostringstream msg;
    msg << "adam_step: non-finite gradient at indices";
    int listed = 0;
    for (Index i = 0; i < grad.size(); ++i) {
      if (!std::isfinite(static_cast<double>(grad[i]))) {
        if (listed++ < 16) {
          msg << ' ' << i;
        } else {
          msg << " ...";
          break;
        }
      }
    }
    throw std::domain_error(msg.str());
  }

  store.step += 1;
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  const auto t = static_cast<double>(store.step);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(config.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(config.beta2, t));
  const auto eps = static_cast<Scalar>(config.eps);

  store.m = b1 * store.m + (Scalar(1) - b1) * grad;
  store.v = b2 * store.v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  store.params.array() -= lr * (store.m.array() / c1) / ((store.v.array() / c2).sqrt() + eps);
}

template <typename Scalar> void adam_step(ParamStore<Scalar> &store, Scalar lr, const AdamConfig &config)
{
  adam_step<Scalar>(store, store.grad, lr, config);
  store.zero_grad();
}

template <typename Scalar> EmaTracker<Scalar> make_ema(const ParamStore<Scalar> &store, Scalar rate)
{
  if (!(rate >= Scalar(0) && rate <= Scalar(1))) { throw std::invalid_argument("EMA rate must lie in [0, 1]"); }
  return EmaTracker<Scalar>{store.params, rate};
}

template <typename Scalar> void ema_update(EmaTracker<Scalar> &tracker, const ParamStore<Scalar> &store)
{
  if (!(tracker.rate >= Scalar(0) && tracker.rate <= Scalar(1))) {
    throw std::invalid_argument("EMA rate must lie in [0, 1]");
  }
  require_dim("ema shadow", tracker.shadow.size(), store.size());
  tracker.shadow = tracker.rate * tracker.shadow + (Scalar(1) - tracker.rate) * store.params;
}

#define BOSA_INSTANTIATE_NN(Scalar)                                                                                   \
  template struct ParamStore<Scalar>;                                                                                  \
  template struct Tape<Scalar>;                                                                                        \
  template MatrixX<Scalar> forward<Scalar>(const MlpSpec &, const Eigen::Ref<const VectorX<Scalar>> &,                 \
                                           const Eigen::Ref<const MatrixX<Scalar>> &, Tape<Scalar> *, Rng *);          \
  template MatrixX<Scalar> backward<Scalar>(const MlpSpec &, const Eigen::Ref<const VectorX<Scalar>> &,                \
                                            const Tape<Scalar> &, const Eigen::Ref<const MatrixX<Scalar>> &,           \
                                            VectorX<Scalar> *);                                                        \
  template Mlp<Scalar> make_mlp<Scalar>(const MlpSpec &, Rng &);                                                       \
  template void adam_step<Scalar>(ParamStore<Scalar> &, const Eigen::Ref<const VectorX<Scalar>> &, Scalar,             \
                                  const AdamConfig &);                                                                 \
  template void adam_step<Scalar>(ParamStore<Scalar> &, Scalar, const AdamConfig &);                                   \
  template EmaTracker<Scalar> make_ema<Scalar>(const ParamStore<Scalar> &, Scalar);                                    \
  template void ema_update<Scalar>(EmaTracker<Scalar> &, const ParamStore<Scalar> &);

BOSA_INSTANTIATE_NN(float)
BOSA_INSTANTIATE_NN(double)

#undef BOSA_INSTANTIATE_NN

} // namespace bosa::nn
