#pragma once

#include "bosa/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bosa::nn {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Shape of a fully connected network.
///
/// `depth` counts affine layers: depth 1 is a single linear map from input to
/// output, depth 3 has two hidden layers of width `hidden_dim`. Dropout is
/// applied after every hidden activation when running in train mode.
struct MlpSpec
{
  Index input_dim = 1;
  Index hidden_dim = 1;
  Index depth = 1;
  Index output_dim = 1;
  Activation activation = Activation::relu;
  double dropout = 0.0;

  void validate() const;
  Index layer_inputs(Index layer) const;
  Index layer_outputs(Index layer) const;
  /// Offset of layer `layer`'s weight block in the flat parameter vector.
  Index layer_offset(Index layer) const;
  Index param_count() const;

  bool operator==(const MlpSpec &) const = default;
};

template <typename Scalar> using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Flat parameters together with their gradient accumulator and Adam moments.
template <typename Scalar> struct ParamStore
{
  VectorX<Scalar> params;
  VectorX<Scalar> grad;
  VectorX<Scalar> m;
  VectorX<Scalar> v;
  std::int64_t step = 0;

  ParamStore() = default;
  explicit ParamStore(Index n);

  Index size() const { return params.size(); }
  void zero_grad() { grad.setZero(); }
};

/// Activations recorded by a forward pass, consumed by `backward`.
/// Column j of every matrix belongs to sample j of the batch.
template <typename Scalar> struct Tape
{
  std::vector<MatrixX<Scalar>> layer_inputs; // input to each affine layer
  std::vector<MatrixX<Scalar>> hidden_pre;   // pre-activation of each hidden layer
  std::vector<MatrixX<Scalar>> masks;        // scaled dropout masks; empty when dropout is inactive

  bool recorded() const { return !layer_inputs.empty(); }
  void clear();
};

/// Batched forward pass; `input` is input_dim x batch.
///
/// Train mode is selected by passing a dropout stream. With dropout rate 0 the
/// stream is never consumed and train/eval outputs coincide.
template <typename Scalar>
MatrixX<Scalar> forward(const MlpSpec &spec, const Eigen::Ref<const VectorX<Scalar>> &params,
                        const Eigen::Ref<const MatrixX<Scalar>> &input, Tape<Scalar> *tape = nullptr,
                        Rng *dropout = nullptr);

/// Reverse-mode pass through a recorded forward.
///
/// `grad_output` is dLoss/dOutput (output_dim x batch). Parameter gradients are
/// added into `grad_params` when it is non-null. Returns dLoss/dInput.
template <typename Scalar>
MatrixX<Scalar> backward(const MlpSpec &spec, const Eigen::Ref<const VectorX<Scalar>> &params, const Tape<Scalar> &tape,
                         const Eigen::Ref<const MatrixX<Scalar>> &grad_output, VectorX<Scalar> *grad_params);

/// Network value type: spec plus parameters.
template <typename Scalar> struct Mlp
{
  MlpSpec spec;
  ParamStore<Scalar> store;

  MatrixX<Scalar> operator()(const Eigen::Ref<const MatrixX<Scalar>> &input, Tape<Scalar> *tape = nullptr,
                             Rng *dropout = nullptr) const
  {
    return forward<Scalar>(spec, store.params, input, tape, dropout);
  }

  /// Backward that accumulates into this network's gradient buffer.
  MatrixX<Scalar> backprop(const Tape<Scalar> &tape, const Eigen::Ref<const MatrixX<Scalar>> &grad_output)
  {
    return backward<Scalar>(spec, store.params, tape, grad_output, &store.grad);
  }

  /// Backward for input gradients only; parameters are treated as constants.
  MatrixX<Scalar> input_gradient(const Tape<Scalar> &tape, const Eigen::Ref<const MatrixX<Scalar>> &grad_output) const
  {
    return backward<Scalar>(spec, store.params, tape, grad_output, nullptr);
  }
};

/// Weights uniform in +-1/sqrt(fan_in), biases likewise.
template <typename Scalar> Mlp<Scalar> make_mlp(const MlpSpec &spec, Rng &rng);

struct AdamConfig
{
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. Throws std::domain_error naming the offending
/// indices when the gradient contains non-finite entries.
template <typename Scalar>
void adam_step(ParamStore<Scalar> &store, const Eigen::Ref<const VectorX<Scalar>> &grad, Scalar lr,
               const AdamConfig &config = {});

/// Adam step on the store's own gradient buffer, which is then cleared.
template <typename Scalar> void adam_step(ParamStore<Scalar> &store, Scalar lr, const AdamConfig &config = {});

/// shadow <- rate * shadow + (1 - rate) * params
template <typename Scalar> struct EmaTracker
{
  VectorX<Scalar> shadow;
  Scalar rate = Scalar(0.995);
};

template <typename Scalar> EmaTracker<Scalar> make_ema(const ParamStore<Scalar> &store, Scalar rate);
template <typename Scalar> void ema_update(EmaTracker<Scalar> &tracker, const ParamStore<Scalar> &store);

} // namespace bosa::nn
