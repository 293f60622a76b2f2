#pragma once

#include "mclq/forecast.hpp"
#include "mclq/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mclq {

enum class Backbone { mlp, rnn };

std::string to_string(Backbone backbone);
Backbone parse_backbone(const std::string& name);

/// Shape of the multi-head forecaster.
struct Architecture {
  Backbone backbone = Backbone::mlp;
  int K = 1;               ///< number of hypotheses
  int D = 1;               ///< series dimension
  int context_length = 1;  ///< Lc
  int horizon = 1;         ///< Lp
  int hidden_width = 200;
  int hidden_layers = 3;      ///< MLP only
  bool score_heads = true;
  bool time_feature = false;  ///< MLP only: append the target start time to the input

  /// Length of one flattened input column.
  int input_size() const;
  /// Rows produced by one prediction head per application (D * Lp for the MLP, D for the RNN).
  int head_output() const;
};

void validate(const Architecture& arch);

/// All weights of the forecaster. Prediction heads are stacked: head k owns rows
/// [k * head_output(), (k + 1) * head_output()) of head_weights / head_bias, and row k
/// of score_weights / score_bias. A flattened D x Lp trajectory stores (d, t) at t * D + d.
template <typename Scalar>
struct ModelParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using TensorMap = Eigen::Map<Vector>;
  using ConstTensorMap = Eigen::Map<const Vector>;

  Architecture arch;

  // mlp backbone: hidden_layers affine maps followed by ReLU
  std::vector<Matrix> layer_weights;
  std::vector<Vector> layer_biases;

  // rnn backbone: h_t = tanh(W_in x_t + W_rec h_{t-1} + b), h_0 trainable
  Matrix input_weights;
  Matrix recurrent_weights;
  Vector recurrent_bias;
  Vector initial_state;

  Matrix head_weights;
  Vector head_bias;
  Matrix score_weights;  ///< K x H, empty without score heads
  Vector score_bias;

  /// Every non-empty tensor in a fixed order, as flat views.
  std::vector<std::pair<std::string, TensorMap>> tensors();
  std::vector<std::pair<std::string, ConstTensorMap>> tensors() const;

  /// Same shapes, all zeros.
  ModelParams zeros_like() const;
  Index parameter_count() const;

  template <typename Other>
  ModelParams<Other> cast() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases and zero h_0.
template <typename Scalar>
ModelParams<Scalar> init_params(const Architecture& arch, std::uint64_t seed);

/// Convenience overload with the dimensions spelled out.
template <typename Scalar>
ModelParams<Scalar> init_params(Architecture arch, int K, int D, int context_length, int horizon,
                                std::uint64_t seed) {
  arch.K = K;
  arch.D = D;
  arch.context_length = context_length;
  arch.horizon = horizon;
  return init_params<Scalar>(arch, seed);
}

/// Activations kept by a batched forward pass for the exact backward pass.
/// Column i of every matrix belongs to window i.
template <typename Scalar>
struct ForwardPass {
  using Matrix = typename ModelParams<Scalar>::Matrix;

  Matrix hypotheses;   ///< (K * D * Lp) x B
  Matrix scores;       ///< K x B trajectory scores (mean of step scores); empty without score heads
  Matrix step_scores;  ///< (K * steps) x B per-step sigmoid outputs; steps = 1 for the MLP

  // mlp
  std::vector<Matrix> activations;  ///< input, then each ReLU output
  // rnn
  Matrix inputs;
  std::vector<Matrix> encoder_states;            ///< h_0 .. h_Lc
  std::vector<std::vector<Matrix>> head_states;  ///< [k][j]: hidden state feeding step j of head k

  Index batch() const { return hypotheses.cols(); }
};

/// Flattened inputs, one column per window: the context in (d, t) -> t * D + d order,
/// plus the target start time when arch.time_feature is set.
template <typename Scalar>
typename ModelParams<Scalar>::Matrix pack_inputs(const Architecture& arch,
                                                 const std::vector<WindowPair>& windows);
/// Same, from contexts alone; the target is assumed to start right after each context.
template <typename Scalar>
typename ModelParams<Scalar>::Matrix pack_contexts(const Architecture& arch,
                                                   const std::vector<Trajectory>& contexts);
/// Flattened targets, (D * Lp) x B.
template <typename Scalar>
typename ModelParams<Scalar>::Matrix pack_targets(const Architecture& arch,
                                                  const std::vector<WindowPair>& windows);

/// MLP backbone: ReLU chain, then linear prediction heads and sigmoid score heads.
template <typename Scalar>
ForwardPass<Scalar> forward_mlp(const ModelParams<Scalar>& params,
                                const typename ModelParams<Scalar>::Matrix& inputs);

/// Encodes every context column into its last hidden state, H x B.
template <typename Scalar>
typename ModelParams<Scalar>::Matrix rnn_encode(const ModelParams<Scalar>& params,
                                                const typename ModelParams<Scalar>::Matrix& inputs);

/// Unrolls each head independently from hidden states h (H x B) for `steps` steps,
/// feeding its own predictions back: x_t = f_k(h_{t-1}), h_t = s(x_t, h_{t-1}).
/// The trajectory score of head k is the mean of its step scores.
template <typename Scalar>
ForwardPass<Scalar> rnn_unroll(const ModelParams<Scalar>& params,
                               const typename ModelParams<Scalar>::Matrix& h, int steps);

/// rnn_encode followed by rnn_unroll over the full horizon, keeping every state.
template <typename Scalar>
ForwardPass<Scalar> forward_rnn(const ModelParams<Scalar>& params,
                                const typename ModelParams<Scalar>::Matrix& inputs);

/// Dispatches on the backbone.
template <typename Scalar>
ForwardPass<Scalar> forward(const ModelParams<Scalar>& params,
                            const typename ModelParams<Scalar>::Matrix& inputs);

/// Reverse-mode pass. Given the loss gradient w.r.t. the hypotheses ((K * D * Lp) x B)
/// and w.r.t. the per-step score logits ((K * steps) x B, ignored without score heads),
/// returns the gradient w.r.t. every parameter.
template <typename Scalar>
ModelParams<Scalar> backward(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                             const typename ModelParams<Scalar>::Matrix& d_hypotheses,
                             const typename ModelParams<Scalar>::Matrix& d_step_logits);

/// Column `column` of a forward pass as a Forecast. Without score heads every score is 1/K.
template <typename Scalar>
Forecast extract_forecast(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                          Index column, double dt, double t_start);

}  // namespace mclq
