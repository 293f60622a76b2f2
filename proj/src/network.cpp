#include "mclq/network.hpp"

#include "mclq/error.hpp"
#include "mclq/random.hpp"

#include <cmath>

namespace mclq {

std::string to_string(Backbone backbone) { return backbone == Backbone::mlp ? "mlp" : "rnn"; }

Backbone parse_backbone(const std::string& name) {
  if (name == "mlp") return Backbone::mlp;
  if (name == "rnn") return Backbone::rnn;
  detail::fail("unknown backbone '" + name + "' (expected mlp or rnn)");
}

int Architecture::input_size() const {
  return D * context_length + (backbone == Backbone::mlp && time_feature ? 1 : 0);
}

int Architecture::head_output() const { return backbone == Backbone::mlp ? D * horizon : D; }

void validate(const Architecture& arch) {
  detail::require(arch.K >= 1, "architecture: K must be >= 1");
  detail::require(arch.D >= 1, "architecture: D must be >= 1");
  detail::require(arch.context_length >= 1, "architecture: context length must be >= 1");
  detail::require(arch.horizon >= 1, "architecture: horizon must be >= 1");
  detail::require(arch.hidden_width >= 1, "architecture: hidden width must be >= 1");
  detail::require(arch.backbone == Backbone::rnn || arch.hidden_layers >= 1,
                  "architecture: the MLP needs at least one hidden layer");
}

std::vector<double> Forecast::normalized_scores() const {
  double total = 0.0;
  for (double s : scores) total += s;
  std::vector<double> out(scores.size(), scores.empty() ? 0.0 : 1.0 / scores.size());
  if (total > 0.0) {
    for (std::size_t k = 0; k < scores.size(); ++k) out[k] = scores[k] / total;
  }
  return out;
}

void validate(const Forecast& forecast) {
  detail::require(!forecast.hypotheses.empty(), "forecast has no hypotheses");
  detail::require(forecast.scores.size() == forecast.hypotheses.size(),
                  "forecast scores and hypotheses differ in count");
  for (const auto& h : forecast.hypotheses) {
    detail::require(h.rows() == forecast.dim() && h.cols() == forecast.length() && h.size() > 0,
                    "forecast hypotheses do not share a shape");
  }
  for (double s : forecast.scores) {
    detail::require(s >= 0.0 && s <= 1.0, "forecast scores must lie in [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// ModelParams

template <typename Scalar>
std::vector<std::pair<std::string, typename ModelParams<Scalar>::TensorMap>>
ModelParams<Scalar>::tensors() {
  std::vector<std::pair<std::string, TensorMap>> out;
  auto add = [&](const std::string& name, auto& t) {
    if (t.size() > 0) out.emplace_back(name, TensorMap(t.data(), t.size()));
  };
  for (std::size_t l = 0; l < layer_weights.size(); ++l) {
    add("mlp." + std::to_string(l) + ".weight", layer_weights[l]);
    add("mlp." + std::to_string(l) + ".bias", layer_biases[l]);
  }
  add("rnn.input_weight", input_weights);
  add("rnn.recurrent_weight", recurrent_weights);
  add("rnn.bias", recurrent_bias);
  add("rnn.initial_state", initial_state);
  add("heads.weight", head_weights);
  add("heads.bias", head_bias);
  add("scores.weight", score_weights);
  add("scores.bias", score_bias);
  return out;
}

template <typename Scalar>
std::vector<std::pair<std::string, typename ModelParams<Scalar>::ConstTensorMap>>
ModelParams<Scalar>::tensors() const {
  std::vector<std::pair<std::string, ConstTensorMap>> out;
  for (auto& [name, map] : const_cast<ModelParams*>(this)->tensors()) {
    out.emplace_back(name, ConstTensorMap(map.data(), map.size()));
  }
  return out;
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::zeros_like() const {
  ModelParams z = *this;
  for (auto& [name, t] : z.tensors()) t.setZero();
  return z;
}

template <typename Scalar>
Index ModelParams<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& [name, t] : tensors()) n += t.size();
  return n;
}

template <typename Scalar>
template <typename Other>
ModelParams<Other> ModelParams<Scalar>::cast() const {
  ModelParams<Other> out;
  out.arch = arch;
  for (const auto& w : layer_weights) out.layer_weights.push_back(w.template cast<Other>());
  for (const auto& b : layer_biases) out.layer_biases.push_back(b.template cast<Other>());
  out.input_weights = input_weights.template cast<Other>();
  out.recurrent_weights = recurrent_weights.template cast<Other>();
  out.recurrent_bias = recurrent_bias.template cast<Other>();
  out.initial_state = initial_state.template cast<Other>();
  out.head_weights = head_weights.template cast<Other>();
  out.head_bias = head_bias.template cast<Other>();
  out.score_weights = score_weights.template cast<Other>();
  out.score_bias = score_bias.template cast<Other>();
  return out;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const Architecture& arch, std::uint64_t seed) {
  validate(arch);
  using Matrix = typename ModelParams<Scalar>::Matrix;
  using Vector = typename ModelParams<Scalar>::Vector;
  Rng rng(seed);
  auto uniform = [&](Index rows, Index cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Matrix m(rows, cols);
    // Column-major fill order keeps the draw sequence independent of Scalar.
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(bound * (2.0 * rng.uniform() - 1.0));
    }
    return m;
  };

  ModelParams<Scalar> p;
  p.arch = arch;
  const int H = arch.hidden_width;
  if (arch.backbone == Backbone::mlp) {
    int fan_in = arch.input_size();
    for (int l = 0; l < arch.hidden_layers; ++l) {
      p.layer_weights.push_back(uniform(H, fan_in));
      p.layer_biases.push_back(Vector::Zero(H));
      fan_in = H;
    }
  } else {
    p.input_weights = uniform(H, arch.D);
    p.recurrent_weights = uniform(H, H);
    p.recurrent_bias = Vector::Zero(H);
    p.initial_state = Vector::Zero(H);
  }
  p.head_weights = uniform(static_cast<Index>(arch.K) * arch.head_output(), H);
  p.head_bias = Vector::Zero(static_cast<Index>(arch.K) * arch.head_output());
  if (arch.score_heads) {
    p.score_weights = uniform(arch.K, H);
    p.score_bias = Vector::Zero(arch.K);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Packing

template <typename Scalar>
typename ModelParams<Scalar>::Matrix pack_contexts(const Architecture& arch,
                                                   const std::vector<Trajectory>& contexts) {
  using Matrix = typename ModelParams<Scalar>::Matrix;
  const Index n_ctx = static_cast<Index>(arch.D) * arch.context_length;
  Matrix inputs(arch.input_size(), static_cast<Index>(contexts.size()));
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const auto& c = contexts[i];
    if (c.dim() != arch.D || c.length() != arch.context_length) {
      detail::fail("context " + std::to_string(i) + ": expected " + std::to_string(arch.D) + " x " +
                   std::to_string(arch.context_length) + ", got " + std::to_string(c.dim()) +
                   " x " + std::to_string(c.length()));
    }
    const auto col = static_cast<Index>(i);
    inputs.col(col).head(n_ctx) = c.values.reshaped().template cast<Scalar>();
    if (arch.backbone == Backbone::mlp && arch.time_feature) {
      inputs(n_ctx, col) = static_cast<Scalar>(c.t_start + c.length() * c.dt);
    }
  }
  return inputs;
}

template <typename Scalar>
typename ModelParams<Scalar>::Matrix pack_inputs(const Architecture& arch,
                                                 const std::vector<WindowPair>& windows) {
  std::vector<Trajectory> contexts;
  contexts.reserve(windows.size());
  for (const auto& w : windows) contexts.push_back(w.context);
  auto inputs = pack_contexts<Scalar>(arch, contexts);
  if (arch.backbone == Backbone::mlp && arch.time_feature) {
    const Index row = static_cast<Index>(arch.D) * arch.context_length;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      inputs(row, static_cast<Index>(i)) = static_cast<Scalar>(windows[i].target.t_start);
    }
  }
  return inputs;
}

template <typename Scalar>
typename ModelParams<Scalar>::Matrix pack_targets(const Architecture& arch,
                                                  const std::vector<WindowPair>& windows) {
  typename ModelParams<Scalar>::Matrix targets(static_cast<Index>(arch.D) * arch.horizon,
                                               static_cast<Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& t = windows[i].target;
    if (t.dim() != arch.D || t.length() != arch.horizon) {
      detail::fail("target " + std::to_string(i) + ": expected " + std::to_string(arch.D) + " x " +
                   std::to_string(arch.horizon) + ", got " + std::to_string(t.dim()) + " x " +
                   std::to_string(t.length()));
    }
    targets.col(static_cast<Index>(i)) = t.values.reshaped().template cast<Scalar>();
  }
  return targets;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Scalar>
void check_inputs(const ModelParams<Scalar>& params, const typename ModelParams<Scalar>::Matrix& x) {
  if (x.rows() != params.arch.input_size()) {
    detail::fail("input has " + std::to_string(x.rows()) + " rows, the model expects " +
                 std::to_string(params.arch.input_size()));
  }
}

}  // namespace

template <typename Scalar>
ForwardPass<Scalar> forward_mlp(const ModelParams<Scalar>& params,
                                const typename ModelParams<Scalar>::Matrix& inputs) {
  detail::require(params.arch.backbone == Backbone::mlp, "forward_mlp on a non-MLP model");
  check_inputs(params, inputs);
  ForwardPass<Scalar> pass;
  pass.activations.reserve(params.layer_weights.size() + 1);
  pass.activations.push_back(inputs);
  for (std::size_t l = 0; l < params.layer_weights.size(); ++l) {
    typename ModelParams<Scalar>::Matrix z = params.layer_weights[l] * pass.activations.back();
    z.colwise() += params.layer_biases[l];
    pass.activations.push_back(z.cwiseMax(Scalar(0)));
  }
  const auto& top = pass.activations.back();
  pass.hypotheses.noalias() = params.head_weights * top;
  pass.hypotheses.colwise() += params.head_bias;
  if (params.arch.score_heads) {
    typename ModelParams<Scalar>::Matrix logits = params.score_weights * top;
    logits.colwise() += params.score_bias;
    pass.step_scores = sigmoid(logits);
    pass.scores = pass.step_scores;
  }
  return pass;
}

template <typename Scalar>
typename ModelParams<Scalar>::Matrix rnn_encode(const ModelParams<Scalar>& params,
                                                const typename ModelParams<Scalar>::Matrix& inputs) {
  detail::require(params.arch.backbone == Backbone::rnn, "rnn_encode on a non-RNN model");
  check_inputs(params, inputs);
  const int D = params.arch.D;
  typename ModelParams<Scalar>::Matrix h = params.initial_state.replicate(1, inputs.cols());
  for (int t = 0; t < params.arch.context_length; ++t) {
    typename ModelParams<Scalar>::Matrix z = params.input_weights * inputs.middleRows(t * D, D);
    z.noalias() += params.recurrent_weights * h;
    z.colwise() += params.recurrent_bias;
    h = z.array().tanh();
  }
  return h;
}

template <typename Scalar>
ForwardPass<Scalar> rnn_unroll(const ModelParams<Scalar>& params,
                               const typename ModelParams<Scalar>::Matrix& h_start, int steps) {
  using Matrix = typename ModelParams<Scalar>::Matrix;
  detail::require(params.arch.backbone == Backbone::rnn, "rnn_unroll on a non-RNN model");
  detail::require(steps >= 1, "rnn_unroll: steps must be >= 1");
  detail::require(h_start.rows() == params.arch.hidden_width, "rnn_unroll: hidden state size");
  const int K = params.arch.K;
  const int D = params.arch.D;
  const Index B = h_start.cols();

  ForwardPass<Scalar> pass;
  pass.hypotheses.resize(static_cast<Index>(K) * D * steps, B);
  if (params.arch.score_heads) {
    pass.step_scores.resize(static_cast<Index>(K) * steps, B);
    pass.scores.resize(K, B);
  }
  pass.head_states.resize(K);
  for (int k = 0; k < K; ++k) {
    const auto head_w = params.head_weights.middleRows(k * D, D);
    const auto head_b = params.head_bias.segment(k * D, D);
    Matrix h = h_start;
    pass.head_states[k].reserve(steps);
    for (int j = 0; j < steps; ++j) {
      pass.head_states[k].push_back(h);
      auto x = pass.hypotheses.middleRows((static_cast<Index>(k) * steps + j) * D, D);
      x.noalias() = head_w * h;
      x.colwise() += head_b;
      if (params.arch.score_heads) {
        Matrix logit = params.score_weights.row(k) * h;
        logit.array() += params.score_bias(k);
        pass.step_scores.row(static_cast<Index>(k) * steps + j) = sigmoid(logit);
      }
      if (j + 1 < steps) {
        Matrix z = params.input_weights * x;
        z.noalias() += params.recurrent_weights * h;
        z.colwise() += params.recurrent_bias;
        h = z.array().tanh();
      }
    }
    if (params.arch.score_heads) {
      pass.scores.row(k) =
          pass.step_scores.middleRows(static_cast<Index>(k) * steps, steps).colwise().mean();
    }
  }
  return pass;
}

template <typename Scalar>
ForwardPass<Scalar> forward_rnn(const ModelParams<Scalar>& params,
                                const typename ModelParams<Scalar>::Matrix& inputs) {
  using Matrix = typename ModelParams<Scalar>::Matrix;
  detail::require(params.arch.backbone == Backbone::rnn, "forward_rnn on a non-RNN model");
  check_inputs(params, inputs);
  const int D = params.arch.D;
  std::vector<Matrix> states;
  states.reserve(params.arch.context_length + 1);
  states.push_back(params.initial_state.replicate(1, inputs.cols()));
  for (int t = 0; t < params.arch.context_length; ++t) {
    Matrix z = params.input_weights * inputs.middleRows(t * D, D);
    z.noalias() += params.recurrent_weights * states.back();
    z.colwise() += params.recurrent_bias;
    states.push_back(z.array().tanh());
  }
  ForwardPass<Scalar> pass = rnn_unroll(params, states.back(), params.arch.horizon);
  pass.inputs = inputs;
  pass.encoder_states = std::move(states);
  return pass;
}

template <typename Scalar>
ForwardPass<Scalar> forward(const ModelParams<Scalar>& params,
                            const typename ModelParams<Scalar>::Matrix& inputs) {
  return params.arch.backbone == Backbone::mlp ? forward_mlp(params, inputs)
                                               : forward_rnn(params, inputs);
}

// ---------------------------------------------------------------------------
// Backward

namespace {

template <typename Scalar>
void backward_mlp(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                  const typename ModelParams<Scalar>::Matrix& d_hyp,
                  const typename ModelParams<Scalar>::Matrix& d_logits, ModelParams<Scalar>& g) {
  using Matrix = typename ModelParams<Scalar>::Matrix;
  const auto& top = pass.activations.back();
  g.head_weights.noalias() = d_hyp * top.transpose();
  g.head_bias = d_hyp.rowwise().sum();
  Matrix d_act = params.head_weights.transpose() * d_hyp;
  if (params.arch.score_heads) {
    g.score_weights.noalias() = d_logits * top.transpose();
    g.score_bias = d_logits.rowwise().sum();
    d_act.noalias() += params.score_weights.transpose() * d_logits;
  }
  for (std::size_t l = params.layer_weights.size(); l-- > 0;) {
    const auto& out = pass.activations[l + 1];
    Matrix dz = (out.array() > Scalar(0)).select(d_act, Scalar(0));
    g.layer_weights[l].noalias() = dz * pass.activations[l].transpose();
    g.layer_biases[l] = dz.rowwise().sum();
    if (l > 0) d_act.noalias() = params.layer_weights[l].transpose() * dz;
  }
}

template <typename Scalar>
void backward_rnn(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                  const typename ModelParams<Scalar>::Matrix& d_hyp,
                  const typename ModelParams<Scalar>::Matrix& d_logits, ModelParams<Scalar>& g) {
  using Matrix = typename ModelParams<Scalar>::Matrix;
  const int K = params.arch.K;
  const int D = params.arch.D;
  const int steps = static_cast<int>(pass.head_states.front().size());
  const Index H = params.arch.hidden_width;
  const Index B = pass.batch();
  const bool scored = params.arch.score_heads;

  Matrix d_encoded = Matrix::Zero(H, B);
  Matrix dz_next(H, B);
  for (int k = 0; k < K; ++k) {
    auto gw = g.head_weights.middleRows(k * D, D);
    auto gb = g.head_bias.segment(k * D, D);
    const auto head_w = params.head_weights.middleRows(k * D, D);
    bool has_next = false;
    for (int j = steps - 1; j >= 0; --j) {
      const Matrix& h = pass.head_states[k][j];
      const Index block = (static_cast<Index>(k) * steps + j) * D;
      const auto x = pass.hypotheses.middleRows(block, D);
      Matrix dx = d_hyp.middleRows(block, D);
      if (has_next) {
        // Step j's prediction and state fed the transition that produced state j + 1.
        dx.noalias() += params.input_weights.transpose() * dz_next;
        g.input_weights.noalias() += dz_next * x.transpose();
        g.recurrent_weights.noalias() += dz_next * h.transpose();
        g.recurrent_bias += dz_next.rowwise().sum();
      }
      gw.noalias() += dx * h.transpose();
      gb += dx.rowwise().sum();
      Matrix dh = head_w.transpose() * dx;
      if (scored) {
        const auto dl = d_logits.row(static_cast<Index>(k) * steps + j);
        g.score_weights.row(k).noalias() += dl * h.transpose();
        g.score_bias(k) += dl.sum();
        dh.noalias() += params.score_weights.row(k).transpose() * dl;
      }
      if (has_next) dh.noalias() += params.recurrent_weights.transpose() * dz_next;
      if (j > 0) {
        dz_next = dh.array() * (Scalar(1) - h.array().square());
        has_next = true;
      } else {
        d_encoded += dh;
      }
    }
  }

  Matrix dh = std::move(d_encoded);
  for (int t = params.arch.context_length; t >= 1; --t) {
    const Matrix& h = pass.encoder_states[t];
    Matrix dz = dh.array() * (Scalar(1) - h.array().square());
    g.input_weights.noalias() += dz * pass.inputs.middleRows((t - 1) * D, D).transpose();
    g.recurrent_weights.noalias() += dz * pass.encoder_states[t - 1].transpose();
    g.recurrent_bias += dz.rowwise().sum();
    dh.noalias() = params.recurrent_weights.transpose() * dz;
  }
  g.initial_state = dh.rowwise().sum();
}

}  // namespace

template <typename Scalar>
ModelParams<Scalar> backward(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                             const typename ModelParams<Scalar>::Matrix& d_hypotheses,
                             const typename ModelParams<Scalar>::Matrix& d_step_logits) {
  detail::require(d_hypotheses.rows() == pass.hypotheses.rows() &&
                      d_hypotheses.cols() == pass.hypotheses.cols(),
                  "backward: hypothesis gradient shape mismatch");
  if (params.arch.score_heads) {
    detail::require(d_step_logits.rows() == pass.step_scores.rows() &&
                        d_step_logits.cols() == pass.step_scores.cols(),
                    "backward: score gradient shape mismatch");
  }
  ModelParams<Scalar> g = params.zeros_like();
  if (params.arch.backbone == Backbone::mlp) {
    backward_mlp(params, pass, d_hypotheses, d_step_logits, g);
  } else {
    backward_rnn(params, pass, d_hypotheses, d_step_logits, g);
  }
  return g;
}

template <typename Scalar>
Forecast extract_forecast(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                          Index column, double dt, double t_start) {
  const int K = params.arch.K;
  const Index D = params.arch.D;
  const Index L = pass.hypotheses.rows() / (static_cast<Index>(K) * D);
  Forecast f;
  f.dt = dt;
  f.t_start = t_start;
  for (int k = 0; k < K; ++k) {
    f.hypotheses.emplace_back(pass.hypotheses.col(column)
                                  .segment(static_cast<Index>(k) * D * L, D * L)
                                  .reshaped(D, L)
                                  .template cast<double>());
    f.scores.push_back(params.arch.score_heads ? static_cast<double>(pass.scores(k, column))
                                               : 1.0 / K);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Instantiations

#define MCLQ_INSTANTIATE_NETWORK(S)                                                              \
  template struct ModelParams<S>;                                                              \
  template ModelParams<S> init_params<S>(const Architecture&, std::uint64_t);                  \
  template ModelParams<S>::Matrix pack_inputs<S>(const Architecture&,                          \
                                                 const std::vector<WindowPair>&);              \
  template ModelParams<S>::Matrix pack_contexts<S>(const Architecture&,                        \
                                                   const std::vector<Trajectory>&);            \
  template ModelParams<S>::Matrix pack_targets<S>(const Architecture&,                         \
                                                  const std::vector<WindowPair>&);             \
  template ForwardPass<S> forward_mlp<S>(const ModelParams<S>&, const ModelParams<S>::Matrix&); \
  template ModelParams<S>::Matrix rnn_encode<S>(const ModelParams<S>&,                         \
                                                const ModelParams<S>::Matrix&);                \
  template ForwardPass<S> rnn_unroll<S>(const ModelParams<S>&, const ModelParams<S>::Matrix&,  \
                                        int);                                                  \
  template ForwardPass<S> forward_rnn<S>(const ModelParams<S>&, const ModelParams<S>::Matrix&); \
  template ForwardPass<S> forward<S>(const ModelParams<S>&, const ModelParams<S>::Matrix&);     \
  template ModelParams<S> backward<S>(const ModelParams<S>&, const ForwardPass<S>&,             \
                                      const ModelParams<S>::Matrix&,                           \
                                      const ModelParams<S>::Matrix&);                          \
  template Forecast extract_forecast<S>(const ModelParams<S>&, const ForwardPass<S>&, Index,    \
                                        double, double);

MCLQ_INSTANTIATE_NETWORK(float)
MCLQ_INSTANTIATE_NETWORK(double)
#undef MCLQ_INSTANTIATE_NETWORK

template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace mclq
