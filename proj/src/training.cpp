#include "mclq/training.hpp"

#include "mclq/log.hpp"
#include "mclq/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mclq {

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::wta: return "wta";
    case LossVariant::relaxed: return "relaxed";
    case LossVariant::annealed: return "annealed";
  }
  return "?";
}

LossVariant parse_loss_variant(const std::string& name) {
  if (name == "wta") return LossVariant::wta;
  if (name == "relaxed") return LossVariant::relaxed;
  if (name == "annealed") return LossVariant::annealed;
  detail::fail("unknown loss variant '" + name + "' (expected wta, relaxed or annealed)");
}

void validate(const LossConfig& cfg) {
  detail::require(cfg.epsilon >= 0.0 && cfg.epsilon < 1.0, "loss: epsilon must lie in [0, 1)");
  detail::require(cfg.t0 > 0.0, "loss: t0 must be positive");
  detail::require(cfg.rho > 0.0 && cfg.rho < 1.0, "loss: rho must lie in (0, 1)");
  detail::require(cfg.t_lim > 0.0, "loss: t_lim must be positive");
  detail::require(cfg.beta >= 0.0, "loss: beta must be non-negative");
}

double per_head_loss(const Eigen::MatrixXd& hypothesis, const Eigen::MatrixXd& target,
                     bool divide_by_horizon) {
  detail::require(hypothesis.rows() == target.rows() && hypothesis.cols() == target.cols(),
                  "per_head_loss: hypothesis and target shapes differ");
  const double sse = (hypothesis - target).squaredNorm();
  return divide_by_horizon ? sse / static_cast<double>(target.cols()) : sse;
}

int winner(std::span<const double> per_head) {
  detail::require(!per_head.empty(), "winner: no losses");
  int best = 0;
  for (std::size_t k = 0; k < per_head.size(); ++k) {
    if (std::isnan(per_head[k])) {
      throw NumericalError("winner: loss of head " + std::to_string(k) + " is NaN");
    }
    if (per_head[k] < per_head[best]) best = static_cast<int>(k);
  }
  return best;
}

double temperature(const LossConfig& cfg, int epoch) {
  return cfg.t0 * std::pow(cfg.rho, static_cast<double>(epoch));
}

std::vector<double> softmin_weights(std::span<const double> per_head, double temp) {
  detail::require(temp > 0.0, "softmin: temperature must be positive");
  const double lowest = per_head[winner(per_head)];
  if (!std::isfinite(lowest)) throw NumericalError("softmin: every head loss is infinite");
  std::vector<double> q(per_head.size());
  double z = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    q[k] = std::exp(-(per_head[k] - lowest) / temp);
    z += q[k];
  }
  for (double& v : q) v /= z;
  return q;
}

namespace {

std::vector<double> one_hot(std::size_t K, int at) {
  std::vector<double> q(K, 0.0);
  q[at] = 1.0;
  return q;
}

}  // namespace

std::vector<double> head_weights(std::span<const double> per_head, const LossConfig& cfg,
                                 int epoch) {
  const int k_star = winner(per_head);
  if (!std::isfinite(per_head[k_star])) {
    throw NumericalError("head_weights: every head loss is infinite");
  }
  const std::size_t K = per_head.size();
  switch (cfg.variant) {
    case LossVariant::wta:
      return one_hot(K, k_star);
    case LossVariant::relaxed: {
      if (K == 1) return {1.0};
      std::vector<double> q(K, cfg.epsilon / static_cast<double>(K - 1));
      q[k_star] = 1.0 - cfg.epsilon;
      return q;
    }
    case LossVariant::annealed: {
      const double T = temperature(cfg, epoch);
      if (T < cfg.t_lim) return one_hot(K, k_star);
      return softmin_weights(per_head, T);
    }
  }
  return one_hot(K, k_star);
}

double bce(double p, double q) {
  q = std::clamp(q, kScoreClamp, 1.0 - kScoreClamp);
  return -p * std::log(q) - (1.0 - p) * std::log1p(-q);
}

double score_loss(const Eigen::MatrixXd& scores, int winner_index) {
  double total = 0.0;
  for (Index k = 0; k < scores.rows(); ++k) {
    const double y = k == winner_index ? 1.0 : 0.0;
    for (Index t = 0; t < scores.cols(); ++t) total += bce(y, scores(k, t));
  }
  return total;
}

LossBreakdown make_breakdown(std::vector<double> per_head, const Eigen::MatrixXd& scores,
                             const LossConfig& cfg, int epoch) {
  LossBreakdown b;
  b.winner = winner(per_head);
  b.weights = head_weights(per_head, cfg, epoch);
  b.per_head = std::move(per_head);
  for (std::size_t k = 0; k < b.per_head.size(); ++k) b.wta_term += b.weights[k] * b.per_head[k];
  if (scores.size() > 0) b.score_term = score_loss(scores, b.winner);
  b.total = b.wta_term + cfg.beta * b.score_term;
  return b;
}

template <typename Scalar>
BatchLoss loss_and_gradient(const ModelParams<Scalar>& params,
                            const typename ModelParams<Scalar>::Matrix& inputs,
                            const typename ModelParams<Scalar>::Matrix& targets,
                            const LossConfig& cfg, int epoch, ModelParams<Scalar>* grad,
                            const std::vector<LossBreakdown>* frozen) {
  using Matrix = typename ModelParams<Scalar>::Matrix;
  const Architecture& arch = params.arch;
  const Index K = arch.K;
  const Index block = static_cast<Index>(arch.D) * arch.horizon;
  const Index B = inputs.cols();
  detail::require(B >= 1, "loss: empty batch");
  detail::require(targets.rows() == block && targets.cols() == B,
                  "loss: targets must be (D * Lp) x batch");
  detail::require(!frozen || static_cast<Index>(frozen->size()) == B,
                  "loss: frozen assignment has the wrong batch size");

  const ForwardPass<Scalar> pass = forward(params, inputs);
  const Index steps = arch.backbone == Backbone::mlp ? 1 : arch.horizon;
  const double norm = cfg.divide_by_horizon ? static_cast<double>(arch.horizon) : 1.0;

  BatchLoss out;
  out.windows.reserve(B);
  Matrix d_hyp, d_logits;
  if (grad) {
    d_hyp.setZero(pass.hypotheses.rows(), B);
    if (arch.score_heads) d_logits.setZero(pass.step_scores.rows(), B);
  }

  Eigen::MatrixXd scores;
  for (Index i = 0; i < B; ++i) {
    std::vector<double> per_head(K);
    for (Index k = 0; k < K; ++k) {
      const auto residual =
          (pass.hypotheses.col(i).segment(k * block, block) - targets.col(i)).template cast<double>();
      per_head[k] = residual.squaredNorm() / norm;
    }
    if (arch.score_heads) {
      scores = pass.step_scores.col(i).template cast<double>().reshaped(steps, K).transpose();
    } else {
      scores.resize(0, 0);
    }

    LossBreakdown b;
    if (frozen) {
      b = (*frozen)[i];
      b.per_head = per_head;
      b.wta_term = 0.0;
      for (Index k = 0; k < K; ++k) b.wta_term += b.weights[k] * per_head[k];
      b.score_term = scores.size() > 0 ? score_loss(scores, b.winner) : 0.0;
      b.total = b.wta_term + cfg.beta * b.score_term;
    } else {
      b = make_breakdown(std::move(per_head), scores, cfg, epoch);
    }

    if (grad) {
      const double scale = 2.0 / (norm * static_cast<double>(B));
      for (Index k = 0; k < K; ++k) {
        if (b.weights[k] == 0.0) continue;
        d_hyp.col(i).segment(k * block, block) =
            static_cast<Scalar>(scale * b.weights[k]) *
            (pass.hypotheses.col(i).segment(k * block, block) - targets.col(i));
      }
      if (arch.score_heads && cfg.beta > 0.0) {
        const double w = cfg.beta / static_cast<double>(B);
        for (Index k = 0; k < K; ++k) {
          const double y = k == b.winner ? 1.0 : 0.0;
          for (Index t = 0; t < steps; ++t) {
            const double s = scores(k, t);
            // The clamp is flat outside [1e-7, 1 - 1e-7], so no gradient flows there.
            if (s < kScoreClamp || s > 1.0 - kScoreClamp) continue;
            d_logits(k * steps + t, i) = static_cast<Scalar>(w * (s - y));
          }
        }
      }
    }

    out.total += b.total;
    out.wta_term += b.wta_term;
    out.score_term += b.score_term;
    out.windows.push_back(std::move(b));
  }
  out.total /= static_cast<double>(B);
  out.wta_term /= static_cast<double>(B);
  out.score_term /= static_cast<double>(B);

  if (grad) {
    *grad = backward(params, pass, d_hyp, d_logits);
    for (const auto& [name, t] : grad->tensors()) {
      if (!t.allFinite()) throw NumericalError("non-finite gradient in tensor " + name);
    }
  }
  return out;
}

namespace {

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> pack_single(const Architecture& arch,
                                                        const WindowPair& window) {
  const std::vector<WindowPair> one{window};
  return {pack_inputs<double>(arch, one), pack_targets<double>(arch, one)};
}

}  // namespace

LossBreakdown compound_loss(const WindowPair& window, const ModelParams<double>& params,
                            const LossConfig& cfg, int epoch) {
  const auto [x, y] = pack_single(params.arch, window);
  return loss_and_gradient(params, x, y, cfg, epoch).windows.front();
}

ModelParams<double> loss_gradient(const WindowPair& window, const ModelParams<double>& params,
                                  const LossConfig& cfg, int epoch) {
  const auto [x, y] = pack_single(params.arch, window);
  ModelParams<double> g;
  loss_and_gradient(params, x, y, cfg, epoch, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Scalar>
double adam_step(std::span<Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>> params,
                 std::span<const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>> grads,
                 AdamState<Scalar>& state, const AdamConfig& cfg) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  detail::require(params.size() == grads.size(), "adam: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Vector::Zero(p.size()));
      state.v.push_back(Vector::Zero(p.size()));
    }
  }
  detail::require(state.m.size() == params.size(), "adam: state does not match the parameters");

  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    detail::require(grads[i].size() == params[i].size(), "adam: tensor size mismatch");
    sq += grads[i].template cast<double>().squaredNorm();
  }
  const double gnorm = std::sqrt(sq);
  const double clip = cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm ? cfg.clip_norm / gnorm : 1.0;

  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto step_size = static_cast<Scalar>(cfg.lr / c1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vector g = grads[i] * static_cast<Scalar>(clip);
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseAbs2();
    params[i].array() -=
        step_size * state.m[i].array() / (state.v[i].array().sqrt() * inv_sqrt_c2 + eps);
  }
  return gnorm;
}

template <typename Scalar>
double adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads,
                 AdamState<Scalar>& state, const AdamConfig& cfg) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::vector<Eigen::Map<Vector>> p;
  std::vector<Eigen::Map<const Vector>> g;
  for (auto& [name, t] : params.tensors()) p.push_back(t);
  for (const auto& [name, t] : grads.tensors()) g.push_back(t);
  return adam_step<Scalar>(std::span(p), std::span<const Eigen::Map<const Vector>>(g), state, cfg);
}

// ---------------------------------------------------------------------------
// Scaling

std::string to_string(ScalerKind kind) {
  switch (kind) {
    case ScalerKind::none: return "none";
    case ScalerKind::mean: return "mean";
    case ScalerKind::zscore: return "zscore";
  }
  return "?";
}

ScalerKind parse_scaler_kind(const std::string& name) {
  if (name == "none") return ScalerKind::none;
  if (name == "mean") return ScalerKind::mean;
  if (name == "zscore") return ScalerKind::zscore;
  detail::fail("unknown scaler '" + name + "' (expected none, mean or zscore)");
}

Scaler Scaler::fit(const Trajectory& context, ScalerKind kind) {
  detail::require(context.length() >= 1 && context.dim() >= 1, "scaler: empty context");
  Scaler s;
  s.kind = kind;
  const Index D = context.dim();
  s.offset = Eigen::VectorXd::Zero(D);
  s.scale = Eigen::VectorXd::Ones(D);
  const Eigen::VectorXd mean = context.values.rowwise().mean();
  if (kind == ScalerKind::mean) {
    s.scale = mean.unaryExpr([](double m) { return std::abs(m) < 1e-8 ? 1.0 : m; });
  } else if (kind == ScalerKind::zscore) {
    s.offset = mean;
    const Eigen::VectorXd var =
        (context.values.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(context.length());
    s.scale = var.cwiseSqrt().cwiseMax(1e-8);
  }
  return s;
}

Trajectory Scaler::apply(const Trajectory& x) const {
  detail::require(x.dim() == offset.size(), "scaler: dimension mismatch");
  Trajectory out = x;
  out.values = ((x.values.colwise() - offset).array().colwise() / scale.array()).matrix();
  return out;
}

Eigen::MatrixXd Scaler::invert(const Eigen::MatrixXd& values) const {
  detail::require(values.rows() == offset.size(), "scaler: dimension mismatch");
  return ((values.array().colwise() * scale.array()).matrix().colwise() + offset);
}

Trajectory Scaler::invert(const Trajectory& x) const {
  Trajectory out = x;
  out.values = invert(x.values);
  return out;
}

WindowPair scale(const WindowPair& window, ScalerKind kind, Scaler* fitted) {
  const Scaler s = Scaler::fit(window.context, kind);
  if (fitted) *fitted = s;
  return {s.apply(window.context), s.apply(window.target)};
}

Forecast unscale(const Forecast& forecast, const Scaler& scaler) {
  Forecast out = forecast;
  for (auto& h : out.hypotheses) h = scaler.invert(h);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

void validate(const TrainConfig& cfg) {
  detail::require(cfg.lr > 0.0, "train: lr must be positive");
  detail::require(cfg.batch >= 1, "train: batch must be >= 1");
  detail::require(cfg.iterations >= 1, "train: iterations must be >= 1");
  detail::require(cfg.steps_per_epoch >= 1, "train: steps_per_epoch must be >= 1");
  detail::require(cfg.clip_norm >= 0.0, "train: clip_norm must be non-negative");
  detail::require(cfg.plateau_factor > 0.0 && cfg.plateau_factor < 1.0,
                  "train: plateau_factor must lie in (0, 1)");
  detail::require(cfg.plateau_patience >= 0, "train: plateau_patience must be non-negative");
  detail::require(cfg.divergence_threshold > 0.0, "train: divergence_threshold must be positive");
}

template <typename Scalar>
FitResult<Scalar> fit(const WindowSampler& sampler, ModelParams<Scalar> params,
                      const LossConfig& loss, const TrainConfig& cfg, const StepCallback& on_step) {
  validate(loss);
  validate(cfg);
  FitResult<Scalar> result;
  AdamState<Scalar> state;
  AdamConfig adam;
  adam.lr = cfg.lr;
  adam.clip_norm = cfg.clip_norm;

  double best_epoch_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  double epoch_sum = 0.0;

  for (int step = 0; step < cfg.iterations; ++step) {
    const int epoch = step / cfg.steps_per_epoch;
    std::vector<WindowPair> windows = sampler(cfg.batch, derive_seed(cfg.seed, step));
    if (cfg.scaler != ScalerKind::none) {
      for (auto& w : windows) w = scale(w, cfg.scaler);
    }
    const auto inputs = pack_inputs<Scalar>(params.arch, windows);
    const auto targets = pack_targets<Scalar>(params.arch, windows);

    ModelParams<Scalar> grads;
    BatchLoss batch;
    try {
      batch = loss_and_gradient(params, inputs, targets, loss, epoch, &grads);
    } catch (const NumericalError& e) {
      throw TrainingDiverged("step " + std::to_string(step) + ": " + e.what(),
                             params.template cast<double>(), result.history);
    }
    if (!std::isfinite(batch.total) || batch.total > cfg.divergence_threshold) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << " (loss " << batch.total << ")";
      throw TrainingDiverged(msg.str(), params.template cast<double>(), result.history);
    }

    HistoryRow row;
    row.step = step;
    row.epoch = epoch;
    row.wta_term = batch.wta_term;
    row.score_term = batch.score_term;
    row.temperature = loss.variant == LossVariant::annealed ? temperature(loss, epoch) : 0.0;
    row.total = batch.total;
    row.lr = adam.lr;
    row.grad_norm = adam_step(params, grads, state, adam);
    result.history.push_back(row);
    if (on_step) on_step(row);
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.iterations)) {
      std::ostringstream msg;
      msg << "step " << step << " loss " << row.total << " wta " << row.wta_term << " score "
          << row.score_term << " lr " << row.lr;
      log(LogLevel::info, msg.str());
    }

    epoch_sum += batch.total;
    if ((step + 1) % cfg.steps_per_epoch == 0) {
      const double epoch_loss = epoch_sum / cfg.steps_per_epoch;
      epoch_sum = 0.0;
      if (cfg.lr_on_plateau) {
        if (epoch_loss < best_epoch_loss) {
          best_epoch_loss = epoch_loss;
          stale_epochs = 0;
        } else if (++stale_epochs > cfg.plateau_patience) {
          adam.lr *= cfg.plateau_factor;
          stale_epochs = 0;
          log(LogLevel::debug, "plateau: lr reduced to " + std::to_string(adam.lr));
        }
      }
    }
  }
  result.params = std::move(params);
  return result;
}

template <typename Scalar>
std::vector<Forecast> predict(const ModelParams<Scalar>& params,
                              const std::vector<Trajectory>& contexts, ScalerKind scaler) {
  constexpr std::size_t chunk = 1024;
  std::vector<Forecast> out;
  out.reserve(contexts.size());
  for (std::size_t first = 0; first < contexts.size(); first += chunk) {
    const std::size_t last = std::min(contexts.size(), first + chunk);
    std::vector<Trajectory> scaled;
    std::vector<Scaler> scalers;
    for (std::size_t i = first; i < last; ++i) {
      scalers.push_back(Scaler::fit(contexts[i], scaler));
      scaled.push_back(scalers.back().apply(contexts[i]));
    }
    const auto pass = forward(params, pack_contexts<Scalar>(params.arch, scaled));
    for (std::size_t i = first; i < last; ++i) {
      const Trajectory& c = contexts[i];
      Forecast f = extract_forecast(params, pass, static_cast<Index>(i - first), c.dt,
                                    c.t_start + static_cast<double>(c.length()) * c.dt);
      out.push_back(unscale(f, scalers[i - first]));
    }
  }
  return out;
}

#define MCLQ_INSTANTIATE_TRAINING(S)                                                            \
  template BatchLoss loss_and_gradient<S>(const ModelParams<S>&, const ModelParams<S>::Matrix&, \
                                          const ModelParams<S>::Matrix&, const LossConfig&, int, \
                                          ModelParams<S>*, const std::vector<LossBreakdown>*);  \
  template double adam_step<S>(                                                                 \
      std::span<Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>>,                               \
      std::span<const Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>>, AdamState<S>&,    \
      const AdamConfig&);                                                                       \
  template double adam_step<S>(ModelParams<S>&, const ModelParams<S>&, AdamState<S>&,            \
                               const AdamConfig&);                                              \
  template FitResult<S> fit<S>(const WindowSampler&, ModelParams<S>, const LossConfig&,          \
                               const TrainConfig&, const StepCallback&);                        \
  template std::vector<Forecast> predict<S>(const ModelParams<S>&,                              \
                                            const std::vector<Trajectory>&, ScalerKind);

MCLQ_INSTANTIATE_TRAINING(float)
MCLQ_INSTANTIATE_TRAINING(double)
#undef MCLQ_INSTANTIATE_TRAINING

}  // namespace mclq
