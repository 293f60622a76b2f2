#pragma once

#include "mclq/error.hpp"
#include "mclq/forecast.hpp"
#include "mclq/network.hpp"
#include "mclq/processes.hpp"
#include "mclq/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mclq {

// ---------------------------------------------------------------------------
// Loss family

enum class LossVariant { wta, relaxed, annealed };

std::string to_string(LossVariant variant);
LossVariant parse_loss_variant(const std::string& name);

struct LossConfig {
  LossVariant variant = LossVariant::wta;
  double epsilon = 0.05;  // relaxed
  double t0 = 10.0;       // annealed: T(epoch) = t0 * rho^epoch
  double rho = 0.95;
  double t_lim = 5e-4;    // below this temperature the annealed variant is plain wta
  double beta = 0.0;      // score loss weight
  bool divide_by_horizon = false;
};

void validate(const LossConfig& cfg);

/// Squared error summed over t and d, optionally divided by the horizon.
double per_head_loss(const Eigen::MatrixXd& hypothesis, const Eigen::MatrixXd& target,
                     bool divide_by_horizon = false);

/// Index of the smallest loss; ties go to the lowest index. NaN is a NumericalError.
int winner(std::span<const double> per_head);

/// Annealing temperature at `epoch`.
double temperature(const LossConfig& cfg, int epoch);

/// exp(-L_k / T) / Z, shifted by the minimum loss before exponentiating.
std::vector<double> softmin_weights(std::span<const double> per_head, double temperature);

/// q_k for the configured variant. The annealed variant falls back to the one-hot
/// winner weights once the temperature drops below t_lim.
std::vector<double> head_weights(std::span<const double> per_head, const LossConfig& cfg,
                                 int epoch);

inline constexpr double kScoreClamp = 1e-7;

/// Binary cross-entropy BCE(p, q) with q clamped to [1e-7, 1 - 1e-7].
double bce(double p, double q);

/// sum_k sum_t BCE(1[k = winner], scores(k, t)); scores is K x steps.
double score_loss(const Eigen::MatrixXd& scores, int winner);

struct LossBreakdown {
  std::vector<double> per_head;
  int winner = 0;
  std::vector<double> weights;
  double wta_term = 0.0;    // sum_k q_k L_k
  double score_term = 0.0;  // unweighted by beta
  double total = 0.0;       // wta_term + beta * score_term
};

/// Breakdown from precomputed head losses and K x steps scores (scores may be empty).
LossBreakdown make_breakdown(std::vector<double> per_head, const Eigen::MatrixXd& scores,
                             const LossConfig& cfg, int epoch);

/// Loss of a batch and, optionally, its exact gradient.
struct BatchLoss {
  double total = 0.0;       // mean over windows
  double wta_term = 0.0;    // mean over windows
  double score_term = 0.0;  // mean over windows
  std::vector<LossBreakdown> windows;
};

/// Evaluates the mean compound loss over the columns of `inputs` / `targets`.
/// When `grad` is non-null it receives the gradient w.r.t. every parameter; head
/// weights and winners act as constants. When `frozen` is non-null, its weights and
/// winners are reused instead of being recomputed from the current losses.
template <typename Scalar>
BatchLoss loss_and_gradient(const ModelParams<Scalar>& params,
                            const typename ModelParams<Scalar>::Matrix& inputs,
                            const typename ModelParams<Scalar>::Matrix& targets,
                            const LossConfig& cfg, int epoch, ModelParams<Scalar>* grad = nullptr,
                            const std::vector<LossBreakdown>* frozen = nullptr);

/// Loss breakdown of a single window (unscaled).
LossBreakdown compound_loss(const WindowPair& window, const ModelParams<double>& params,
                            const LossConfig& cfg, int epoch);

/// Gradient of compound_loss w.r.t. every parameter.
ModelParams<double> loss_gradient(const WindowPair& window, const ModelParams<double>& params,
                                  const LossConfig& cfg, int epoch);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm threshold; 0 disables clipping
};

template <typename Scalar>
struct AdamState {
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> m, v;
  long step = 0;
};

/// One bias-corrected Adam update on flat parameter views. Gradients are rescaled
/// to norm clip_norm first when their global norm exceeds it. Returns the global
/// gradient norm before clipping.
template <typename Scalar>
double adam_step(std::span<Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>> params,
                 std::span<const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>> grads,
                 AdamState<Scalar>& state, const AdamConfig& cfg);

template <typename Scalar>
double adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads,
                 AdamState<Scalar>& state, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Scaling

enum class ScalerKind { none, mean, zscore };

std::string to_string(ScalerKind kind);
ScalerKind parse_scaler_kind(const std::string& name);

/// Per-dimension affine map x -> (x - offset) / scale fitted on a context.
struct Scaler {
  ScalerKind kind = ScalerKind::none;
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;

  static Scaler fit(const Trajectory& context, ScalerKind kind);

  Trajectory apply(const Trajectory& x) const;
  Trajectory invert(const Trajectory& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& values) const;
};

/// Scales context and target with statistics of the context.
WindowPair scale(const WindowPair& window, ScalerKind kind, Scaler* fitted = nullptr);
/// Maps every hypothesis back to the original units; scores are untouched.
Forecast unscale(const Forecast& forecast, const Scaler& scaler);

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  double lr = 1e-3;
  int batch = 4096;
  int iterations = 500;
  int steps_per_epoch = 1;
  std::uint64_t seed = 0;
  ScalerKind scaler = ScalerKind::none;
  double clip_norm = 10.0;  // 0 disables clipping
  bool lr_on_plateau = false;
  double plateau_factor = 0.5;
  int plateau_patience = 10;  // epochs without improvement of the epoch-mean loss
  double divergence_threshold = 1e12;
  int log_every = 0;  // 0 disables progress logging
};

void validate(const TrainConfig& cfg);

struct HistoryRow {
  int step = 0;
  int epoch = 0;
  double wta_term = 0.0;
  double score_term = 0.0;
  double temperature = 0.0;  // 0 for the wta and relaxed variants
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

template <typename Scalar>
struct FitResult {
  ModelParams<Scalar> params;
  std::vector<HistoryRow> history;
};

/// Thrown when the batch loss exceeds the divergence threshold or is not finite.
/// Carries the parameters from before the offending step.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, ModelParams<double> last_good,
                   std::vector<HistoryRow> history)
      : NumericalError(what), last_good(std::move(last_good)), history(std::move(history)) {}
  ModelParams<double> last_good;
  std::vector<HistoryRow> history;
};

/// Called after every step with the latest history row.
using StepCallback = std::function<void(const HistoryRow&)>;

/// Minibatch training: each step draws cfg.batch windows from `sampler`, scales them
/// window by window, averages the compound loss and takes one Adam step.
template <typename Scalar>
FitResult<Scalar> fit(const WindowSampler& sampler, ModelParams<Scalar> params,
                      const LossConfig& loss, const TrainConfig& cfg,
                      const StepCallback& on_step = {});

/// Forecasts for each context in original units, on a grid continuing the context's.
template <typename Scalar>
std::vector<Forecast> predict(const ModelParams<Scalar>& params,
                              const std::vector<Trajectory>& contexts, ScalerKind scaler);

}  // namespace mclq
