#include "mclq/pipeline.hpp"

#include "mclq/error.hpp"
#include "mclq/random.hpp"

namespace mclq {

Codebook bm_window_codebook(const std::vector<int>& levels, int horizon, double dt) {
  detail::require(horizon >= 1 && dt > 0.0, "bm_window_codebook: invalid grid");
  KLSpec spec;
  spec.process = ProcessKind::brownian_motion;
  spec.levels_per_coord = levels;
  spec.grid = uniform_grid(horizon, dt, dt);
  spec.horizon = horizon * dt;
  Codebook cb = product_codebook(spec);
  cb.dt = dt;
  return cb;
}

Codebook bridge_path_codebook(const std::vector<int>& levels, int n_steps, double endpoint) {
  detail::require(n_steps >= 2, "bridge_path_codebook: need at least two grid points");
  KLSpec spec;
  spec.process = ProcessKind::brownian_bridge;
  spec.levels_per_coord = levels;
  const double dt = 1.0 / (n_steps - 1);
  spec.grid = uniform_grid(n_steps, 0.0, dt);
  spec.horizon = 1.0;
  Codebook cb = product_codebook(spec);
  cb.dt = dt;
  for (auto& c : cb.codevectors) c.array() += endpoint;
  return cb;
}

std::vector<Forecast> codebook_forecasts(const Codebook& codebook, bool anchored,
                                         const std::vector<WindowPair>& windows) {
  std::vector<Forecast> out;
  out.reserve(windows.size());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(codebook.dim());
  for (const auto& w : windows) {
    const Eigen::VectorXd offset = anchored ? Eigen::VectorXd(w.context.values.rightCols(1)) : zero;
    out.push_back(codebook_forecast(codebook, offset, w.target.t_start));
  }
  return out;
}

std::vector<WindowPair> sample_windows(const ProcessSpec& spec, int n_steps, int ctx_len,
                                       int pred_len, int count, std::uint64_t seed) {
  return process_window_sampler(spec, n_steps, ctx_len, pred_len)(count, seed);
}

std::vector<WindowPair> sample_full_paths(const ProcessSpec& spec, int n_steps, int count,
                                          std::uint64_t seed) {
  std::vector<WindowPair> out;
  for (const auto& p : sample_paths(spec, n_steps, count, seed)) {
    out.push_back({p.slice(0, 1), p});
  }
  return out;
}

std::vector<WindowPair> ConditionalEnsemble::windows() const {
  std::vector<WindowPair> out;
  out.reserve(continuations.size());
  for (const auto& c : continuations) out.push_back({context, c});
  return out;
}

ConditionalEnsemble ar_ensemble(const ProcessSpec& spec, int n_steps, int ctx_len, int horizon,
                                int n_samples, std::uint64_t seed) {
  detail::require(spec.kind == ProcessKind::ar, "ar_ensemble: the process must be ar");
  detail::require(ctx_len >= 1 && ctx_len <= n_steps, "ar_ensemble: context longer than the path");
  const Trajectory path = sample_ar(spec, n_steps, 1, derive_seed(seed, 0)).front();
  ConditionalEnsemble e;
  e.context = path.slice(n_steps - ctx_len, ctx_len);
  e.continuations = sample_ar_continuations(e.context, spec, horizon, n_samples, derive_seed(seed, 1));
  return e;
}

EvalBatch make_batch(std::vector<WindowPair> windows, std::vector<Forecast> forecasts) {
  EvalBatch b{std::move(windows), std::move(forecasts)};
  validate(b);
  return b;
}

}  // namespace mclq
