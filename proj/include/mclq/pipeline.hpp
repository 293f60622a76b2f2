#pragma once

#include "mclq/forecast.hpp"
#include "mclq/metrics.hpp"
#include "mclq/oracles.hpp"
#include "mclq/processes.hpp"
#include "mclq/trajectory.hpp"

#include <cstdint>
#include <vector>

namespace mclq {

// Building blocks shared by the command-line tool and the experiment suites.

/// Stream ids passed to derive_seed(seed, id) by each stage of a run.
namespace stream {
inline constexpr std::uint64_t synth = 11;
inline constexpr std::uint64_t train_init = 21;
inline constexpr std::uint64_t train_data = 22;
inline constexpr std::uint64_t oracle_eval = 31;
inline constexpr std::uint64_t oracle_context = 32;
inline constexpr std::uint64_t oracle_ensemble = 33;
inline constexpr std::uint64_t oracle_init = 34;
inline constexpr std::uint64_t eval_windows = 41;
inline constexpr std::uint64_t eval_resample = 42;
}  // namespace stream

/// KL product codebook of Brownian increments over a target window: codevector
/// values at times dt, 2 dt, ..., horizon * dt after the last observation. Add the
/// last context value to obtain the conditional quantizer.
Codebook bm_window_codebook(const std::vector<int>& levels, int horizon, double dt);

/// KL product codebook of whole bridge paths on n_steps points over [0, 1], pinned at `endpoint`.
Codebook bridge_path_codebook(const std::vector<int>& levels, int n_steps, double endpoint);

/// One forecast per window. With `anchored`, codevectors are shifted by the last
/// context value of each window.
std::vector<Forecast> codebook_forecasts(const Codebook& codebook, bool anchored,
                                         const std::vector<WindowPair>& windows);

/// `count` fresh random windows of the process.
std::vector<WindowPair> sample_windows(const ProcessSpec& spec, int n_steps, int ctx_len,
                                       int pred_len, int count, std::uint64_t seed);

/// Whole fresh paths as windows whose context is the first sample of each path.
std::vector<WindowPair> sample_full_paths(const ProcessSpec& spec, int n_steps, int count,
                                          std::uint64_t seed);

/// An AR context and many simulated continuations of it.
struct ConditionalEnsemble {
  Trajectory context;
  std::vector<Trajectory> continuations;

  std::vector<WindowPair> windows() const;
};

/// Context: the last ctx_len values of one AR path of n_steps samples drawn with
/// derive_seed(seed, 0). Continuations use derive_seed(seed, 1).
ConditionalEnsemble ar_ensemble(const ProcessSpec& spec, int n_steps, int ctx_len, int horizon,
                                int n_samples, std::uint64_t seed);

EvalBatch make_batch(std::vector<WindowPair> windows, std::vector<Forecast> forecasts);

}  // namespace mclq
