#pragma once

#include "mclq/trajectory.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mclq {

enum class ProcessKind { brownian_motion, brownian_bridge, ar };

std::string to_string(ProcessKind kind);
ProcessKind parse_process_kind(const std::string& name);

/// Parameters of a synthetic generator. Only the fields relevant to `kind` are read.
struct ProcessSpec {
  ProcessKind kind = ProcessKind::brownian_motion;
  // ar
  std::vector<double> phi;             ///< phi_1 .. phi_p
  double sigma = 0.0;                  ///< innovation and initial-value scale
  int warmup = 100;                    ///< leading steps discarded, must be >= p
  std::vector<double> initial_values;  ///< forces the first p values when non-empty
  // brownian_bridge
  double endpoint = 1.0;
  // brownian_motion
  double horizon = 1.0;

  int order() const { return static_cast<int>(phi.size()); }
};

/// Throws UsageError when a field is out of range for `kind`.
void validate(const ProcessSpec& spec);

/// Standard Brownian paths W_0 = 0 with Normal(0, dt) increments. D = 1, L = n_steps.
std::vector<Trajectory> sample_brownian(int n_steps, int n_paths, double dt, std::uint64_t seed);

/// Bridge paths endpoint + W_t - t W_1 on n_steps points covering [0, 1].
/// Both ends equal `endpoint` exactly.
std::vector<Trajectory> sample_bridge(int n_steps, int n_paths, double endpoint,
                                      std::uint64_t seed);

/// AR(p) paths: p initial values ~ Normal(0, sigma^2) (or spec.initial_values), then
/// X_t = sum_i phi_i X_{t-i} + eps_t. The first `warmup` values are dropped and
/// `length` values are returned on the normalized grid dt = 1 / length.
std::vector<Trajectory> sample_ar(const ProcessSpec& spec, int length, int n_paths,
                                  std::uint64_t seed);

/// Continues the AR recursion from the last p values of `context`.
std::vector<Trajectory> sample_ar_continuations(const Trajectory& context, const ProcessSpec& spec,
                                                int horizon, int n_paths, std::uint64_t seed);

/// Dispatches to the generator for spec.kind with n_steps samples per path.
std::vector<Trajectory> sample_paths(const ProcessSpec& spec, int n_steps, int n_paths,
                                     std::uint64_t seed);

struct WindowStrategy {
  enum class Kind { random, last } kind = Kind::last;
  std::uint64_t seed = 0;

  static WindowStrategy random(std::uint64_t seed) { return {Kind::random, seed}; }
  static WindowStrategy last() { return {Kind::last, 0}; }
};

/// Cuts one (context, target) window per path.
std::vector<WindowPair> make_windows(const std::vector<Trajectory>& paths, int ctx_len,
                                     int pred_len, WindowStrategy strategy);

/// Source of training windows: returns `count` windows, deterministic in `seed`.
using WindowSampler = std::function<std::vector<WindowPair>(int count, std::uint64_t seed)>;

/// Fresh paths from `spec` at every call, one random window per path.
WindowSampler process_window_sampler(ProcessSpec spec, int n_steps, int ctx_len, int pred_len);

}  // namespace mclq
