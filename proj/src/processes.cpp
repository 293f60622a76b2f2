#include "mclq/processes.hpp"

#include "mclq/error.hpp"
#include "mclq/random.hpp"

#include <cmath>

namespace mclq {

std::string to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::brownian_motion: return "brownian_motion";
    case ProcessKind::brownian_bridge: return "brownian_bridge";
    case ProcessKind::ar: return "ar";
  }
  return "?";
}

ProcessKind parse_process_kind(const std::string& name) {
  if (name == "brownian_motion" || name == "brownian") return ProcessKind::brownian_motion;
  if (name == "brownian_bridge" || name == "bridge") return ProcessKind::brownian_bridge;
  if (name == "ar") return ProcessKind::ar;
  detail::fail("unknown process kind '" + name + "'");
}

void validate(const ProcessSpec& spec) {
  if (spec.kind == ProcessKind::ar) {
    detail::require(spec.order() >= 1, "AR process needs at least one coefficient");
    detail::require(spec.sigma >= 0.0 && std::isfinite(spec.sigma), "AR sigma must be >= 0");
    detail::require(spec.warmup >= spec.order(), "AR warmup must be >= p");
    detail::require(spec.initial_values.empty() ||
                        static_cast<int>(spec.initial_values.size()) == spec.order(),
                    "AR initial_values must hold exactly p values");
  }
  if (spec.kind == ProcessKind::brownian_motion) {
    detail::require(spec.horizon > 0.0, "Brownian horizon must be positive");
  }
  detail::require(std::isfinite(spec.endpoint), "bridge endpoint must be finite");
}

std::vector<Trajectory> sample_brownian(int n_steps, int n_paths, double dt, std::uint64_t seed) {
  detail::require(n_steps >= 1, "sample_brownian: n_steps must be >= 1");
  detail::require(n_paths >= 1, "sample_brownian: n_paths must be >= 1");
  detail::require(dt > 0.0, "sample_brownian: dt must be positive");
  const double step_scale = std::sqrt(dt);
  std::vector<Trajectory> paths;
  paths.reserve(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Eigen::MatrixXd values(1, n_steps);
    values(0, 0) = 0.0;
    for (int j = 1; j < n_steps; ++j) values(0, j) = values(0, j - 1) + step_scale * rng.normal();
    paths.push_back(Trajectory{std::move(values), dt, 0.0});
  }
  return paths;
}

std::vector<Trajectory> sample_bridge(int n_steps, int n_paths, double endpoint,
                                      std::uint64_t seed) {
  detail::require(n_steps >= 2, "sample_bridge: n_steps must be >= 2");
  const double dt = 1.0 / (n_steps - 1);
  auto paths = sample_brownian(n_steps, n_paths, dt, seed);
  for (auto& path : paths) {
    auto row = path.values.row(0);
    const double w_end = row(n_steps - 1);
    for (int j = 0; j < n_steps; ++j) {
      const double t = j * dt;
      row(j) = endpoint + (row(j) - t * w_end);
    }
    // Pin both ends exactly; t * W_1 at j = n - 1 can differ from W_1 by rounding.
    row(0) = endpoint;
    row(n_steps - 1) = endpoint;
  }
  return paths;
}

namespace {

// Runs the recursion in place over `series`, whose first `filled` entries are given.
void run_ar(const ProcessSpec& spec, std::vector<double>& series, int filled, Rng& rng) {
  const int p = spec.order();
  for (std::size_t t = filled; t < series.size(); ++t) {
    double x = 0.0;
    for (int i = 1; i <= p; ++i) x += spec.phi[i - 1] * series[t - i];
    series[t] = x + spec.sigma * rng.normal();
  }
}

}  // namespace

std::vector<Trajectory> sample_ar(const ProcessSpec& spec, int length, int n_paths,
                                  std::uint64_t seed) {
  detail::require(spec.kind == ProcessKind::ar, "sample_ar: spec.kind must be ar");
  validate(spec);
  detail::require(length >= 1, "sample_ar: length must be >= 1");
  detail::require(n_paths >= 1, "sample_ar: n_paths must be >= 1");
  const int p = spec.order();
  std::vector<Trajectory> paths;
  paths.reserve(n_paths);
  std::vector<double> series(static_cast<std::size_t>(spec.warmup) + length);
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (int j = 0; j < p; ++j) {
      series[j] = spec.initial_values.empty() ? spec.sigma * rng.normal() : spec.initial_values[j];
    }
    run_ar(spec, series, p, rng);
    Eigen::MatrixXd values(1, length);
    for (int j = 0; j < length; ++j) values(0, j) = series[spec.warmup + j];
    paths.push_back(Trajectory{std::move(values), 1.0 / length, 0.0});
  }
  return paths;
}

std::vector<Trajectory> sample_ar_continuations(const Trajectory& context, const ProcessSpec& spec,
                                                int horizon, int n_paths, std::uint64_t seed) {
  detail::require(spec.kind == ProcessKind::ar, "sample_ar_continuations: spec.kind must be ar");
  validate(spec);
  validate(context);
  detail::require(context.dim() == 1, "AR continuations need a scalar context");
  const int p = spec.order();
  detail::require(context.length() >= p, "context shorter than the AR order (" +
                                             std::to_string(context.length()) + " < " +
                                             std::to_string(p) + ")");
  detail::require(horizon >= 1, "continuation horizon must be >= 1");
  detail::require(n_paths >= 1, "n_paths must be >= 1");

  const Index lc = context.length();
  const double t0 = context.t_start + lc * context.dt;
  std::vector<Trajectory> paths;
  paths.reserve(n_paths);
  std::vector<double> series(static_cast<std::size_t>(p) + horizon);
  for (int i = 0; i < n_paths; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    for (int j = 0; j < p; ++j) series[j] = context.values(0, lc - p + j);
    run_ar(spec, series, p, rng);
    Eigen::MatrixXd values(1, horizon);
    for (int j = 0; j < horizon; ++j) values(0, j) = series[p + j];
    paths.push_back(Trajectory{std::move(values), context.dt, t0});
  }
  return paths;
}

std::vector<Trajectory> sample_paths(const ProcessSpec& spec, int n_steps, int n_paths,
                                     std::uint64_t seed) {
  validate(spec);
  switch (spec.kind) {
    case ProcessKind::brownian_motion:
      return sample_brownian(n_steps, n_paths, spec.horizon / n_steps, seed);
    case ProcessKind::brownian_bridge: return sample_bridge(n_steps, n_paths, spec.endpoint, seed);
    case ProcessKind::ar: return sample_ar(spec, n_steps, n_paths, seed);
  }
  detail::fail("unreachable process kind");
}

std::vector<WindowPair> make_windows(const std::vector<Trajectory>& paths, int ctx_len,
                                     int pred_len, WindowStrategy strategy) {
  detail::require(ctx_len >= 1 && pred_len >= 1, "window lengths must be >= 1");
  std::vector<WindowPair> windows;
  windows.reserve(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& path = paths[i];
    const Index span = ctx_len + pred_len;
    detail::require(path.length() >= span, "path " + std::to_string(i) + " has length " +
                                               std::to_string(path.length()) +
                                               ", window needs " + std::to_string(span));
    Index start = path.length() - span;
    if (strategy.kind == WindowStrategy::Kind::random) {
      Rng rng(derive_seed(strategy.seed, i));
      start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(path.length() - span + 1)));
    }
    windows.push_back(WindowPair{path.slice(start, ctx_len), path.slice(start + ctx_len, pred_len)});
  }
  return windows;
}

WindowSampler process_window_sampler(ProcessSpec spec, int n_steps, int ctx_len, int pred_len) {
  validate(spec);
  detail::require(n_steps >= ctx_len + pred_len, "paths of " + std::to_string(n_steps) +
                                                     " steps cannot hold a window of " +
                                                     std::to_string(ctx_len + pred_len));
  return [spec = std::move(spec), n_steps, ctx_len, pred_len](int count, std::uint64_t seed) {
    auto paths = sample_paths(spec, n_steps, count, derive_seed(seed, 0));
    return make_windows(paths, ctx_len, pred_len, WindowStrategy::random(derive_seed(seed, 1)));
  };
}

}  // namespace mclq
