#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mclq {

using Index = Eigen::Index;

/// A D x L sampled path on a uniform time grid. Column j holds the sample at
/// time t_start + j * dt.
struct Trajectory {
  Eigen::MatrixXd values;
  double dt = 1.0;
  double t_start = 0.0;

  Index dim() const { return values.rows(); }
  Index length() const { return values.cols(); }
  double time(Index j) const { return t_start + static_cast<double>(j) * dt; }
  double end_time() const { return time(length() - 1); }

  /// Columns [first, first + count) as a new trajectory with the matching start time.
  Trajectory slice(Index first, Index count) const;
};

/// Throws UsageError unless D >= 1, L >= 1, dt > 0 and every entry is finite.
void validate(const Trajectory& traj);

/// Supervision unit: a context segment immediately followed by a target segment.
struct WindowPair {
  Trajectory context;
  Trajectory target;
};

/// Throws UsageError if the pair breaks shape or contiguity invariants.
void validate(const WindowPair& pair);

}  // namespace mclq
