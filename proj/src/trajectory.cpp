#include "mclq/trajectory.hpp"

#include "mclq/error.hpp"

#include <cmath>
#include <string>

namespace mclq {

Trajectory Trajectory::slice(Index first, Index count) const {
  detail::require(first >= 0 && count >= 1 && first + count <= length(),
                  "trajectory slice [" + std::to_string(first) + ", " +
                      std::to_string(first + count) + ") out of range for length " +
                      std::to_string(length()));
  return Trajectory{values.middleCols(first, count), dt, time(first)};
}

void validate(const Trajectory& traj) {
  detail::require(traj.dim() >= 1 && traj.length() >= 1, "trajectory must be at least 1 x 1");
  detail::require(traj.dt > 0.0 && std::isfinite(traj.dt), "trajectory dt must be positive");
  detail::require(traj.values.allFinite(), "trajectory contains non-finite values");
}

void validate(const WindowPair& pair) {
  validate(pair.context);
  validate(pair.target);
  detail::require(pair.context.dim() == pair.target.dim(), "context and target dimension differ");
  detail::require(pair.context.dt == pair.target.dt, "context and target dt differ");
  const double expected = pair.context.t_start + pair.context.length() * pair.context.dt;
  detail::require(std::abs(pair.target.t_start - expected) <= 1e-9 * (1.0 + std::abs(expected)),
                  "target does not start right after the context");
}

}  // namespace mclq
