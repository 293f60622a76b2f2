#pragma once

#include "mclq/trajectory.hpp"

#include <vector>

namespace mclq {

/// K hypothesis trajectories with their confidence scores.
struct Forecast {
  std::vector<Eigen::MatrixXd> hypotheses;  ///< each D x Lp
  std::vector<double> scores;               ///< raw scores in [0, 1]
  double dt = 1.0;
  double t_start = 0.0;

  int size() const { return static_cast<int>(hypotheses.size()); }
  Index dim() const { return hypotheses.empty() ? 0 : hypotheses.front().rows(); }
  Index length() const { return hypotheses.empty() ? 0 : hypotheses.front().cols(); }

  /// Scores rescaled to sum to one; uniform when the scores sum to zero.
  std::vector<double> normalized_scores() const;
  /// Hypothesis k as a trajectory on the forecast grid.
  Trajectory hypothesis(int k) const { return Trajectory{hypotheses[k], dt, t_start}; }
};

void validate(const Forecast& forecast);

}  // namespace mclq
