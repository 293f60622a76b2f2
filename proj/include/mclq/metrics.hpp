#pragma once

#include "mclq/forecast.hpp"
#include "mclq/oracles.hpp"
#include "mclq/trajectory.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mclq {

/// Windows paired with the forecasts made for them; forecast i targets pairs[i].target.
struct EvalBatch {
  std::vector<WindowPair> pairs;
  std::vector<Forecast> forecasts;

  std::size_t size() const { return pairs.size(); }
};

void validate(const EvalBatch& batch);

/// sqrt(sum_d mean_t (x - y)^2)
double trajectory_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// Mean over windows of the distance from the target to its nearest hypothesis.
double distortion(const EvalBatch& batch);

/// Score-weighted (normalized scores) or uniform average of the hypotheses.
Eigen::MatrixXd conditional_mean(const Forecast& forecast, bool use_scores);

/// RMSE between the dimension-summed target and dimension-summed conditional mean,
/// pooled over windows and time steps.
double rmse(const EvalBatch& batch, bool use_scores);

/// Quantile levels 0.05, 0.10, ..., 0.95.
std::array<double, 19> crps_levels();

/// Smallest value whose cumulative weight reaches q (weights need not be sorted by value).
double weighted_lower_quantile(std::span<const double> values, std::span<const double> weights,
                               double q);

/// Quantile loss 2 (Q - a) (1[a <= Q] - q) of the estimate Q for the observation a.
double pinball(double a, double Q, double q);

/// Dimension-summed CRPS approximated by the mean pinball loss over crps_levels(),
/// normalized by the summed absolute aggregated target over the whole batch.
double crps_sum(const EvalBatch& batch, bool use_scores);

/// sum_t ||x_{t+1} - x_t||_2 of a D x L trajectory.
double trajectory_tv(const Eigen::MatrixXd& x);

/// K independent categorical draws in proportion to the normalized scores.
std::vector<int> resample_by_scores(const Forecast& forecast, int n_draws, std::uint64_t seed);

/// Mean over windows of the mean TV of the hypotheses. With use_scores, the K
/// hypotheses of window i are first resampled by score with derive_seed(seed, i).
double total_variation(const EvalBatch& batch, bool use_scores, std::uint64_t seed = 0);

struct MetricsReport {
  double distortion = 0.0;
  double rmse = 0.0;
  double crps_sum = 0.0;
  double total_variation = 0.0;
};

/// All four metrics. TV is reported as 0 for a horizon of one step.
MetricsReport evaluate(const EvalBatch& batch, bool use_scores, std::uint64_t seed = 0);

/// Codebook as a forecast: hypotheses are the codevectors plus `offset` per
/// dimension, scores are the weights (uniform when absent).
Forecast codebook_forecast(const Codebook& codebook, const Eigen::VectorXd& offset,
                           double t_start = 0.0);

}  // namespace mclq
