#include "mclq/metrics.hpp"

#include "mclq/error.hpp"
#include "mclq/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mclq {

void validate(const EvalBatch& batch) {
  detail::require(!batch.pairs.empty(), "eval batch is empty");
  detail::require(batch.pairs.size() == batch.forecasts.size(),
                  "eval batch: one forecast per window is required");
  const Index D = batch.pairs.front().target.dim();
  const Index L = batch.pairs.front().target.length();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& target = batch.pairs[i].target;
    const auto& f = batch.forecasts[i];
    validate(f);
    if (target.dim() != D || target.length() != L || f.dim() != D || f.length() != L) {
      detail::fail("eval batch: window " + std::to_string(i) + " expected " + std::to_string(D) +
                   " x " + std::to_string(L) + ", got target " + std::to_string(target.dim()) +
                   " x " + std::to_string(target.length()) + " and forecast " +
                   std::to_string(f.dim()) + " x " + std::to_string(f.length()));
    }
  }
}

double trajectory_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return std::sqrt((x - y).rowwise().squaredNorm().sum() / static_cast<double>(x.cols()));
}

double distortion(const EvalBatch& batch) {
  validate(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& target = batch.pairs[i].target.values;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : batch.forecasts[i].hypotheses) best = std::min(best, trajectory_distance(h, target));
    total += best;
  }
  return total / static_cast<double>(batch.size());
}

namespace {

std::vector<double> mixture_weights(const Forecast& f, bool use_scores) {
  if (use_scores) return f.normalized_scores();
  return std::vector<double>(f.hypotheses.size(), 1.0 / static_cast<double>(f.hypotheses.size()));
}

}  // namespace

Eigen::MatrixXd conditional_mean(const Forecast& forecast, bool use_scores) {
  validate(forecast);
  const auto w = mixture_weights(forecast, use_scores);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(forecast.dim(), forecast.length());
  for (std::size_t k = 0; k < w.size(); ++k) mean += w[k] * forecast.hypotheses[k];
  return mean;
}

double rmse(const EvalBatch& batch, bool use_scores) {
  validate(batch);
  double sq = 0.0;
  Index count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Eigen::RowVectorXd diff = batch.pairs[i].target.values.colwise().sum() -
                                    conditional_mean(batch.forecasts[i], use_scores).colwise().sum();
    sq += diff.squaredNorm();
    count += diff.size();
  }
  return std::sqrt(sq / static_cast<double>(count));
}

std::array<double, 19> crps_levels() {
  std::array<double, 19> q{};
  for (int j = 0; j < 19; ++j) q[j] = (j + 1) / 20.0;
  return q;
}

double weighted_lower_quantile(std::span<const double> values, std::span<const double> weights,
                               double q) {
  detail::require(!values.empty() && values.size() == weights.size(),
                  "weighted quantile: values and weights must be non-empty and equal in length");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double cumulative = 0.0;
  for (std::size_t idx : order) {
    cumulative += weights[idx];
    if (cumulative >= q - 1e-12) return values[idx];
  }
  return values[order.back()];
}

double pinball(double a, double Q, double q) {
  return 2.0 * (Q - a) * ((a <= Q ? 1.0 : 0.0) - q);
}

double crps_sum(const EvalBatch& batch, bool use_scores) {
  validate(batch);
  const auto levels = crps_levels();
  std::array<double, 19> loss{};
  double denom = 0.0;
  const std::size_t K_max = batch.forecasts.front().hypotheses.size();
  std::vector<double> values;
  values.reserve(K_max);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Forecast& f = batch.forecasts[i];
    const auto w = mixture_weights(f, use_scores);
    const Eigen::RowVectorXd target = batch.pairs[i].target.values.colwise().sum();
    std::vector<Eigen::RowVectorXd> agg;
    agg.reserve(f.hypotheses.size());
    for (const auto& h : f.hypotheses) agg.push_back(h.colwise().sum());
    for (Index t = 0; t < target.size(); ++t) {
      values.clear();
      for (const auto& a : agg) values.push_back(a(t));
      for (std::size_t j = 0; j < levels.size(); ++j) {
        loss[j] += pinball(target(t), weighted_lower_quantile(values, w, levels[j]), levels[j]);
      }
      denom += std::abs(target(t));
    }
  }
  if (denom == 0.0) {
    throw NumericalError("crps_sum: the aggregated target is identically zero");
  }
  double total = 0.0;
  for (double l : loss) total += l / denom;
  return total / static_cast<double>(levels.size());
}

double trajectory_tv(const Eigen::MatrixXd& x) {
  if (x.cols() < 2) return 0.0;
  return (x.rightCols(x.cols() - 1) - x.leftCols(x.cols() - 1)).colwise().norm().sum();
}

std::vector<int> resample_by_scores(const Forecast& forecast, int n_draws, std::uint64_t seed) {
  detail::require(n_draws >= 1, "resample_by_scores: n_draws must be >= 1");
  const auto w = forecast.normalized_scores();
  Rng rng(seed);
  std::vector<int> draws(n_draws);
  for (int& d : draws) d = static_cast<int>(rng.categorical(w));
  return draws;
}

double total_variation(const EvalBatch& batch, bool use_scores, std::uint64_t seed) {
  validate(batch);
  detail::require(batch.pairs.front().target.length() >= 2,
                  "total_variation: the horizon must have at least two steps");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Forecast& f = batch.forecasts[i];
    std::vector<double> tv(f.hypotheses.size());
    for (std::size_t k = 0; k < tv.size(); ++k) tv[k] = trajectory_tv(f.hypotheses[k]);
    double window = 0.0;
    if (use_scores) {
      for (int k : resample_by_scores(f, f.size(), derive_seed(seed, i))) window += tv[k];
    } else {
      for (double v : tv) window += v;
    }
    total += window / static_cast<double>(tv.size());
  }
  return total / static_cast<double>(batch.size());
}

MetricsReport evaluate(const EvalBatch& batch, bool use_scores, std::uint64_t seed) {
  MetricsReport r;
  r.distortion = distortion(batch);
  r.rmse = rmse(batch, use_scores);
  r.crps_sum = crps_sum(batch, use_scores);
  r.total_variation =
      batch.pairs.front().target.length() >= 2 ? total_variation(batch, use_scores, seed) : 0.0;
  return r;
}

Forecast codebook_forecast(const Codebook& codebook, const Eigen::VectorXd& offset,
                           double t_start) {
  validate(codebook);
  detail::require(offset.size() == codebook.dim(), "codebook forecast: offset dimension mismatch");
  Forecast f;
  f.dt = codebook.dt;
  f.t_start = t_start;
  for (const auto& c : codebook.codevectors) f.hypotheses.push_back(c.colwise() + offset);
  f.scores = codebook.weights.empty()
                 ? std::vector<double>(codebook.codevectors.size(), 1.0 / codebook.size())
                 : codebook.weights;
  return f;
}

}  // namespace mclq
