#include "mclq/oracles.hpp"

#include "mclq/gaussian.hpp"
#include "mclq/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mclq {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double normal_mass(double a, double b) {
  if (a >= 0.0) return gaussian::sf(a) - gaussian::sf(b);
  return gaussian::cdf(b) - gaussian::cdf(a);
}

double truncated_normal_mean(double a, double b) {
  const double pa = std::isinf(a) ? 0.0 : gaussian::pdf(a);
  const double pb = std::isinf(b) ? 0.0 : gaussian::pdf(b);
  return (pa - pb) / normal_mass(a, b);
}

std::vector<double> thresholds(const ScalarQuantizer& q) {
  std::vector<double> cuts;
  for (std::size_t i = 0; i + 1 < q.levels.size(); ++i) {
    cuts.push_back(0.5 * (q.levels[i] + q.levels[i + 1]));
  }
  return cuts;
}

ScalarQuantizer gaussian_quantizer_1d(int K, double tol, int max_iter) {
  detail::require(K >= 1, "gaussian_quantizer_1d: K must be >= 1");
  detail::require(tol > 0.0, "gaussian_quantizer_1d: tol must be positive");

  ScalarQuantizer q;
  q.levels.resize(K);
  for (int i = 0; i < K; ++i) q.levels[i] = gaussian::quantile((i + 0.5) / K);

  auto cell = [&](int i, double& a, double& b) {
    a = i == 0 ? -kInf : 0.5 * (q.levels[i - 1] + q.levels[i]);
    b = i == K - 1 ? kInf : 0.5 * (q.levels[i] + q.levels[i + 1]);
  };

  std::vector<double> next(K);
  bool converged = K == 1;
  if (K == 1) q.levels[0] = 0.0;
  while (!converged && q.iterations < max_iter) {
    double change = 0.0;
    for (int i = 0; i < K; ++i) {
      double a, b;
      cell(i, a, b);
      next[i] = truncated_normal_mean(a, b);
      change = std::max(change, std::abs(next[i] - q.levels[i]));
    }
    q.levels.swap(next);
    ++q.iterations;
    converged = change < tol;
  }

  // Exact symmetry about the origin.
  for (int i = 0; i < K / 2; ++i) {
    const double half = 0.5 * (q.levels[K - 1 - i] - q.levels[i]);
    q.levels[i] = -half;
    q.levels[K - 1 - i] = half;
  }
  if (K % 2 == 1) q.levels[K / 2] = 0.0;

  q.cell_probs.resize(K);
  for (int i = 0; i < K; ++i) {
    double a, b;
    cell(i, a, b);
    q.cell_probs[i] = normal_mass(a, b);
  }
  const double total = std::accumulate(q.cell_probs.begin(), q.cell_probs.end(), 0.0);
  for (double& p : q.cell_probs) p /= total;

  if (!converged) {
    throw QuantizerNotConverged("gaussian_quantizer_1d(K=" + std::to_string(K) +
                                    ") did not converge in " + std::to_string(max_iter) +
                                    " iterations",
                                q);
  }
  return q;
}

double KlEigenpair::operator()(double t) const {
  const double freq = process == ProcessKind::brownian_motion ? n - 0.5 : static_cast<double>(n);
  return std::sqrt(2.0 / horizon) * std::sin(std::numbers::pi * freq * t / horizon);
}

KlEigenpair kl_eigen(ProcessKind process, int n, double horizon) {
  detail::require(n >= 1, "kl_eigen: n must be >= 1");
  detail::require(horizon > 0.0, "kl_eigen: horizon must be positive");
  detail::require(process != ProcessKind::ar, "kl_eigen: no closed form for AR processes");
  const double freq = process == ProcessKind::brownian_motion ? n - 0.5 : static_cast<double>(n);
  const double lambda = horizon * horizon / (std::numbers::pi * std::numbers::pi * freq * freq);
  return KlEigenpair{process, n, horizon, lambda};
}

void validate(const Codebook& codebook) {
  detail::require(!codebook.codevectors.empty(), "codebook is empty");
  detail::require(codebook.dt > 0.0, "codebook dt must be positive");
  for (const auto& c : codebook.codevectors) {
    detail::require(c.rows() == codebook.dim() && c.cols() == codebook.length(),
                    "codevectors do not share a shape");
    detail::require(c.size() > 0 && c.allFinite(), "codevector is empty or non-finite");
  }
  if (!codebook.weights.empty()) {
    detail::require(codebook.weights.size() == codebook.codevectors.size(),
                    "codebook weights and codevectors differ in count");
    double total = 0.0;
    for (double w : codebook.weights) {
      detail::require(w >= 0.0, "codebook weights must be >= 0");
      total += w;
    }
    detail::require(std::abs(total - 1.0) <= 1e-9, "codebook weights must sum to 1");
  }
}

Eigen::VectorXd uniform_grid(Index n, double t_first, double dt) {
  Eigen::VectorXd grid(n);
  for (Index j = 0; j < n; ++j) grid(j) = t_first + static_cast<double>(j) * dt;
  return grid;
}

KLSpec bm10_spec(const Eigen::VectorXd& grid, double horizon) {
  return KLSpec{ProcessKind::brownian_motion, {5, 2}, grid, horizon};
}

Codebook product_codebook(const KLSpec& spec) {
  const int m = spec.truncation();
  detail::require(m >= 1, "product_codebook: truncation m must be >= 1");
  detail::require(spec.grid.size() >= 1, "product_codebook: empty grid");
  std::size_t total = 1;
  for (int k : spec.levels_per_coord) {
    detail::require(k >= 1, "product_codebook: every K_n must be >= 1");
    total *= static_cast<std::size_t>(k);
    detail::require(total <= spec.max_codevectors,
                    "product_codebook: more than " + std::to_string(spec.max_codevectors) +
                        " codevectors requested");
  }

  // Basis: row n holds sqrt(lambda_n) e_n on the grid.
  const Index L = spec.grid.size();
  Eigen::MatrixXd basis(m, L);
  std::vector<ScalarQuantizer> scalar;
  for (int n = 1; n <= m; ++n) {
    const auto pair = kl_eigen(spec.process, n, spec.horizon);
    for (Index j = 0; j < L; ++j) basis(n - 1, j) = std::sqrt(pair.eigenvalue) * pair(spec.grid(j));
    scalar.push_back(gaussian_quantizer_1d(spec.levels_per_coord[n - 1]));
  }

  Codebook codebook;
  codebook.dt = L > 1 ? spec.grid(1) - spec.grid(0) : 1.0;
  std::vector<int> index(m, 0);
  for (std::size_t c = 0; c < total; ++c) {
    Eigen::RowVectorXd path = Eigen::RowVectorXd::Zero(L);
    double weight = 1.0;
    for (int n = 0; n < m; ++n) {
      path += scalar[n].levels[index[n]] * basis.row(n);
      weight *= scalar[n].cell_probs[index[n]];
    }
    codebook.codevectors.emplace_back(path);
    codebook.weights.push_back(weight);
    for (int n = m - 1; n >= 0; --n) {
      if (++index[n] < spec.levels_per_coord[n]) break;
      index[n] = 0;
    }
  }
  return codebook;
}

namespace {

struct Flattened {
  Eigen::MatrixXd data;  // (D * Lp) x N, one sample per column
  Index rows;
  Index cols;
  double dt;
};

Flattened flatten(const std::vector<Trajectory>& samples) {
  detail::require(!samples.empty(), "lloyd_trajectories: no samples");
  const Index D = samples.front().dim();
  const Index L = samples.front().length();
  Flattened f{Eigen::MatrixXd(D * L, static_cast<Index>(samples.size())), D, L,
              samples.front().dt};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    detail::require(samples[i].dim() == D && samples[i].length() == L,
                    "lloyd_trajectories: sample " + std::to_string(i) + " has a different shape");
    f.data.col(static_cast<Index>(i)) = samples[i].values.reshaped();
  }
  return f;
}

// Nearest codevector by squared distance; ties go to the lowest index.
int nearest(const Eigen::MatrixXd& centers, const Eigen::Ref<const Eigen::VectorXd>& x,
            double& best) {
  int arg = 0;
  best = kInf;
  for (Index k = 0; k < centers.cols(); ++k) {
    const double d = (centers.col(k) - x).squaredNorm();
    if (d < best) {
      best = d;
      arg = static_cast<int>(k);
    }
  }
  return arg;
}

Eigen::MatrixXd initial_centers(const Eigen::MatrixXd& X, int K, LloydInit init) {
  const Index N = X.cols();
  Rng rng(init.seed);
  Eigen::MatrixXd centers(X.rows(), K);
  if (init.kind == LloydInit::Kind::subset) {
    std::vector<Index> order(N);
    std::iota(order.begin(), order.end(), Index{0});
    for (int k = 0; k < K; ++k) {
      const auto j = k + static_cast<Index>(rng.below(static_cast<std::uint64_t>(N - k)));
      std::swap(order[k], order[j]);
      centers.col(k) = X.col(order[k]);
    }
    return centers;
  }
  // k-means++: first center uniform, then proportional to squared distance.
  centers.col(0) = X.col(static_cast<Index>(rng.below(static_cast<std::uint64_t>(N))));
  std::vector<double> d2(N);
  for (Index j = 0; j < N; ++j) d2[j] = (X.col(j) - centers.col(0)).squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Index pick;
    if (total > 0.0) {
      pick = static_cast<Index>(rng.categorical(d2));
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(N)));
    }
    centers.col(k) = X.col(pick);
    for (Index j = 0; j < N; ++j) d2[j] = std::min(d2[j], (X.col(j) - centers.col(k)).squaredNorm());
  }
  return centers;
}

}  // namespace

LloydResult lloyd_trajectories(const std::vector<Trajectory>& samples, int K, LloydInit init,
                               int max_iter, double tol) {
  detail::require(K >= 1, "lloyd_trajectories: K must be >= 1");
  detail::require(samples.size() >= static_cast<std::size_t>(K),
                  "lloyd_trajectories: fewer samples than codevectors");
  detail::require(max_iter >= 1 && tol > 0.0, "lloyd_trajectories: bad stopping parameters");

  const Flattened flat = flatten(samples);
  const Eigen::MatrixXd& X = flat.data;
  const Index N = X.cols();
  const double norm = 1.0 / static_cast<double>(flat.cols);

  LloydResult result;
  Eigen::MatrixXd centers = initial_centers(X, K, init);
  std::vector<int> assign(N);
  std::vector<double> dist(N);

  auto assign_all = [&]() {
    bool changed = false;
    double sum = 0.0;
    for (Index j = 0; j < N; ++j) {
      const int k = nearest(centers, X.col(j), dist[j]);
      changed = changed || k != assign[j];
      assign[j] = k;
      sum += dist[j];
    }
    result.distortion_history.push_back(sum * norm / static_cast<double>(N));
    return changed;
  };

  std::fill(assign.begin(), assign.end(), -1);
  assign_all();

  Eigen::MatrixXd sums(X.rows(), K);
  std::vector<Index> counts(K);
  for (int iter = 1; iter <= max_iter; ++iter) {
    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (Index j = 0; j < N; ++j) {
      sums.col(assign[j]) += X.col(j);
      ++counts[assign[j]];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) centers.col(k) = sums.col(k) / static_cast<double>(counts[k]);
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) continue;
      // Reseed at the sample farthest from its own centroid.
      const auto far = static_cast<Index>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      centers.col(k) = X.col(far);
      dist[far] = 0.0;
      result.events.push_back(LloydEvent{iter, k, far});
    }

    const double previous = result.distortion_history.back();
    const bool changed = assign_all();
    result.iterations = iter;
    const double current = result.distortion_history.back();
    if (!changed) break;
    if (previous <= 0.0 || (previous - current) / previous < tol) break;
  }

  result.assignment = assign;
  result.codebook.dt = flat.dt;
  std::fill(counts.begin(), counts.end(), 0);
  double d_sum = 0.0;
  for (Index j = 0; j < N; ++j) {
    ++counts[assign[j]];
    d_sum += std::sqrt(dist[j] * norm);
  }
  for (int k = 0; k < K; ++k) {
    result.codebook.weights.push_back(static_cast<double>(counts[k]) / static_cast<double>(N));
  }
  result.final_distortion = d_sum / static_cast<double>(N);
  for (int k = 0; k < K; ++k) {
    result.codebook.codevectors.emplace_back(centers.col(k).reshaped(flat.rows, flat.cols));
  }
  return result;
}

}  // namespace mclq
