#pragma once

#include "mclq/error.hpp"
#include "mclq/processes.hpp"
#include "mclq/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace mclq {

// ---------------------------------------------------------------------------
// Scalar Gaussian quantizer (Lloyd-Max)

struct ScalarQuantizer {
  std::vector<double> levels;      ///< strictly increasing, symmetric about 0
  std::vector<double> cell_probs;  ///< Normal(0, 1) mass of each Voronoi cell
  int iterations = 0;
};

/// Raised when the fixed-point iteration hits its cap; carries the last iterate.
class QuantizerNotConverged : public NumericalError {
 public:
  QuantizerNotConverged(const std::string& what, ScalarQuantizer last)
      : NumericalError(what), last_iterate(std::move(last)) {}
  ScalarQuantizer last_iterate;
};

/// Optimal K-level quantizer of Normal(0, 1) under squared error.
///
/// Starts from the quantiles of (i - 1/2) / K and alternates midpoint thresholds
/// with closed-form cell means (pdf(a) - pdf(b)) / (cdf(b) - cdf(a)) until the
/// largest level update is below `tol`.
ScalarQuantizer gaussian_quantizer_1d(int K, double tol = 1e-12, int max_iter = 200000);

/// Thresholds between adjacent levels (K - 1 midpoints).
std::vector<double> thresholds(const ScalarQuantizer& q);

/// Mean of Normal(0, 1) restricted to (a, b); a may be -inf and b +inf.
double truncated_normal_mean(double a, double b);
/// Normal(0, 1) mass of (a, b).
double normal_mass(double a, double b);

// ---------------------------------------------------------------------------
// Karhunen-Loeve expansions of Brownian motion and the Brownian bridge on [0, T]

struct KlEigenpair {
  ProcessKind process;
  int n;
  double horizon;
  double eigenvalue;

  /// Orthonormal eigenfunction e_n evaluated at t.
  double operator()(double t) const;
};

/// Closed-form n-th eigenpair (n >= 1) of the covariance operator.
///   BM:     lambda_n = T^2 / (pi^2 (n - 1/2)^2),  e_n(t) = sqrt(2/T) sin(pi (n - 1/2) t / T)
///   bridge: lambda_n = T^2 / (pi^2 n^2),          e_n(t) = sqrt(2/T) sin(pi n t / T)
KlEigenpair kl_eigen(ProcessKind process, int n, double horizon = 1.0);

// ---------------------------------------------------------------------------
// Codebooks

/// K codevectors sharing shape D x Lp and grid spacing dt, with optional weights.
struct Codebook {
  std::vector<Eigen::MatrixXd> codevectors;
  std::vector<double> weights;  ///< empty, or one non-negative weight per codevector
  double dt = 1.0;

  int size() const { return static_cast<int>(codevectors.size()); }
  Index dim() const { return codevectors.empty() ? 0 : codevectors.front().rows(); }
  Index length() const { return codevectors.empty() ? 0 : codevectors.front().cols(); }
};

void validate(const Codebook& codebook);

struct KLSpec {
  ProcessKind process = ProcessKind::brownian_motion;
  std::vector<int> levels_per_coord;  ///< K_1 .. K_m; m = size()
  Eigen::VectorXd grid;               ///< evaluation times, uniformly spaced
  double horizon = 1.0;               ///< T of the expansion interval [0, T]
  std::size_t max_codevectors = 1'000'000;

  int truncation() const { return static_cast<int>(levels_per_coord.size()); }
};

/// n points t_first, t_first + dt, ...
Eigen::VectorXd uniform_grid(Index n, double t_first, double dt);

/// The named preset: m = 2, (K_1, K_2) = (5, 2), i.e. 10 codevectors.
KLSpec bm10_spec(const Eigen::VectorXd& grid, double horizon = 1.0);

/// Product quantizer: one codevector sum_n sqrt(lambda_n) alpha_{i_n} e_n(t) per
/// multi-index i (last coordinate varies fastest); weights are products of the
/// scalar cell probabilities.
Codebook product_codebook(const KLSpec& spec);

// ---------------------------------------------------------------------------
// Lloyd's algorithm on trajectory ensembles

struct LloydInit {
  enum class Kind { kmeans_pp, subset } kind = Kind::kmeans_pp;
  std::uint64_t seed = 0;

  static LloydInit kmeans_pp(std::uint64_t seed) { return {Kind::kmeans_pp, seed}; }
  static LloydInit subset(std::uint64_t seed) { return {Kind::subset, seed}; }
};

/// An empty cell repaired by moving its codevector onto a sample.
struct LloydEvent {
  int iteration;
  int codevector;
  Index sample;
};

struct LloydResult {
  Codebook codebook;
  /// Mean over samples of the squared distance to the nearest codevector,
  /// distance^2 = sum_d mean_t (x - c)^2. One entry per assignment pass.
  std::vector<double> distortion_history;
  /// Mean over samples of the (unsquared) distance; same formula as the
  /// distortion metric.
  double final_distortion = 0.0;
  std::vector<int> assignment;
  std::vector<LloydEvent> events;
  int iterations = 0;
};

/// Standard Lloyd iteration in the flattened D * Lp space. Stops when the relative
/// decrease of the mean squared distortion is below `tol`, when assignments stop
/// changing, or after `max_iter` updates. Ties go to the lowest codevector index.
LloydResult lloyd_trajectories(const std::vector<Trajectory>& samples, int K, LloydInit init,
                               int max_iter, double tol);

}  // namespace mclq
