#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls the library routine it is used to check.

#include "mclq/metrics.hpp"
#include "mclq/network.hpp"
#include "mclq/processes.hpp"
#include "mclq/random.hpp"
#include "mclq/training.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace testsupport {

using mclq::Index;

// ---------------------------------------------------------------------------
// Gaussian helpers written directly from erf, independent of mclq::gaussian.

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Expected squared error of Normal(0, 1) quantized to the nearest of `levels`
/// (sorted), by numerical integration on a fine grid over [-10, 10].
inline double gaussian_distortion(const std::vector<double>& levels) {
  const int n = 40000;
  const double a = -10.0, b = 10.0, h = (b - a) / n;
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    double best = std::numeric_limits<double>::infinity();
    for (double l : levels) best = std::min(best, (x - l) * (x - l));
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    total += w * best * phi(x);
  }
  return total * h;
}

/// Symmetric 3-level quantizer {-c, 0, c}: c minimizing distortion by dense grid search.
inline double grid_search_three_level() {
  double best_c = 0.0, best_d = std::numeric_limits<double>::infinity();
  // Closed-form distortion of {-c, 0, c}: thresholds at +-c/2.
  auto distortion = [](double c) {
    const double t = c / 2.0;
    // E[X^2; |X| < t] + 2 E[(X - c)^2; X > t]
    const double inner = (2.0 * Phi(t) - 1.0) - 2.0 * t * phi(t);
    const double tail_x2 = (1.0 - Phi(t)) + t * phi(t);
    const double tail_x = phi(t);
    const double tail_p = 1.0 - Phi(t);
    return inner + 2.0 * (tail_x2 - 2.0 * c * tail_x + c * c * tail_p);
  };
  for (int i = 1; i <= 300000; ++i) {
    const double c = i * 1e-5;
    const double d = distortion(c);
    if (d < best_d) {
      best_d = d;
      best_c = c;
    }
  }
  return best_c;
}

// ---------------------------------------------------------------------------
// AR(p) stationary variance by solving the Yule-Walker system.

inline double yule_walker_variance(const std::vector<double>& phi_coef, double sigma) {
  const int p = static_cast<int>(phi_coef.size());
  // Unknowns gamma_0..gamma_p. Equations:
  //   gamma_0 - sum_i phi_i gamma_i = sigma^2
  //   gamma_k - sum_i phi_i gamma_{|k - i|} = 0, k = 1..p
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
  for (int k = 0; k <= p; ++k) {
    A(k, k) += 1.0;
    for (int i = 1; i <= p; ++i) A(k, std::abs(k - i)) -= phi_coef[i - 1];
  }
  b(0) = sigma * sigma;
  return A.fullPivLu().solve(b)(0);
}

// ---------------------------------------------------------------------------
// Quantization brute force

struct Bipartition {
  double mse;  // mean over samples of sum_d mean_t (x - m)^2, the quantity Lloyd minimizes
  double d2;   // mean over samples of the distance to the nearest cell mean
};

/// Exhaustive search over all 2-partitions of `samples` for the smallest mean
/// squared distance to the cell means; also reports that partition's mean distance.
inline Bipartition best_bipartition(const std::vector<Eigen::MatrixXd>& samples) {
  const int n = static_cast<int>(samples.size());
  const double L = static_cast<double>(samples[0].cols());
  Bipartition best{std::numeric_limits<double>::infinity(), 0.0};
  for (unsigned mask = 1; mask < (1u << n) - 1; ++mask) {
    if (mask & 1u) continue;  // sample 0 always in cell 0, so each split is seen once
    Eigen::MatrixXd m0 = Eigen::MatrixXd::Zero(samples[0].rows(), samples[0].cols());
    Eigen::MatrixXd m1 = m0;
    int n0 = 0, n1 = 0;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1u) {
        m1 += samples[i];
        ++n1;
      } else {
        m0 += samples[i];
        ++n0;
      }
    }
    m0 /= n0;
    m1 /= n1;
    double mse = 0.0, d2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double own = ((mask >> i & 1u) ? (samples[i] - m1) : (samples[i] - m0)).squaredNorm() / L;
      mse += own;
      const double near = std::min((samples[i] - m0).squaredNorm(), (samples[i] - m1).squaredNorm()) / L;
      d2 += std::sqrt(near);
    }
    if (mse / n < best.mse) best = {mse / n, d2 / n};
  }
  return best;
}

// ---------------------------------------------------------------------------
// CRPS by definition: Q_q is the smallest hypothesis value v with
// sum_{j : v_j <= v} w_j >= q; the pinball loss is evaluated case by case.

inline double brute_force_crps(const std::vector<Eigen::RowVectorXd>& targets,
                               const std::vector<std::vector<Eigen::RowVectorXd>>& hyps,
                               const std::vector<std::vector<double>>& weights) {
  double denom = 0.0;
  for (const auto& t : targets) denom += t.cwiseAbs().sum();
  double acc = 0.0;
  for (int j = 1; j <= 19; ++j) {
    const double q = j / 20.0;
    double num = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      for (Index t = 0; t < targets[i].size(); ++t) {
        double Q = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < hyps[i].size(); ++k) {
          const double v = hyps[i][k](t);
          double mass = 0.0;
          for (std::size_t l = 0; l < hyps[i].size(); ++l) {
            if (hyps[i][l](t) <= v) mass += weights[i][l];
          }
          if (mass >= q - 1e-12 && v < Q) Q = v;
        }
        const double a = targets[i](t);
        num += a <= Q ? 2.0 * (1.0 - q) * (Q - a) : 2.0 * q * (a - Q);
      }
    }
    acc += num / denom;
  }
  return acc / 19.0;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Random small model with every tensor (biases included) perturbed off zero.
inline mclq::ModelParams<double> random_params(const mclq::Architecture& arch, std::uint64_t seed) {
  auto p = mclq::init_params<double>(arch, seed);
  mclq::Rng rng(seed ^ 0x5eedULL);
  for (auto& [name, t] : p.tensors()) {
    for (Index i = 0; i < t.size(); ++i) t(i) += 0.3 * rng.normal();
  }
  return p;
}

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, mclq::Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

/// ||g - fd|| / max(||g|| + ||fd||, 1e-12) where fd is the central difference of the
/// batch loss with head weights and winners frozen at the unperturbed point.
inline double gradient_relative_error(mclq::ModelParams<double> params, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& y, const mclq::LossConfig& cfg,
                                      int epoch, double h = 1e-6) {
  mclq::ModelParams<double> g;
  const auto base = mclq::loss_and_gradient(params, x, y, cfg, epoch, &g);
  const auto frozen = base.windows;
  double diff2 = 0.0, g2 = 0.0, fd2 = 0.0;
  auto analytic = g.tensors();
  auto tensors = params.tensors();
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    auto& t = tensors[ti].second;
    for (Index i = 0; i < t.size(); ++i) {
      const double saved = t(i);
      t(i) = saved + h;
      const double up = mclq::loss_and_gradient<double>(params, x, y, cfg, epoch, nullptr, &frozen).total;
      t(i) = saved - h;
      const double down = mclq::loss_and_gradient<double>(params, x, y, cfg, epoch, nullptr, &frozen).total;
      t(i) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[ti].second(i);
      diff2 += (an - fd) * (an - fd);
      g2 += an * an;
      fd2 += fd * fd;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(g2) + std::sqrt(fd2), 1e-12);
}

// ---------------------------------------------------------------------------
// Fixed-context samplers for the convergence checks

/// Every window has the same one-step context (value 0) and a target cycling
/// through `targets` with multiplicities `counts`; a batch whose size is a
/// multiple of sum(counts) therefore holds the exact proportions.
inline mclq::WindowSampler cycling_sampler(std::vector<Eigen::MatrixXd> targets, std::vector<int> counts,
                                           double dt = 1.0) {
  return [targets = std::move(targets), counts = std::move(counts), dt](int count, std::uint64_t) {
    std::vector<mclq::WindowPair> out;
    out.reserve(count);
    std::size_t which = 0;
    int used = 0;
    for (int i = 0; i < count; ++i) {
      while (used >= counts[which]) {
        which = (which + 1) % targets.size();
        used = 0;
      }
      ++used;
      const Eigen::MatrixXd ctx = Eigen::MatrixXd::Zero(targets[which].rows(), 1);
      out.push_back({mclq::Trajectory{ctx, dt, 0.0}, mclq::Trajectory{targets[which], dt, dt}});
    }
    return out;
  };
}

/// Constant context, scalar target drawn from Normal(0, 1).
inline mclq::WindowSampler gaussian_target_sampler() {
  return [](int count, std::uint64_t seed) {
    mclq::Rng rng(seed);
    std::vector<mclq::WindowPair> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      out.push_back({mclq::Trajectory{Eigen::MatrixXd::Zero(1, 1), 1.0, 0.0},
                     mclq::Trajectory{Eigen::MatrixXd::Constant(1, 1, rng.normal()), 1.0, 1.0}});
    }
    return out;
  };
}

}  // namespace testsupport
