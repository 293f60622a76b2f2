#include "support.hpp"

#include "mclq/metrics.hpp"
#include "mclq/oracles.hpp"
#include "mclq/processes.hpp"
#include "mclq/random.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace mclq;

namespace {

// Mean of Normal(0, 1) on (a, b) by direct quadrature of x * pdf.
double cell_mean_by_quadrature(double a, double b) {
  a = std::max(a, -12.0);
  b = std::min(b, 12.0);
  const int n = 200000;
  const double h = (b - a) / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    num += w * x * testsupport::phi(x);
    den += w * testsupport::phi(x);
  }
  return num / den;
}

Trajectory scalar_path(std::vector<double> v) {
  Eigen::MatrixXd m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return Trajectory{m, 0.1, 0.0};
}

// Mean nearest-codevector distance of `paths` to `codevectors`, written out longhand.
double longhand_distortion(const std::vector<Eigen::RowVectorXd>& paths,
                           const std::vector<Eigen::RowVectorXd>& codevectors) {
  double total = 0.0;
  for (const auto& p : paths) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : codevectors) {
      double s = 0.0;
      for (Index t = 0; t < p.size(); ++t) s += (p(t) - c(t)) * (p(t) - c(t));
      best = std::min(best, std::sqrt(s / static_cast<double>(p.size())));
    }
    total += best;
  }
  return total / static_cast<double>(paths.size());
}

}  // namespace

TEST_SUITE("oracles") {
  TEST_CASE("one-level quantizer is the mean") {
    const auto q = gaussian_quantizer_1d(1);
    REQUIRE(q.levels.size() == 1);
    CHECK(q.levels[0] == 0.0);
    CHECK(q.cell_probs[0] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("two-level quantizer is plus or minus sqrt(2/pi)") {
    const auto q = gaussian_quantizer_1d(2);
    const double c = std::sqrt(2.0 / std::numbers::pi);
    CHECK(std::abs(q.levels[0] + c) < 1e-10);
    CHECK(std::abs(q.levels[1] - c) < 1e-10);
  }

  TEST_CASE("three-level quantizer matches a grid search") {
    const auto q = gaussian_quantizer_1d(3);
    CHECK(std::abs(q.levels[1]) < 1e-12);
    const double c = testsupport::grid_search_three_level();
    CHECK(std::abs(q.levels[2] - c) < 1e-3);
    CHECK(std::abs(q.levels[0] + c) < 1e-3);
  }

  TEST_CASE("quantizers satisfy both Lloyd-Max conditions") {
    for (int K : {2, 3, 4, 5, 8}) {
      const double tol = 1e-10;
      const auto q = gaussian_quantizer_1d(K, tol);
      const auto th = thresholds(q);
      REQUIRE(th.size() == static_cast<std::size_t>(K - 1));
      double mass = 0.0;
      for (int k = 0; k < K; ++k) {
        if (k > 0) CHECK(q.levels[k] > q.levels[k - 1]);
        if (k + 1 < K) CHECK(th[k] == doctest::Approx(0.5 * (q.levels[k] + q.levels[k + 1])));
        const double a = k == 0 ? -INFINITY : th[k - 1];
        const double b = k + 1 == K ? INFINITY : th[k];
        CHECK(std::abs(q.levels[k] - cell_mean_by_quadrature(a, b)) < 1e-7);
        CHECK(std::abs(q.levels[k] + q.levels[K - 1 - k]) < 1e-9);
        mass += q.cell_probs[k];
      }
      CHECK(std::abs(mass - 1.0) < 1e-12);
    }
  }

  TEST_CASE("quantizer distortion is optimal against perturbations") {
    const auto q = gaussian_quantizer_1d(4);
    const double d0 = testsupport::gaussian_distortion(q.levels);
    for (int k = 0; k < 4; ++k) {
      for (double e : {-1e-2, 1e-2}) {
        auto lv = q.levels;
        lv[k] += e;
        CHECK(testsupport::gaussian_distortion(lv) > d0);
      }
    }
  }

  TEST_CASE("iteration cap reports the last iterate") {
    try {
      gaussian_quantizer_1d(7, 1e-15, 2);
      FAIL("expected QuantizerNotConverged");
    } catch (const QuantizerNotConverged& e) {
      CHECK(e.last_iterate.levels.size() == 7);
    }
  }

  TEST_CASE("KL eigenpairs in closed form") {
    const auto bm1 = kl_eigen(ProcessKind::brownian_motion, 1);
    CHECK(bm1(1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(bm1.eigenvalue == doctest::Approx(0.405285).epsilon(1e-6));
    CHECK(bm1.eigenvalue == doctest::Approx(4.0 / (std::numbers::pi * std::numbers::pi)).epsilon(1e-15));
    const auto br1 = kl_eigen(ProcessKind::brownian_bridge, 1, 1.0);
    CHECK(br1.eigenvalue == doctest::Approx(0.101321).epsilon(1e-6));
    const auto bmT = kl_eigen(ProcessKind::brownian_motion, 2, 3.0);
    CHECK(bmT.eigenvalue == doctest::Approx(9.0 / (std::numbers::pi * std::numbers::pi * 2.25)));
  }

  TEST_CASE("KL eigenfunctions are orthonormal on the grid") {
    const int n = 1001;
    const double dt = 1.0 / (n - 1);
    for (auto kind : {ProcessKind::brownian_motion, ProcessKind::brownian_bridge}) {
      for (int a = 1; a <= 4; ++a) {
        for (int b = 1; b <= 4; ++b) {
          const auto ea = kl_eigen(kind, a), eb = kl_eigen(kind, b);
          double s = 0.0;
          for (int i = 0; i < n; ++i) {
            const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
            s += w * ea(i * dt) * eb(i * dt) * dt;
          }
          CHECK(std::abs(s - (a == b ? 1.0 : 0.0)) < 5.0 * dt);
        }
      }
    }
  }

  TEST_CASE("product codebook shapes and weights") {
    const auto grid = uniform_grid(500, 0.0, 1.0 / 499);
    const auto cb = product_codebook(bm10_spec(grid));
    CHECK(cb.size() == 10);
    CHECK(cb.length() == 500);
    double w = 0.0;
    for (double x : cb.weights) w += x;
    CHECK(std::abs(w - 1.0) < 1e-9);

    KLSpec trivial;
    trivial.levels_per_coord = {1};
    trivial.grid = grid;
    const auto one = product_codebook(trivial);
    CHECK(one.size() == 1);
    CHECK(one.codevectors[0].isZero(0.0));

    KLSpec huge = trivial;
    huge.levels_per_coord = {100, 100, 100, 100};
    CHECK_THROWS_AS(product_codebook(huge), UsageError);
  }

  TEST_CASE("product codebook combines scalar levels along eigenfunctions") {
    const auto grid = uniform_grid(11, 0.0, 0.1);
    const auto cb = product_codebook(bm10_spec(grid));
    const auto q5 = gaussian_quantizer_1d(5), q2 = gaussian_quantizer_1d(2);
    const auto e1 = kl_eigen(ProcessKind::brownian_motion, 1), e2 = kl_eigen(ProcessKind::brownian_motion, 2);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 2; ++j) {
        const auto& c = cb.codevectors[i * 2 + j];
        for (Index t = 0; t < grid.size(); ++t) {
          const double expect = std::sqrt(e1.eigenvalue) * q5.levels[i] * e1(grid(t)) +
                                std::sqrt(e2.eigenvalue) * q2.levels[j] * e2(grid(t));
          CHECK(c(0, t) == doctest::Approx(expect).epsilon(1e-12));
        }
        CHECK(cb.weights[i * 2 + j] == doctest::Approx(q5.cell_probs[i] * q2.cell_probs[j]));
      }
    }
  }

  TEST_CASE("product codebook distortion agrees with an independent Monte-Carlo estimate") {
    const int n = 101, n_paths = 10000;
    const double dt = 1.0 / (n - 1);
    const auto grid = uniform_grid(n, 0.0, dt);
    const auto cb = product_codebook(bm10_spec(grid));

    // Library pipeline.
    EvalBatch batch;
    const auto forecast = codebook_forecast(cb, Eigen::VectorXd::Zero(1));
    for (const auto& p : sample_brownian(n, n_paths, dt, 555)) {
      batch.pairs.push_back({p.slice(0, 1), p});
      batch.forecasts.push_back(forecast);
    }
    const double lib = distortion(batch);

    // Independent paths and codevectors.
    std::mt19937_64 gen(987654321);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Eigen::RowVectorXd> paths;
    for (int i = 0; i < n_paths; ++i) {
      Eigen::RowVectorXd w(n);
      w(0) = 0.0;
      for (int j = 1; j < n; ++j) w(j) = w(j - 1) + std::sqrt(dt) * normal(gen);
      paths.push_back(w);
    }
    const double a5[] = {-1.7244, -0.7646, 0.0, 0.7646, 1.7244};  // published 5-level table
    const double a2[] = {-std::sqrt(2.0 / std::numbers::pi), std::sqrt(2.0 / std::numbers::pi)};
    const double pi = std::numbers::pi;
    std::vector<Eigen::RowVectorXd> codes;
    for (double x : a5) {
      for (double y : a2) {
        Eigen::RowVectorXd c(n);
        for (int j = 0; j < n; ++j) {
          const double t = j * dt;
          c(j) = (2.0 / pi) * x * std::sqrt(2.0) * std::sin(pi * 0.5 * t) +
                 (2.0 / (3.0 * pi)) * y * std::sqrt(2.0) * std::sin(pi * 1.5 * t);
        }
        codes.push_back(c);
      }
    }
    const double ref = longhand_distortion(paths, codes);
    MESSAGE("library " << lib << " reference " << ref);
    CHECK(std::abs(lib / ref - 1.0) < 0.02);
  }

  TEST_CASE("product codebook beats codebooks of random sample paths") {
    const int n = 101, n_eval = 10000;
    const double dt = 1.0 / (n - 1);
    const auto cb = product_codebook(bm10_spec(uniform_grid(n, 0.0, dt)));
    EvalBatch batch;
    for (const auto& p : sample_brownian(n, n_eval, dt, 31337)) batch.pairs.push_back({p.slice(0, 1), p});
    auto with = [&](const Codebook& c) {
      EvalBatch b = batch;
      b.forecasts.assign(b.pairs.size(), codebook_forecast(c, Eigen::VectorXd::Zero(1)));
      return distortion(b);
    };
    const double ours = with(cb);
    for (int r = 0; r < 20; ++r) {
      Codebook random;
      random.dt = dt;
      for (const auto& p : sample_brownian(n, 10, dt, derive_seed(4242, r))) random.codevectors.push_back(p.values);
      CHECK(ours < with(random));
    }
  }

  TEST_CASE("codebook validation") {
    Codebook cb;
    cb.codevectors = {Eigen::MatrixXd::Zero(1, 3), Eigen::MatrixXd::Ones(1, 3)};
    cb.weights = {0.5, 0.5};
    CHECK_NOTHROW(validate(cb));
    cb.weights = {0.5, 0.6};
    CHECK_THROWS_AS(validate(cb), UsageError);
    cb.weights.clear();
    cb.codevectors.push_back(Eigen::MatrixXd::Zero(1, 4));
    CHECK_THROWS_AS(validate(cb), UsageError);
  }

  TEST_CASE("Lloyd with one codevector per sample is exact") {
    std::vector<Trajectory> s{scalar_path({0, 1, 2}), scalar_path({3, 3, 3}), scalar_path({-1, 0, 5})};
    const auto r = lloyd_trajectories(s, 3, LloydInit::kmeans_pp(1), 50, 1e-12);
    CHECK(r.final_distortion == 0.0);
    CHECK(r.distortion_history.back() == 0.0);
    for (const auto& x : s) {
      bool found = false;
      for (const auto& c : r.codebook.codevectors) found = found || c == x.values;
      CHECK(found);
    }
  }

  TEST_CASE("Lloyd with one codevector returns the grand mean") {
    std::vector<Trajectory> s{scalar_path({0, 1, 2}), scalar_path({3, 3, 3}), scalar_path({-1, 2, 4})};
    const auto r = lloyd_trajectories(s, 1, LloydInit::subset(2), 50, 1e-12);
    CHECK(r.codebook.codevectors[0](0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(r.codebook.codevectors[0](0, 1) == doctest::Approx(2.0));
    CHECK(r.codebook.codevectors[0](0, 2) == doctest::Approx(3.0));
    CHECK(r.codebook.weights[0] == 1.0);
  }

  TEST_CASE("Lloyd recovers two separated clusters") {
    Rng rng(17);
    std::vector<Trajectory> s;
    for (int i = 0; i < 200; ++i) {
      Eigen::MatrixXd v(1, 5);
      for (int t = 0; t < 5; ++t) v(0, t) = (i % 2 ? 10.0 : 0.0) + 0.1 * rng.normal();
      s.push_back(Trajectory{v, 0.1, 0.0});
    }
    Eigen::RowVectorXd mean0 = Eigen::RowVectorXd::Zero(5), mean1 = mean0;
    for (int i = 0; i < 200; ++i) (i % 2 ? mean1 : mean0) += s[i].values.row(0) / 100.0;
    const auto r = lloyd_trajectories(s, 2, LloydInit::kmeans_pp(3), 100, 1e-12);
    const auto& c = r.codebook.codevectors;
    const bool order = c[0](0, 0) < c[1](0, 0);
    CHECK((c[order ? 0 : 1].row(0) - mean0).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((c[order ? 1 : 0].row(0) - mean1).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.codebook.weights[0] == doctest::Approx(0.5));
  }

  TEST_CASE("Lloyd on 12 samples matches the exhaustive bipartition") {
    Rng rng(99);
    std::vector<Trajectory> s;
    std::vector<Eigen::MatrixXd> raw;
    for (int i = 0; i < 12; ++i) {
      Eigen::MatrixXd v(1, 4);
      for (int t = 0; t < 4; ++t) v(0, t) = (i < 5 ? 2.0 : -1.0) + 0.8 * rng.normal();
      s.push_back(Trajectory{v, 0.25, 0.0});
      raw.push_back(v);
    }
    const auto best = testsupport::best_bipartition(raw);
    const auto r = lloyd_trajectories(s, 2, LloydInit::kmeans_pp(5), 300, 1e-14);
    CHECK(std::abs(r.distortion_history.back() - best.mse) < 1e-8);
    CHECK(std::abs(r.final_distortion - best.d2) < 1e-8);
  }

  TEST_CASE("Lloyd distortion history never increases") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto paths = sample_brownian(20, 300, 0.05, seed);
      for (auto init : {LloydInit::kmeans_pp(seed), LloydInit::subset(seed)}) {
        const auto r = lloyd_trajectories(paths, 8, init, 200, 1e-12);
        for (std::size_t i = 1; i < r.distortion_history.size(); ++i) {
          CHECK(r.distortion_history[i] <= r.distortion_history[i - 1]);
        }
      }
    }
  }

  TEST_CASE("Lloyd repairs empty cells") {
    // Three identical samples and one outlier: with subset seeding onto duplicates a cell empties.
    std::vector<Trajectory> s{scalar_path({0, 0}), scalar_path({0, 0}), scalar_path({0, 0}),
                              scalar_path({5, 5})};
    bool saw_event = false;
    for (std::uint64_t seed = 0; seed < 20 && !saw_event; ++seed) {
      const auto r = lloyd_trajectories(s, 2, LloydInit::subset(seed), 20, 1e-12);
      CHECK(r.final_distortion == doctest::Approx(0.0));
      saw_event = !r.events.empty();
    }
    CHECK(saw_event);
  }

  TEST_CASE("Lloyd input checks") {
    std::vector<Trajectory> s{scalar_path({0, 1})};
    CHECK_THROWS_AS(lloyd_trajectories(s, 2, LloydInit::kmeans_pp(0), 10, 1e-6), UsageError);
    s.push_back(scalar_path({1, 2, 3}));
    CHECK_THROWS_AS(lloyd_trajectories(s, 1, LloydInit::kmeans_pp(0), 10, 1e-6), UsageError);
  }
}
