// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "support.hpp"

#include "mclq/config.hpp"
#include "mclq/metrics.hpp"
#include "mclq/oracles.hpp"
#include "mclq/pipeline.hpp"
#include "mclq/processes.hpp"
#include "mclq/random.hpp"
#include "mclq/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace mclq;
using Mat = Eigen::MatrixXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double time_limit_s;  // <= 0: no limit
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome scalar_quantizer() {
  const double c2 = std::sqrt(2.0 / std::numbers::pi);
  const auto q2 = gaussian_quantizer_1d(2);
  const double err2 = std::max(std::abs(q2.levels[0] + c2), std::abs(q2.levels[1] - c2));
  const auto q3 = gaussian_quantizer_1d(3);
  const double c3 = testsupport::grid_search_three_level();
  const double err3 = std::max(std::abs(q3.levels[2] - c3), std::abs(q3.levels[0] + c3));
  return {err2 < 1e-4 && err3 < 1e-3 && q3.levels[1] == 0.0,
          "K=2 error " + fmt(err2) + " (tol 1e-4), K=3 outer error " + fmt(err3) + " (tol 1e-3)"};
}

Outcome gradient_suite() {
  Rng rng(20240601);
  double worst = 0.0;
  int cases = 0, failures = 0;
  for (auto b : {Backbone::mlp, Backbone::rnn}) {
    Architecture arch;
    arch.backbone = b;
    arch.K = 3;
    arch.D = 2;
    arch.context_length = 5;
    arch.horizon = 4;
    arch.hidden_width = 8;
    arch.hidden_layers = 2;
    for (auto v : {LossVariant::wta, LossVariant::relaxed, LossVariant::annealed}) {
      for (double beta : {0.0, 0.5}) {
        for (int draw = 0; draw < 50; ++draw) {
          const auto p = testsupport::random_params(arch, rng.below(1ull << 40));
          const Mat x = testsupport::random_matrix(arch.input_size(), 3, rng);
          const Mat y = testsupport::random_matrix(arch.D * arch.horizon, 3, rng);
          LossConfig cfg;
          cfg.variant = v;
          cfg.beta = beta;
          cfg.divide_by_horizon = draw % 2 == 1;
          const int epoch = static_cast<int>(rng.below(120));
          const double err = testsupport::gradient_relative_error(p, x, y, cfg, epoch);
          worst = std::max(worst, err);
          failures += err < 1e-4 ? 0 : 1;
          ++cases;
        }
      }
    }
  }
  return {failures == 0, std::to_string(cases) + " instances, worst relative error " + fmt(worst) +
                             " (tol 1e-4), " + std::to_string(failures) + " over"};
}

Outcome loss_algebra() {
  Rng rng(77);
  LossConfig wta;
  LossConfig relaxed0;
  relaxed0.variant = LossVariant::relaxed;
  relaxed0.epsilon = 0.0;
  int mismatches = 0, anneal_bad = 0, sum_bad = 0, tied = 0;
  double worst_sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int K = 1 + static_cast<int>(rng.below(10));
    std::vector<double> l(K);
    for (auto& x : l) x = 5.0 * rng.uniform();
    if (i % 10 == 0 && K > 1) l[K - 1] = l[0];  // exercise ties too
    const auto qw = head_weights(l, wta, 0);
    if (head_weights(l, relaxed0, 0) != qw) ++mismatches;
    const bool has_tie = std::count(l.begin(), l.end(), *std::min_element(l.begin(), l.end())) > 1;
    if (has_tie) {
      ++tied;
    } else {
      const auto qa = softmin_weights(l, 1e-9);
      for (int k = 0; k < K; ++k) anneal_bad += std::abs(qa[k] - qw[k]) > 1e-12 ? 1 : 0;
    }
    for (auto v : {LossVariant::wta, LossVariant::relaxed, LossVariant::annealed}) {
      LossConfig c;
      c.variant = v;
      c.epsilon = rng.uniform() * 0.5;
      const auto q = head_weights(l, c, static_cast<int>(rng.below(400)));
      double s = 0.0;
      for (double x : q) s += x;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      sum_bad += std::abs(s - 1.0) <= 1e-9 ? 0 : 1;
    }
  }
  return {mismatches == 0 && anneal_bad == 0 && sum_bad == 0,
          "relaxed(0) vs wta mismatches " + std::to_string(mismatches) + ", annealed T=1e-9 mismatches " +
              std::to_string(anneal_bad) + " (" + std::to_string(tied) + " tied vectors skipped), max |sum q - 1| " +
              fmt(worst_sum)};
}

Outcome lloyd_checks() {
  int runs = 0, increases = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto paths = sample_brownian(30, 400, 1.0 / 30, derive_seed(5, seed));
    for (int K : {2, 5, 10}) {
      for (auto init : {LloydInit::kmeans_pp(seed), LloydInit::subset(seed)}) {
        const auto r = lloyd_trajectories(paths, K, init, 300, 1e-12);
        ++runs;
        for (std::size_t i = 1; i < r.distortion_history.size(); ++i) {
          increases += r.distortion_history[i] > r.distortion_history[i - 1] ? 1 : 0;
        }
      }
    }
  }
  Rng rng(99);
  std::vector<Trajectory> s;
  std::vector<Mat> raw;
  for (int i = 0; i < 12; ++i) {
    Mat v(1, 4);
    for (int t = 0; t < 4; ++t) v(0, t) = (i < 5 ? 2.0 : -1.0) + 0.8 * rng.normal();
    s.push_back(Trajectory{v, 0.25, 0.0});
    raw.push_back(v);
  }
  const auto best = testsupport::best_bipartition(raw);
  const auto r = lloyd_trajectories(s, 2, LloydInit::kmeans_pp(5), 300, 1e-14);
  const double err = std::max(std::abs(r.final_distortion - best.d2), std::abs(r.distortion_history.back() - best.mse));
  return {increases == 0 && err < 1e-8, std::to_string(runs) + " runs with " + std::to_string(increases) +
                                            " history increases; 12-sample brute-force gap " + fmt(err) + " (tol 1e-8)"};
}

Architecture tiny(int K, bool scores) {
  Architecture a;
  a.K = K;
  a.context_length = 1;
  a.horizon = 1;
  a.hidden_width = 32;
  a.hidden_layers = 2;
  a.score_heads = scores;
  return a;
}

ModelParams<double> two_stage_fit(const WindowSampler& sampler, const Architecture& arch, const LossConfig& loss,
                                  int batch, int iters) {
  TrainConfig cfg;
  cfg.batch = batch;
  cfg.iterations = iters;
  cfg.lr = 5e-3;
  cfg.seed = 1;
  auto r = fit(sampler, init_params<double>(arch, 3), loss, cfg);
  cfg.lr = 1e-3;
  cfg.seed = 2;
  return fit(sampler, r.params, loss, cfg).params;
}

Outcome gaussian_mcl() {
  LossConfig loss;  // wta, beta = 0
  const auto params = two_stage_fit(testsupport::gaussian_target_sampler(), tiny(2, false), loss, 2048, 600);
  const auto f = predict(params, {Trajectory{Mat::Zero(1, 1), 1.0, 0.0}}, ScalerKind::none).front();
  double lo = f.hypotheses[0](0, 0), hi = f.hypotheses[1](0, 0);
  if (lo > hi) std::swap(lo, hi);
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double err = std::max(std::abs(lo + c), std::abs(hi - c));
  return {err < 0.05, "heads (" + fmt(lo) + ", " + fmt(hi) + ") vs +-" + fmt(c) + ", error " + fmt(err) + " (tol 0.05)"};
}

Outcome score_calibration() {
  LossConfig loss;
  loss.beta = 0.5;
  const auto sampler = testsupport::cycling_sampler({Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, -1.0)}, {7, 3});
  const auto params = two_stage_fit(sampler, tiny(2, true), loss, 100, 1500);
  const auto f = predict(params, {Trajectory{Mat::Zero(1, 1), 1.0, 0.0}}, ScalerKind::none).front();
  const auto q = f.normalized_scores();
  const int up = f.hypotheses[0](0, 0) > f.hypotheses[1](0, 0) ? 0 : 1;
  const double err = std::max(std::abs(q[up] - 0.7), std::abs(q[1 - up] - 0.3));
  return {err < 0.05, "normalized scores (" + fmt(q[up]) + ", " + fmt(q[1 - up]) + ") for heads at (" +
                          fmt(f.hypotheses[up](0, 0)) + ", " + fmt(f.hypotheses[1 - up](0, 0)) +
                          ") vs (0.7, 0.3), error " + fmt(err) + " (tol 0.05)"};
}

// Trains a preset exactly as the train command does.
ModelParams<float> train_preset(const RunConfig& cfg) {
  const auto spec = process_spec(cfg);
  const auto arch = architecture(cfg);
  auto train = train_config(cfg);
  const std::uint64_t seed = cfg.get_u64("seed");
  train.seed = derive_seed(seed, stream::train_data);
  train.log_every = 100;
  const auto sampler = process_window_sampler(spec, cfg.get_int("process.n_steps"), arch.context_length, arch.horizon);
  return fit(sampler, init_params<float>(arch, derive_seed(seed, stream::train_init)), loss_config(cfg), train).params;
}

std::optional<ModelParams<float>> bm_model;

Outcome bm_toy() {
  const auto cfg = RunConfig::preset("toy-bm");
  bm_model = train_preset(cfg);
  const auto spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const int ctx = cfg.get_int("data.context_length"), pred = cfg.get_int("data.horizon");
  const auto windows = sample_windows(spec, n_steps, ctx, pred, 10000, derive_seed(2718, stream::eval_windows));
  std::vector<Trajectory> contexts;
  for (const auto& w : windows) contexts.push_back(w.context);
  const double model = distortion(make_batch(windows, predict(*bm_model, contexts, ScalerKind::none)));
  const auto cb = bm_window_codebook(cfg.get_ints("oracle.levels"), pred, spec.horizon / n_steps);
  const double oracle = distortion(make_batch(windows, codebook_forecasts(cb, true, windows)));
  const double ratio = model / oracle;
  return {std::abs(ratio - 1.0) <= 0.15, "model " + fmt(model) + ", KL codebook " + fmt(oracle) + ", ratio " +
                                             fmt(ratio) + " (tol 15%)"};
}

Outcome ar_toy() {
  const auto cfg = RunConfig::preset("toy-ar5");
  const auto spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const int ctx = cfg.get_int("data.context_length"), pred = cfg.get_int("data.horizon");
  const std::uint64_t seed = cfg.get_u64("seed");
  const auto params = train_preset(cfg);
  const auto ensemble = ar_ensemble(spec, n_steps, ctx, pred, cfg.get_int("oracle.n_samples"),
                                    derive_seed(seed, stream::oracle_context));
  const auto lloyd = lloyd_trajectories(ensemble.continuations, cfg.get_int("oracle.K"),
                                        LloydInit::kmeans_pp(derive_seed(seed, stream::oracle_init)),
                                        cfg.get_int("oracle.max_iter"), cfg.get_double("oracle.tol"));
  std::vector<WindowPair> held_out;
  for (auto& c : sample_ar_continuations(ensemble.context, spec, pred, 10000, derive_seed(seed, stream::oracle_eval))) {
    held_out.push_back({ensemble.context, std::move(c)});
  }
  const auto f = predict(params, {ensemble.context}, train_config(cfg).scaler).front();
  const double model = distortion(make_batch(held_out, std::vector<Forecast>(held_out.size(), f)));
  const double oracle = distortion(make_batch(held_out, codebook_forecasts(lloyd.codebook, false, held_out)));
  const double ratio = model / oracle;
  return {std::abs(ratio - 1.0) <= 0.15, "model " + fmt(model) + ", Lloyd (1e5 samples) " + fmt(oracle) +
                                             ", ratio " + fmt(ratio) + " (tol 15%)"};
}

Outcome smoothness() {
  if (!bm_model) return {false, "no trained BM toy model (criterion 6 did not produce one)"};
  const auto cfg = RunConfig::preset("toy-bm");
  const auto spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const int ctx = cfg.get_int("data.context_length"), pred = cfg.get_int("data.horizon");
  const double dt = spec.horizon / n_steps;
  const auto windows = sample_windows(spec, n_steps, ctx, pred, 100, derive_seed(31415, stream::eval_windows));
  std::vector<Trajectory> contexts;
  for (const auto& w : windows) contexts.push_back(w.context);
  const double model = total_variation(make_batch(windows, predict(*bm_model, contexts, ScalerKind::none)), false);
  // K raw Brownian paths of the same length per window.
  const int K = bm_model->arch.K;
  double raw = 0.0;
  const auto paths = sample_brownian(pred, 100 * K, dt, 161803);
  for (const auto& p : paths) raw += trajectory_tv(p.values);
  raw /= static_cast<double>(paths.size());
  return {model < raw, "model mean TV " + fmt(model) + " vs raw BM mean TV " + fmt(raw) + " over 100 windows"};
}

EvalBatch one(const Mat& target, std::vector<Mat> hyps, std::vector<double> scores) {
  return {{{Trajectory{Mat::Zero(target.rows(), 1), 1.0, 0.0}, Trajectory{target, 1.0, 1.0}}},
          {Forecast{std::move(hyps), std::move(scores), 1.0, 1.0}}};
}

Outcome metric_oracles() {
  std::vector<std::string> bad;
  auto expect = [&](const char* what, double got, double want) {
    if (got != want) bad.push_back(std::string(what) + " got " + fmt(got));
  };
  Mat z(1, 2), h1(1, 2), h3(1, 2);
  z << 0, 0;
  h1 << 1, 1;
  h3 << 3, 3;
  expect("distortion", distortion(one(z, {h1, h3}, {0.5, 0.5})), 1.0);
  expect("distortion(exact)", distortion(one(h3, {h1, h3}, {0.5, 0.5})), 0.0);
  Mat t2(2, 1);
  t2 << 1, 2;
  expect("rmse", rmse(one(t2, {Mat::Zero(2, 1)}, {1.0}), true), 3.0);
  expect("rmse(perfect)", rmse(one(t2, {t2}, {1.0}), true), 0.0);
  expect("crps(perfect)", crps_sum(one(h3, {h3}, {1.0}), true), 0.0);
  expect("crps(two atoms)", crps_sum(one(Mat::Constant(1, 1, 1.0), {Mat::Zero(1, 1), Mat::Constant(1, 1, 2.0)}, {0.5, 0.5}), true),
         10.0 / 19.0);
  Mat tri(1, 3);
  tri << 0, 1, 0;
  expect("tv", trajectory_tv(tri), 2.0);
  expect("tv(constant)", trajectory_tv(Mat::Constant(2, 4, 3.0)), 0.0);

  Rng rng(4242);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int N = 1 + static_cast<int>(rng.below(3)), K = 1 + static_cast<int>(rng.below(4));
    const int D = 1 + static_cast<int>(rng.below(2)), L = 1 + static_cast<int>(rng.below(3));
    EvalBatch b;
    std::vector<Eigen::RowVectorXd> targets;
    std::vector<std::vector<Eigen::RowVectorXd>> hyps;
    std::vector<std::vector<double>> weights;
    for (int i = 0; i < N; ++i) {
      Mat t = testsupport::random_matrix(D, L, rng);
      t(0, 0) += 0.5;
      Forecast f;
      hyps.emplace_back();
      for (int k = 0; k < K; ++k) {
        Mat h = testsupport::random_matrix(D, L, rng);
        if (trial % 4 == 0) h = h.array().round();
        f.hypotheses.push_back(h);
        f.scores.push_back(rng.uniform());
        hyps.back().push_back(h.colwise().sum());
      }
      targets.push_back(t.colwise().sum());
      weights.push_back(f.normalized_scores());
      b.pairs.push_back({Trajectory{Mat::Zero(D, 1), 1.0, 0.0}, Trajectory{t, 1.0, 1.0}});
      b.forecasts.push_back(f);
    }
    worst = std::max(worst, std::abs(crps_sum(b, true) - testsupport::brute_force_crps(targets, hyps, weights)));
  }
  std::string detail = bad.empty() ? "all hand-computed values exact" : "mismatches:";
  for (const auto& s : bad) detail += " " + s;
  detail += "; CRPS vs brute force worst gap " + fmt(worst) + " (tol 1e-10)";
  return {bad.empty() && worst < 1e-10, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "scalar Gaussian quantizer", 1.0, scalar_quantizer},
      {2, "gradient suite", 30.0, gradient_suite},
      {3, "loss algebra", 0.0, loss_algebra},
      {4, "Lloyd monotonicity and brute force", 5.0, lloyd_checks},
      {5, "unconditional Gaussian MCL", 120.0, gaussian_mcl},
      {6, "Brownian toy vs KL codebook", 900.0, bm_toy},
      {7, "AR(5) toy vs Lloyd reference", 1200.0, ar_toy},
      {8, "score calibration", 120.0, score_calibration},
      {9, "smoothness of the Brownian toy", 0.0, smoothness},
      {10, "metric unit oracles", 0.0, metric_oracles},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt(secs) + " s";
    if (c.time_limit_s > 0.0) {
      timing += " (limit " + fmt(c.time_limit_s) + " s)";
      if (secs > c.time_limit_s) {
        o.pass = false;
        timing += " over time";
      }
    }
    failed += o.pass ? 0 : 1;
    std::printf("AC%-2d %s  %s: %s [%s]\n", c.id, o.pass ? "PASS" : "FAIL", c.title.c_str(), o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
