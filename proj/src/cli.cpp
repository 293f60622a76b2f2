#include "mclq/cli.hpp"

#include "mclq/config.hpp"
#include "mclq/error.hpp"
#include "mclq/io.hpp"
#include "mclq/log.hpp"
#include "mclq/metrics.hpp"
#include "mclq/oracles.hpp"
#include "mclq/pipeline.hpp"
#include "mclq/random.hpp"
#include "mclq/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <sstream>

namespace mclq {
namespace {

namespace fs = std::filesystem;
using io::json;

struct Options {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out = "mclq-out";
  std::vector<std::string> sets;
  std::string checkpoint;
  std::string context;
  std::string codebook;
  std::string data;
};

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) detail::fail(flag + ": no such file '" + path + "'");
}

RunConfig resolve_config(const Options& opt) {
  RunConfig cfg;
  if (!opt.preset.empty()) cfg = RunConfig::preset(opt.preset);
  if (!opt.config_path.empty()) {
    require_file(opt.config_path, "--config");
    cfg.merge(RunConfig::load(opt.config_path));
  }
  for (const auto& kv : opt.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) detail::fail("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (opt.seed) cfg.set("seed", std::to_string(*opt.seed));
  return cfg;
}

void write_resolved(const fs::path& out, const RunConfig& cfg) {
  io::write_text(out / "resolved_config.txt", "# fully resolved configuration of this run\n" + cfg.dump());
}

double process_dt(const ProcessSpec& spec, int n_steps) {
  return sample_paths(spec, n_steps, 1, 0).front().dt;
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, const fs::path& out) {
  const ProcessSpec spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const int n_paths = cfg.get_int("synth.n_paths");
  detail::require(n_paths >= 1, "synth.n_paths must be >= 1");
  detail::require(n_steps >= 1, "process.n_steps must be >= 1");
  const std::uint64_t seed = derive_seed(cfg.get_u64("seed"), stream::synth);
  const auto paths = sample_paths(spec, n_steps, n_paths, seed);

  io::ensure_directory(out);
  json manifest;
  manifest["process"] = to_string(spec.kind);
  manifest["n_steps"] = n_steps;
  manifest["n_paths"] = n_paths;
  manifest["seed"] = cfg.get_u64("seed");
  manifest["stream_seed"] = seed;
  json files = json::array();
  json path_seeds = json::array();
  for (int i = 0; i < n_paths; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "path_%05d.csv", i);
    io::write_trajectory_csv(out / name, paths[i]);
    files.push_back(name);
    path_seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  }
  manifest["files"] = std::move(files);
  manifest["path_seeds"] = std::move(path_seeds);
  manifest["config"] = cfg.dump();
  io::write_json(out / "manifest.json", manifest);
  write_resolved(out, cfg);
  log(LogLevel::info, "wrote " + std::to_string(n_paths) + " paths to " + out.string());
  return 0;
}

int cmd_oracle(const RunConfig& cfg, const fs::path& out) {
  const ProcessSpec spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const std::string method = cfg.get("oracle.method");
  const std::uint64_t seed = cfg.get_u64("seed");
  const int eval_paths = cfg.get_int("oracle.eval_paths");
  detail::require(eval_paths >= 1, "oracle.eval_paths must be >= 1");
  io::ensure_directory(out);

  json report;
  report["method"] = method;
  report["process"] = to_string(spec.kind);
  Codebook codebook;
  std::string anchor = "none";
  std::vector<WindowPair> held_out;

  if (method == "kl") {
    const auto levels = cfg.get_ints("oracle.levels");
    if (spec.kind == ProcessKind::brownian_motion) {
      const int ctx = cfg.get_int("data.context_length");
      const int horizon = cfg.get_int("data.horizon");
      codebook = bm_window_codebook(levels, horizon, spec.horizon / n_steps);
      anchor = "last_context";
      held_out = sample_windows(spec, n_steps, ctx, horizon, eval_paths,
                                derive_seed(seed, stream::oracle_eval));
    } else if (spec.kind == ProcessKind::brownian_bridge) {
      codebook = bridge_path_codebook(levels, n_steps, spec.endpoint);
      held_out = sample_full_paths(spec, n_steps, eval_paths, derive_seed(seed, stream::oracle_eval));
    } else {
      detail::fail("oracle.method = kl needs process.kind brownian_motion or brownian_bridge");
    }
    report["levels"] = levels;
  } else if (method == "lloyd") {
    if (spec.kind != ProcessKind::ar) detail::fail("oracle.method = lloyd needs process.kind = ar");
    const int ctx = cfg.get_int("data.context_length");
    const int horizon = cfg.get_int("data.horizon");
    const int n_samples = cfg.get_int("oracle.n_samples");
    const int K = cfg.get_int("oracle.K");
    const std::string init_name = cfg.get("oracle.init");
    const std::uint64_t init_seed = derive_seed(seed, stream::oracle_init);
    LloydInit init;
    if (init_name == "kmeans_pp") {
      init = LloydInit::kmeans_pp(init_seed);
    } else if (init_name == "subset") {
      init = LloydInit::subset(init_seed);
    } else {
      detail::fail("oracle.init must be kmeans_pp or subset, got '" + init_name + "'");
    }
    const auto ensemble =
        ar_ensemble(spec, n_steps, ctx, horizon, n_samples, derive_seed(seed, stream::oracle_context));
    log(LogLevel::info, "running Lloyd on " + std::to_string(n_samples) + " continuations");
    const LloydResult result = lloyd_trajectories(ensemble.continuations, K, init,
                                                  cfg.get_int("oracle.max_iter"),
                                                  cfg.get_double("oracle.tol"));
    codebook = result.codebook;
    report["K"] = K;
    report["distortion_history"] = result.distortion_history;
    report["final_distortion"] = result.final_distortion;
    report["iterations"] = result.iterations;
    json events = json::array();
    for (const auto& e : result.events) {
      events.push_back({{"iteration", e.iteration}, {"codevector", e.codevector}, {"sample", e.sample}});
    }
    report["empty_cell_events"] = std::move(events);
    io::write_trajectory_csv(out / "context.csv", ensemble.context);
    const auto fresh = sample_ar_continuations(ensemble.context, spec, horizon, eval_paths,
                                               derive_seed(seed, stream::oracle_eval));
    for (const auto& c : fresh) held_out.push_back({ensemble.context, c});
  } else {
    detail::fail("oracle.method must be kl or lloyd, got '" + method + "'");
  }

  const auto forecasts = codebook_forecasts(codebook, anchor == "last_context", held_out);
  const double estimate = distortion(make_batch(held_out, forecasts));
  report["codebook_size"] = codebook.size();
  report["anchor"] = anchor;
  report["distortion_estimate"] = estimate;
  report["estimate_samples"] = eval_paths;
  io::write_json(out / "codebook.json", io::codebook_to_json(codebook, anchor));
  io::write_json(out / "oracle.json", report);
  write_resolved(out, cfg);
  log(LogLevel::info, "codebook of " + std::to_string(codebook.size()) +
                          " codevectors, distortion estimate " + io::format_double(estimate));
  return 0;
}

template <typename Scalar>
io::Checkpoint train_with(const RunConfig& cfg, const fs::path& out, const std::string& precision) {
  const ProcessSpec spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const Architecture arch = architecture(cfg);
  const LossConfig loss = loss_config(cfg);
  TrainConfig train = train_config(cfg);
  const std::uint64_t seed = cfg.get_u64("seed");
  train.seed = derive_seed(seed, stream::train_data);
  const auto sampler = process_window_sampler(spec, n_steps, arch.context_length, arch.horizon);

  io::Checkpoint ckpt;
  ckpt.precision = precision;
  ckpt.scaler = train.scaler;
  ckpt.dt = process_dt(spec, n_steps);
  try {
    auto result = fit(sampler, init_params<Scalar>(arch, derive_seed(seed, stream::train_init)), loss,
                      train);
    ckpt.params = result.params.template cast<double>();
    io::write_text(out / "history.csv", io::history_csv(result.history));
  } catch (const TrainingDiverged& e) {
    ckpt.params = e.last_good;
    io::write_json(out / "checkpoint.json", io::checkpoint_to_json(ckpt));
    io::write_text(out / "history.csv", io::history_csv(e.history));
    log(LogLevel::error, "last good parameters saved to " + (out / "checkpoint.json").string());
    throw;
  }
  return ckpt;
}

int cmd_train(const RunConfig& cfg, const fs::path& out) {
  // Resolve everything up front so configuration errors surface before any work.
  process_spec(cfg);
  architecture(cfg);
  loss_config(cfg);
  train_config(cfg);
  const std::string precision = cfg.get("model.precision");
  if (precision != "float32" && precision != "float64") {
    detail::fail("model.precision must be float32 or float64, got '" + precision + "'");
  }
  io::ensure_directory(out);
  write_resolved(out, cfg);
  const io::Checkpoint ckpt = precision == "float32" ? train_with<float>(cfg, out, precision)
                                                     : train_with<double>(cfg, out, precision);
  io::write_json(out / "checkpoint.json", io::checkpoint_to_json(ckpt));
  log(LogLevel::info, "checkpoint written to " + (out / "checkpoint.json").string());
  return 0;
}

std::vector<Forecast> checkpoint_predict(const io::Checkpoint& ckpt,
                                         const std::vector<Trajectory>& contexts) {
  const Architecture& a = ckpt.params.arch;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const auto& c = contexts[i];
    if (c.dim() != a.D || c.length() != a.context_length) {
      detail::fail("context shape mismatch: checkpoint expects " + std::to_string(a.D) + " x " +
                   std::to_string(a.context_length) + " (D x Lc), got " + std::to_string(c.dim()) +
                   " x " + std::to_string(c.length()));
    }
  }
  if (ckpt.precision == "float32") {
    return predict(ckpt.params.cast<float>(), contexts, ckpt.scaler);
  }
  return predict(ckpt.params, contexts, ckpt.scaler);
}

int cmd_predict(const Options& opt, const fs::path& out) {
  if (opt.checkpoint.empty()) detail::fail("predict needs --checkpoint");
  if (opt.context.empty()) detail::fail("predict needs --context");
  require_file(opt.checkpoint, "--checkpoint");
  require_file(opt.context, "--context");
  const io::Checkpoint ckpt = io::checkpoint_from_json(io::read_json(opt.checkpoint));
  const Trajectory context = io::read_trajectory_csv(opt.context, ckpt.dt);
  const Forecast f = checkpoint_predict(ckpt, {context}).front();
  io::write_forecast(out, f);
  log(LogLevel::info, "wrote " + std::to_string(f.size()) + " hypotheses to " + out.string());
  return 0;
}

std::vector<WindowPair> eval_windows(const RunConfig& cfg, const Options& opt,
                                     std::optional<Trajectory>* shared_context) {
  const int ctx = cfg.get_int("data.context_length");
  const int horizon = cfg.get_int("data.horizon");
  if (!opt.data.empty()) {
    const fs::path dir(opt.data);
    require_file((dir / "manifest.json").string(), "--data");
    const json manifest = io::read_json(dir / "manifest.json");
    std::vector<Trajectory> paths;
    for (const auto& f : manifest.at("files")) paths.push_back(io::read_trajectory_csv(dir / f.get<std::string>()));
    return make_windows(paths, ctx, horizon, WindowStrategy::last());
  }
  const ProcessSpec spec = process_spec(cfg);
  const int n_steps = cfg.get_int("process.n_steps");
  const std::uint64_t seed = cfg.get_u64("seed");
  const int n = cfg.get_int("eval.n_windows");
  detail::require(n >= 1, "eval.n_windows must be >= 1");
  const std::string source = cfg.get("eval.source");
  if (source == "windows") {
    return sample_windows(spec, n_steps, ctx, horizon, n, derive_seed(seed, stream::eval_windows));
  }
  if (source == "paths") {
    return sample_full_paths(spec, n_steps, n, derive_seed(seed, stream::eval_windows));
  }
  if (source == "ensemble") {
    if (spec.kind != ProcessKind::ar) detail::fail("eval.source = ensemble needs process.kind = ar");
    const auto e = ar_ensemble(spec, n_steps, ctx, horizon, cfg.get_int("oracle.n_samples"),
                               derive_seed(seed, stream::oracle_context));
    *shared_context = e.context;
    return e.windows();
  }
  detail::fail("eval.source must be windows, paths or ensemble, got '" + source + "'");
}

std::string plot_csv(const EvalBatch& batch, bool use_scores, int max_windows) {
  std::string s = "window,time,dimension,hypothesis,value,score,target\n";
  const std::size_t n = std::min(batch.size(), static_cast<std::size_t>(std::max(0, max_windows)));
  for (std::size_t i = 0; i < n; ++i) {
    const Forecast& f = batch.forecasts[i];
    const auto& target = batch.pairs[i].target;
    const auto w = use_scores ? f.normalized_scores()
                              : std::vector<double>(f.hypotheses.size(), 1.0 / f.size());
    for (int k = 0; k < f.size(); ++k) {
      for (Index t = 0; t < f.length(); ++t) {
        for (Index d = 0; d < f.dim(); ++d) {
          s += std::to_string(i) + ',' + io::format_double(target.time(t)) + ',' + std::to_string(d) +
               ',' + std::to_string(k) + ',' + io::format_double(f.hypotheses[k](d, t)) + ',' +
               io::format_double(w[k]) + ',' + io::format_double(target.values(d, t)) + '\n';
        }
      }
    }
  }
  return s;
}

int cmd_eval(const RunConfig& cfg, const Options& opt, const fs::path& out) {
  if (opt.checkpoint.empty() && opt.codebook.empty()) {
    detail::fail("eval needs --checkpoint, --codebook, or both");
  }
  std::optional<io::Checkpoint> ckpt;
  std::optional<io::StoredCodebook> cb;
  if (!opt.checkpoint.empty()) {
    require_file(opt.checkpoint, "--checkpoint");
    ckpt = io::checkpoint_from_json(io::read_json(opt.checkpoint));
  }
  if (!opt.codebook.empty()) {
    require_file(opt.codebook, "--codebook");
    cb = io::codebook_from_json(io::read_json(opt.codebook));
  }
  const bool use_scores = cfg.get_bool("eval.use_scores");
  const std::uint64_t resample_seed = derive_seed(cfg.get_u64("seed"), stream::eval_resample);
  const int plot_windows = cfg.get_int("eval.plot_windows");
  io::ensure_directory(out);

  std::optional<Trajectory> shared_context;
  const std::vector<WindowPair> windows = eval_windows(cfg, opt, &shared_context);
  log(LogLevel::info, "evaluating on " + std::to_string(windows.size()) + " windows");

  std::vector<std::pair<std::string, MetricsReport>> rows;
  json doc;
  if (ckpt) {
    std::vector<Forecast> forecasts;
    if (shared_context) {
      const Forecast f = checkpoint_predict(*ckpt, {*shared_context}).front();
      forecasts.assign(windows.size(), f);
    } else {
      std::vector<Trajectory> contexts;
      contexts.reserve(windows.size());
      for (const auto& w : windows) contexts.push_back(w.context);
      forecasts = checkpoint_predict(*ckpt, contexts);
    }
    const EvalBatch batch = make_batch(windows, std::move(forecasts));
    rows.emplace_back("model", evaluate(batch, use_scores, resample_seed));
    io::write_text(out / (cb ? "plot_model.csv" : "plot.csv"), plot_csv(batch, use_scores, plot_windows));
  }
  if (cb) {
    const auto& target = windows.front().target;
    if (cb->codebook.dim() != target.dim() || cb->codebook.length() != target.length()) {
      detail::fail("codebook shape mismatch: windows have " + std::to_string(target.dim()) + " x " +
                   std::to_string(target.length()) + " targets, codebook has " +
                   std::to_string(cb->codebook.dim()) + " x " + std::to_string(cb->codebook.length()));
    }
    const EvalBatch batch =
        make_batch(windows, codebook_forecasts(cb->codebook, cb->anchor == "last_context", windows));
    rows.emplace_back("oracle", evaluate(batch, use_scores, resample_seed));
    io::write_text(out / (ckpt ? "plot_oracle.csv" : "plot.csv"), plot_csv(batch, use_scores, plot_windows));
  }

  if (rows.size() == 1) {
    doc = io::metrics_to_json(rows.front().second);
  } else {
    doc["model"] = io::metrics_to_json(rows[0].second);
    doc["oracle"] = io::metrics_to_json(rows[1].second);
    doc["distortion_ratio"] = rows[0].second.distortion / rows[1].second.distortion;
  }
  doc["n_windows"] = windows.size();
  io::write_json(out / "metrics.json", doc);
  io::write_text(out / "metrics.csv", io::metrics_csv(rows));
  write_resolved(out, cfg);
  for (const auto& [label, r] : rows) {
    log(LogLevel::info, label + ": distortion " + io::format_double(r.distortion) + ", rmse " +
                            io::format_double(r.rmse) + ", crps_sum " + io::format_double(r.crps_sum) +
                            ", total_variation " + io::format_double(r.total_variation));
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"mclq: multiple-choice learning forecasters and functional quantization oracles"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "key = value configuration file");
  app.add_option("--preset", opt.preset, "start from a named preset");
  app.add_option("--seed", opt.seed, "master seed (overrides the config)");
  app.add_option("--out", opt.out, "output directory")->capture_default_str();
  app.add_option("--set", opt.sets, "override one key: --set key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "write synthetic trajectories as CSV files");
  auto* oracle = app.add_subcommand("oracle", "compute a reference codebook (KL product or Lloyd)");
  auto* train = app.add_subcommand("train", "train a multi-head forecaster");
  auto* predict_cmd = app.add_subcommand("predict", "forecast K hypotheses from one context CSV");
  predict_cmd->add_option("--checkpoint", opt.checkpoint, "trained checkpoint JSON");
  predict_cmd->add_option("--context", opt.context, "context trajectory CSV");
  auto* eval = app.add_subcommand("eval", "compute metrics for a checkpoint and/or codebook");
  eval->add_option("--checkpoint", opt.checkpoint, "trained checkpoint JSON");
  eval->add_option("--codebook", opt.codebook, "codebook JSON");
  eval->add_option("--data", opt.data, "directory written by synth (default: fresh samples)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const fs::path out(opt.out);
    if (*predict_cmd) return cmd_predict(opt, out);
    const RunConfig cfg = resolve_config(opt);
    if (*synth) return cmd_synth(cfg, out);
    if (*oracle) return cmd_oracle(cfg, out);
    if (*train) return cmd_train(cfg, out);
    if (*eval) return cmd_eval(cfg, opt, out);
  } catch (const UsageError& e) {
    log(LogLevel::error, e.what());
    return 2;
  } catch (const NumericalError& e) {
    log(LogLevel::error, e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    log(LogLevel::error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::error, std::string("internal error: ") + e.what());
    return 1;
  }
  return 2;
}

}  // namespace mclq
