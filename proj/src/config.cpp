#include "mclq/config.hpp"

#include "mclq/error.hpp"
#include "mclq/io.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

namespace mclq {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "master seed; every stream is derived from it"},

      {"process.kind", std::nullopt, "brownian_motion | brownian_bridge | ar"},
      {"process.n_steps", "500", "samples per generated path"},
      {"process.horizon", "1", "Brownian motion: time span of a path (dt = horizon / n_steps)"},
      {"process.endpoint", "1", "Brownian bridge: value pinned at t = 0 and t = 1"},
      {"process.phi", "0.4,0.2,0.2,0.1,0.1", "AR coefficients phi_1..phi_p"},
      {"process.sigma", "0.06", "AR innovation scale"},
      {"process.warmup", "100", "AR steps discarded before the retained segment"},

      {"synth.n_paths", "16", "number of paths written by synth"},

      {"data.context_length", std::nullopt, "context steps per window"},
      {"data.horizon", std::nullopt, "target steps per window"},

      {"model.backbone", "mlp", "mlp | rnn"},
      {"model.K", std::nullopt, "number of hypotheses"},
      {"model.hidden_width", "200", "hidden units per layer"},
      {"model.hidden_layers", "3", "MLP hidden layers"},
      {"model.score_heads", "true", "train score heads"},
      {"model.time_feature", "false", "MLP: append the target start time to the input"},
      {"model.precision", "float64", "float32 | float64 arithmetic for training"},

      {"loss.variant", "wta", "wta | relaxed | annealed"},
      {"loss.epsilon", "0.05", "relaxed: mass spread over non-winning heads"},
      {"loss.t0", "10", "annealed: initial temperature"},
      {"loss.rho", "0.95", "annealed: per-epoch decay"},
      {"loss.t_lim", "5e-4", "annealed: temperature below which plain wta is used"},
      {"loss.beta", "0", "score loss weight"},
      {"loss.divide_by_horizon", "false", "divide head losses by the horizon"},

      {"train.lr", "1e-3", "Adam learning rate"},
      {"train.batch", "4096", "windows per step"},
      {"train.iterations", "500", "optimizer steps"},
      {"train.steps_per_epoch", "1", "steps sharing one annealing temperature"},
      {"train.scaler", "none", "none | mean | zscore"},
      {"train.clip_norm", "10", "global gradient-norm clipping threshold (0 disables)"},
      {"train.lr_on_plateau", "false", "halve the learning rate on a plateau"},
      {"train.plateau_factor", "0.5", "learning-rate factor on a plateau"},
      {"train.plateau_patience", "10", "epochs without improvement before reducing"},
      {"train.log_every", "50", "progress line every N steps (0 disables)"},

      {"oracle.method", "kl", "kl | lloyd"},
      {"oracle.levels", "5,2", "kl: quantizer levels per KL coordinate"},
      {"oracle.K", "10", "lloyd: number of codevectors"},
      {"oracle.n_samples", "100000", "lloyd: conditional continuations to quantize"},
      {"oracle.init", "kmeans_pp", "lloyd: kmeans_pp | subset"},
      {"oracle.max_iter", "300", "lloyd: iteration cap"},
      {"oracle.tol", "1e-10", "lloyd: relative distortion decrease to stop"},
      {"oracle.eval_paths", "10000", "fresh samples for the distortion estimate"},

      {"eval.source", "windows", "windows | ensemble (the oracle's conditional ensemble)"},
      {"eval.n_windows", "10000", "windows or continuations evaluated"},
      {"eval.use_scores", "true", "weight hypotheses by their scores"},
      {"eval.plot_windows", "20", "windows written to the long-format plot CSV"},
  };
  return keys;
}

namespace {

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  detail::fail("config key '" + key + "': expected a number, got '" + text + "'");
}

long long to_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    detail::fail("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

const std::map<std::string, std::string>& preset_texts() {
  static const std::map<std::string, std::string> presets = {
      {"toy-bm", R"(
process.kind = brownian_motion
process.n_steps = 500
process.horizon = 1
data.context_length = 1
data.horizon = 249
model.backbone = mlp
model.K = 10
model.score_heads = false
model.precision = float32
loss.variant = relaxed
loss.epsilon = 0.05
train.lr = 1e-3
train.batch = 4096
train.iterations = 500
oracle.method = kl
oracle.levels = 5,2
eval.use_scores = false
)"},
      {"toy-bm-annealed", R"(
process.kind = brownian_motion
process.n_steps = 500
process.horizon = 1
data.context_length = 1
data.horizon = 249
model.backbone = mlp
model.K = 10
model.score_heads = false
model.precision = float32
loss.variant = annealed
loss.t0 = 10
loss.rho = 0.95
loss.t_lim = 5e-4
train.lr = 1e-3
train.batch = 4096
train.iterations = 500
oracle.method = kl
oracle.levels = 5,2
eval.use_scores = false
)"},
      {"toy-bridge", R"(
process.kind = brownian_bridge
process.n_steps = 500
process.endpoint = 1
data.context_length = 1
data.horizon = 250
model.backbone = mlp
model.K = 10
model.score_heads = false
model.time_feature = true
model.precision = float32
loss.variant = relaxed
loss.epsilon = 0.05
train.lr = 1e-3
train.batch = 4096
train.iterations = 500
oracle.method = kl
oracle.levels = 5,2
eval.use_scores = false
)"},
      {"toy-ar5", R"(
process.kind = ar
process.n_steps = 500
process.phi = 0.4,0.2,0.2,0.1,0.1
process.sigma = 0.06
process.warmup = 100
data.context_length = 100
data.horizon = 250
model.backbone = mlp
model.K = 10
model.score_heads = false
model.precision = float32
loss.variant = relaxed
loss.epsilon = 0.05
train.lr = 1e-3
train.batch = 4096
train.iterations = 500
oracle.method = lloyd
oracle.K = 10
oracle.n_samples = 100000
eval.use_scores = false
)"},
      {"bm-10", R"(
process.kind = brownian_motion
process.n_steps = 500
process.horizon = 1
data.context_length = 1
data.horizon = 249
model.K = 10
oracle.method = kl
oracle.levels = 5,2
eval.use_scores = true
)"},
      {"ar5-lloyd", R"(
process.kind = ar
process.n_steps = 500
process.phi = 0.4,0.2,0.2,0.1,0.1
process.sigma = 0.06
process.warmup = 100
data.context_length = 100
data.horizon = 250
model.K = 10
oracle.method = lloyd
oracle.K = 10
oracle.n_samples = 100000
oracle.init = kmeans_pp
eval.source = ensemble
eval.use_scores = true
)"},
  };
  return presets;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      detail::fail(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!find_key(key)) {
      detail::fail(origin + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return parse(io::read_text(path), path.string());
}

RunConfig RunConfig::preset(const std::string& name) {
  const auto& presets = preset_texts();
  const auto it = presets.find(name);
  if (it == presets.end()) {
    std::string known;
    for (const auto& [n, text] : presets) known += (known.empty() ? "" : ", ") + n;
    detail::fail("unknown preset '" + name + "' (known: " + known + ")");
  }
  return parse(it->second, "preset " + name);
}

std::vector<std::string> RunConfig::preset_names() {
  std::vector<std::string> names;
  for (const auto& [n, text] : preset_texts()) names.push_back(n);
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) detail::fail("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

bool RunConfig::has(const std::string& key) const {
  if (values_.count(key)) return true;
  const ConfigKey* k = find_key(key);
  return k && k->default_value.has_value();
}

std::string RunConfig::get(const std::string& key) const {
  if (const auto it = values_.find(key); it != values_.end()) return it->second;
  const ConfigKey* k = find_key(key);
  if (!k) detail::fail("unknown config key '" + key + "'");
  if (!k->default_value) detail::fail("missing config key '" + key + "' (" + k->help + ")");
  return *k->default_value;
}

double RunConfig::get_double(const std::string& key) const { return to_double(key, get(key)); }

int RunConfig::get_int(const std::string& key) const {
  const long long v = to_integer(key, get(key));
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    detail::fail("config key '" + key + "': integer out of range");
  }
  return static_cast<int>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string text = get(key);
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    detail::fail("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  detail::fail("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) out.push_back(to_double(key, item));
  return out;
}

std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(get(key))) out.push_back(static_cast<int>(to_integer(key, item)));
  return out;
}

std::string RunConfig::dump() const {
  std::vector<std::string> lines;
  for (const auto& k : config_keys()) {
    if (has(k.name)) lines.push_back(k.name + " = " + get(k.name));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

// ---------------------------------------------------------------------------

ProcessSpec process_spec(const RunConfig& cfg) {
  ProcessSpec spec;
  spec.kind = parse_process_kind(cfg.get("process.kind"));
  spec.horizon = cfg.get_double("process.horizon");
  spec.endpoint = cfg.get_double("process.endpoint");
  if (spec.kind == ProcessKind::ar) {
    spec.phi = cfg.get_doubles("process.phi");
    spec.sigma = cfg.get_double("process.sigma");
    spec.warmup = cfg.get_int("process.warmup");
  }
  validate(spec);
  return spec;
}

Architecture architecture(const RunConfig& cfg) {
  Architecture a;
  a.backbone = parse_backbone(cfg.get("model.backbone"));
  a.K = cfg.get_int("model.K");
  a.D = 1;
  a.context_length = cfg.get_int("data.context_length");
  a.horizon = cfg.get_int("data.horizon");
  a.hidden_width = cfg.get_int("model.hidden_width");
  a.hidden_layers = cfg.get_int("model.hidden_layers");
  a.score_heads = cfg.get_bool("model.score_heads");
  a.time_feature = cfg.get_bool("model.time_feature");
  validate(a);
  return a;
}

LossConfig loss_config(const RunConfig& cfg) {
  LossConfig l;
  l.variant = parse_loss_variant(cfg.get("loss.variant"));
  l.epsilon = cfg.get_double("loss.epsilon");
  l.t0 = cfg.get_double("loss.t0");
  l.rho = cfg.get_double("loss.rho");
  l.t_lim = cfg.get_double("loss.t_lim");
  l.beta = cfg.get_double("loss.beta");
  l.divide_by_horizon = cfg.get_bool("loss.divide_by_horizon");
  validate(l);
  return l;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.lr = cfg.get_double("train.lr");
  t.batch = cfg.get_int("train.batch");
  t.iterations = cfg.get_int("train.iterations");
  t.steps_per_epoch = cfg.get_int("train.steps_per_epoch");
  t.scaler = parse_scaler_kind(cfg.get("train.scaler"));
  t.clip_norm = cfg.get_double("train.clip_norm");
  t.lr_on_plateau = cfg.get_bool("train.lr_on_plateau");
  t.plateau_factor = cfg.get_double("train.plateau_factor");
  t.plateau_patience = cfg.get_int("train.plateau_patience");
  t.log_every = cfg.get_int("train.log_every");
  validate(t);
  return t;
}

}  // namespace mclq
