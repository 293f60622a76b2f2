#include "mclq/io.hpp"

#include "mclq/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mclq::io {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void ensure_directory(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    detail::fail("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) detail::fail("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) detail::fail("write to " + path.string() + " failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    detail::fail(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Trajectories

std::string trajectory_csv(const Trajectory& traj) {
  std::string s = "t";
  for (Index d = 0; d < traj.dim(); ++d) s += ",d" + std::to_string(d);
  s += '\n';
  for (Index j = 0; j < traj.length(); ++j) {
    s += format_double(traj.time(j));
    for (Index d = 0; d < traj.dim(); ++d) s += ',' + format_double(traj.values(d, j));
    s += '\n';
  }
  return s;
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj) {
  write_text(path, trajectory_csv(traj));
}

namespace {

double parse_double(const std::string& field, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    detail::fail(path.string() + ":" + std::to_string(line) + ": not a number: '" + field + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

Trajectory read_trajectory_csv(const fs::path& path, double fallback_dt) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) detail::fail(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "t") {
    detail::fail(path.string() + ": header must be t,d0,...");
  }
  for (std::size_t d = 1; d < header.size(); ++d) {
    if (header[d] != "d" + std::to_string(d - 1)) {
      detail::fail(path.string() + ": unexpected column '" + header[d] + "'");
    }
  }
  const std::size_t D = header.size() - 1;
  std::vector<double> times;
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line, ',');
    if (fields.size() != D + 1) {
      detail::fail(path.string() + ":" + std::to_string(line_no) + ": expected " +
                   std::to_string(D + 1) + " fields, got " + std::to_string(fields.size()));
    }
    times.push_back(parse_double(fields[0], path, line_no));
    for (std::size_t d = 0; d < D; ++d) flat.push_back(parse_double(fields[d + 1], path, line_no));
  }
  if (times.empty()) detail::fail(path.string() + ": no data rows");
  Trajectory traj;
  traj.values = Eigen::Map<Eigen::MatrixXd>(flat.data(), static_cast<Index>(D),
                                            static_cast<Index>(times.size()));
  traj.t_start = times.front();
  traj.dt = times.size() > 1 ? (times.back() - times.front()) / static_cast<double>(times.size() - 1)
                             : fallback_dt;
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (std::abs(times[j] - traj.time(static_cast<Index>(j))) > 1e-9 * std::max(1.0, std::abs(times[j]))) {
      detail::fail(path.string() + ": time grid is not uniform at row " + std::to_string(j + 1));
    }
  }
  validate(traj);
  return traj;
}

// ---------------------------------------------------------------------------
// Matrices

namespace {

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const json& rows, Index R, Index C, const std::string& what) {
  if (!rows.is_array() || static_cast<Index>(rows.size()) != R) {
    detail::fail(what + ": expected " + std::to_string(R) + " rows");
  }
  Eigen::MatrixXd m(R, C);
  for (Index r = 0; r < R; ++r) {
    const json& row = rows[r];
    if (!row.is_array() || static_cast<Index>(row.size()) != C) {
      detail::fail(what + ": expected " + std::to_string(C) + " columns in row " + std::to_string(r));
    }
    for (Index c = 0; c < C; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

template <typename T>
T field(const json& doc, const std::string& key, const std::string& what) {
  if (!doc.contains(key)) detail::fail(what + ": missing field '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    detail::fail(what + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Codebooks

json codebook_to_json(const Codebook& codebook, const std::string& anchor) {
  validate(codebook);
  json doc;
  doc["D"] = codebook.dim();
  doc["Lp"] = codebook.length();
  doc["dt"] = codebook.dt;
  doc["weights"] = codebook.weights;
  json cvs = json::array();
  for (const auto& c : codebook.codevectors) cvs.push_back(matrix_rows(c));
  doc["codevectors"] = std::move(cvs);
  doc["anchor"] = anchor;
  return doc;
}

StoredCodebook codebook_from_json(const json& doc) {
  const std::string what = "codebook";
  StoredCodebook out;
  const auto D = field<Index>(doc, "D", what);
  const auto Lp = field<Index>(doc, "Lp", what);
  out.codebook.dt = field<double>(doc, "dt", what);
  if (doc.contains("weights")) out.codebook.weights = field<std::vector<double>>(doc, "weights", what);
  const json& cvs = doc.contains("codevectors") ? doc.at("codevectors") : json();
  if (!cvs.is_array()) detail::fail(what + ": missing field 'codevectors'");
  for (std::size_t k = 0; k < cvs.size(); ++k) {
    out.codebook.codevectors.push_back(
        matrix_from_rows(cvs[k], D, Lp, what + " codevector " + std::to_string(k)));
  }
  if (doc.contains("anchor")) out.anchor = field<std::string>(doc, "anchor", what);
  if (out.anchor != "none" && out.anchor != "last_context") {
    detail::fail(what + ": anchor must be none or last_context");
  }
  validate(out.codebook);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

json checkpoint_to_json(const Checkpoint& ckpt) {
  const Architecture& a = ckpt.params.arch;
  json doc;
  doc["schema"] = "mclq.checkpoint";
  doc["schema_version"] = kCheckpointSchema;
  doc["precision"] = ckpt.precision;
  doc["scaler"] = to_string(ckpt.scaler);
  doc["dt"] = ckpt.dt;
  doc["architecture"] = {{"backbone", to_string(a.backbone)},
                         {"K", a.K},
                         {"D", a.D},
                         {"context_length", a.context_length},
                         {"horizon", a.horizon},
                         {"hidden_width", a.hidden_width},
                         {"hidden_layers", a.hidden_layers},
                         {"score_heads", a.score_heads},
                         {"time_feature", a.time_feature}};
  json tensors = json::object();
  const ModelParams<double>& p = ckpt.params;
  auto put = [&](const std::string& name, const Eigen::MatrixXd& m) {
    if (m.size() == 0) return;
    tensors[name] = {{"rows", m.rows()},
                     {"cols", m.cols()},
                     {"data", std::vector<double>(m.data(), m.data() + m.size())}};
  };
  for (std::size_t l = 0; l < p.layer_weights.size(); ++l) {
    put("mlp." + std::to_string(l) + ".weight", p.layer_weights[l]);
    put("mlp." + std::to_string(l) + ".bias", p.layer_biases[l]);
  }
  put("rnn.input_weight", p.input_weights);
  put("rnn.recurrent_weight", p.recurrent_weights);
  put("rnn.bias", p.recurrent_bias);
  put("rnn.initial_state", p.initial_state);
  put("heads.weight", p.head_weights);
  put("heads.bias", p.head_bias);
  put("scores.weight", p.score_weights);
  put("scores.bias", p.score_bias);
  doc["tensors"] = std::move(tensors);
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  const std::string what = "checkpoint";
  if (field<std::string>(doc, "schema", what) != "mclq.checkpoint") {
    detail::fail(what + ": not a checkpoint document");
  }
  const int version = field<int>(doc, "schema_version", what);
  if (version != kCheckpointSchema) {
    detail::fail(what + ": unsupported schema_version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.precision = field<std::string>(doc, "precision", what);
  if (ckpt.precision != "float32" && ckpt.precision != "float64") {
    detail::fail(what + ": precision must be float32 or float64");
  }
  ckpt.scaler = parse_scaler_kind(field<std::string>(doc, "scaler", what));
  ckpt.dt = field<double>(doc, "dt", what);

  const json a = field<json>(doc, "architecture", what);
  Architecture arch;
  arch.backbone = parse_backbone(field<std::string>(a, "backbone", what));
  arch.K = field<int>(a, "K", what);
  arch.D = field<int>(a, "D", what);
  arch.context_length = field<int>(a, "context_length", what);
  arch.horizon = field<int>(a, "horizon", what);
  arch.hidden_width = field<int>(a, "hidden_width", what);
  arch.hidden_layers = field<int>(a, "hidden_layers", what);
  arch.score_heads = field<bool>(a, "score_heads", what);
  arch.time_feature = field<bool>(a, "time_feature", what);

  // Shapes come from a freshly initialized model; stored values overwrite them.
  ckpt.params = init_params<double>(arch, 0);
  const json tensors = field<json>(doc, "tensors", what);
  std::size_t used = 0;
  for (auto& [name, t] : ckpt.params.tensors()) {
    if (!tensors.contains(name)) detail::fail(what + ": missing tensor '" + name + "'");
    const json& entry = tensors.at(name);
    const auto data = field<std::vector<double>>(entry, "data", what + " tensor " + name);
    if (static_cast<Index>(data.size()) != t.size()) {
      detail::fail(what + ": tensor '" + name + "' expected " + std::to_string(t.size()) +
                   " values, got " + std::to_string(data.size()));
    }
    t = Eigen::Map<const Eigen::VectorXd>(data.data(), t.size());
    ++used;
  }
  if (used != tensors.size()) detail::fail(what + ": unexpected extra tensors");
  return ckpt;
}

// ---------------------------------------------------------------------------
// Forecasts, histories, metrics

json forecast_to_json(const Forecast& forecast) {
  json doc;
  doc["K"] = forecast.size();
  doc["D"] = forecast.dim();
  doc["Lp"] = forecast.length();
  doc["dt"] = forecast.dt;
  doc["t_start"] = forecast.t_start;
  doc["scores"] = forecast.normalized_scores();
  doc["raw_scores"] = forecast.scores;
  json hyps = json::array();
  for (const auto& h : forecast.hypotheses) hyps.push_back(matrix_rows(h));
  doc["hypotheses"] = std::move(hyps);
  return doc;
}

void write_forecast(const fs::path& dir, const Forecast& forecast) {
  ensure_directory(dir);
  write_json(dir / "forecast.json", forecast_to_json(forecast));
  for (int k = 0; k < forecast.size(); ++k) {
    write_trajectory_csv(dir / ("hypothesis_" + std::to_string(k) + ".csv"), forecast.hypothesis(k));
  }
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string s = "step,wta_term,score_term,temperature,total\n";
  for (const auto& r : history) {
    s += std::to_string(r.step) + ',' + format_double(r.wta_term) + ',' +
         format_double(r.score_term) + ',' + format_double(r.temperature) + ',' +
         format_double(r.total) + '\n';
  }
  return s;
}

json metrics_to_json(const MetricsReport& report) {
  return {{"distortion", report.distortion},
          {"rmse", report.rmse},
          {"crps_sum", report.crps_sum},
          {"total_variation", report.total_variation}};
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  const bool labelled = rows.size() > 1;
  std::string s = labelled ? "source,distortion,rmse,crps_sum,total_variation\n"
                           : "distortion,rmse,crps_sum,total_variation\n";
  for (const auto& [label, r] : rows) {
    if (labelled) s += label + ',';
    s += format_double(r.distortion) + ',' + format_double(r.rmse) + ',' +
         format_double(r.crps_sum) + ',' + format_double(r.total_variation) + '\n';
  }
  return s;
}

}  // namespace mclq::io
