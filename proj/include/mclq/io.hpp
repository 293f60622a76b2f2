#pragma once

#include "mclq/forecast.hpp"
#include "mclq/metrics.hpp"
#include "mclq/network.hpp"
#include "mclq/oracles.hpp"
#include "mclq/training.hpp"
#include "mclq/trajectory.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mclq::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
/// Creates the directory (and parents); UsageError when that is impossible.
void ensure_directory(const fs::path& dir);

// Trajectory CSV: header "t,d0,...,d{D-1}", one row per time step.
std::string trajectory_csv(const Trajectory& traj);
void write_trajectory_csv(const fs::path& path, const Trajectory& traj);
/// dt is read from the t column; a single-row file uses `fallback_dt`.
Trajectory read_trajectory_csv(const fs::path& path, double fallback_dt = 1.0);

// Codebook JSON: {"D", "Lp", "dt", "weights", "codevectors": [k][d][t], "anchor"}.
// anchor = "last_context" marks codevectors expressed relative to the last context value.
struct StoredCodebook {
  Codebook codebook;
  std::string anchor = "none";
};
json codebook_to_json(const Codebook& codebook, const std::string& anchor = "none");
StoredCodebook codebook_from_json(const json& doc);

/// A trained model with what is needed to use it.
struct Checkpoint {
  ModelParams<double> params;       // float32 models are stored exactly in double
  std::string precision = "float64";  // float32 | float64
  ScalerKind scaler = ScalerKind::none;
  double dt = 1.0;  // grid spacing of the training data
};

inline constexpr int kCheckpointSchema = 1;

json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const json& doc);

json forecast_to_json(const Forecast& forecast);
/// forecast.json plus hypothesis_<k>.csv in `dir`.
void write_forecast(const fs::path& dir, const Forecast& forecast);

std::string history_csv(const std::vector<HistoryRow>& history);

json metrics_to_json(const MetricsReport& report);
/// Header row with the four metric names, then one row per report.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& doc);

}  // namespace mclq::io
