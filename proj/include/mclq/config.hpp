#pragma once

#include "mclq/network.hpp"
#include "mclq/processes.hpp"
#include "mclq/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mclq {

/// A known configuration key. Keys without a default are required by the commands
/// that read them.
struct ConfigKey {
  std::string name;
  std::optional<std::string> default_value;
  std::string help;
};

/// Every accepted key, grouped by section prefix (process., data., model., loss.,
/// train., oracle., eval., synth.) plus the global `seed`.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` document. Blank lines and text after '#' are ignored.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();

  /// Sets a key; UsageError if the key is unknown.
  void set(const std::string& key, const std::string& value);
  /// Keys set in `other` replace the ones here.
  void merge(const RunConfig& other);

  bool has(const std::string& key) const;
  /// Explicit value, else the default; UsageError naming the key if neither exists.
  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  /// Every key with a value (explicit or default), one per line, sorted.
  std::string dump() const;

  const std::map<std::string, std::string>& explicit_values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

ProcessSpec process_spec(const RunConfig& cfg);
Architecture architecture(const RunConfig& cfg);
LossConfig loss_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);

}  // namespace mclq
