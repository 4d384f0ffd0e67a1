#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fire/model.hpp"
#include "fire/text.hpp"
#include "fire/trainer.hpp"

namespace fire {

/// Flat `key = value` settings. Blank lines and lines starting with '#' are
/// ignored; later assignments win.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "config");
  static KeyValueConfig load(const std::string& path);

  /// Parses "key=value"; throws ConfigError otherwise.
  void set_assignment(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.contains(key); }
  /// Throws ConfigError naming the key when it is absent.
  const std::string& require(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct Preset {
  std::string name;
  PaddingLimits limits;
  real gamma = 0.3;
  std::size_t batch_size = 16;
  std::size_t iterations = 3;
};

/// persona-original, persona-revised or cmudog.
Preset preset_by_name(const std::string& name);

struct RunConfig {
  std::string preset;
  ModelConfig model;
  TrainConfig train;
  PaddingLimits limits;
  CorpusFormat format = CorpusFormat::kCanonicalJsonl;
  std::string train_data;
  std::string valid_data;
  std::string pretrained_embeddings;
  std::string task_embeddings;
  std::string checkpoint;
  std::string metrics;
  std::size_t min_count = 1;

  /// Every effective setting as key=value lines.
  std::vector<std::string> describe() const;
};

/// Applies the preset, then every other key. Keys needed for training are
/// required; unknown keys are rejected.
RunConfig resolve_run_config(const KeyValueConfig& config);

}  // namespace fire
