#pragma once

// Flat `key = value` configuration with optional [section] prefixes:
//
//   # comment
//   [train]
//   learning_rate = 0.002      # becomes train.learning_rate
//   loss_weighting = "sample"
//
// Every key must be known; errors carry source:line:column.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtgr/datagen.hpp"
#include "mtgr/model.hpp"
#include "mtgr/trainer.hpp"

namespace mtgr {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::string source;
  int line = 0;
  int column = 0;

  std::string where() const { return source + ":" + std::to_string(line) + ":" + std::to_string(column); }
};

class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text, const std::string& source = "<config>");
  static ConfigFile load(const std::filesystem::path& path);

  /// "key=value" from the command line; later entries win.
  void add_override(std::string_view assignment);

  const std::vector<ConfigEntry>& entries() const { return entries_; }

 private:
  std::vector<ConfigEntry> entries_;
};

struct FlopsBenchConfig {
  std::size_t n_profile = 8;
  std::size_t static_len = 1000;
  std::size_t realtime_len = 100;
  std::size_t candidates = 10;
};

struct RunConfig {
  GenConfig gen;
  ModelConfig model;
  TrainConfig train;
  FlopsBenchConfig flops;

  std::string data_dir = "data";
  /// Empty means data_dir/train.jsonl and data_dir/test.jsonl.
  std::string train_path;
  std::string test_path;
  std::string run_dir = "run";
  /// Replace cross-feature ids by a seeded permutation (ablation).
  bool shuffle_cross = false;
  std::string checkpoint;  // eval: empty means run_dir/checkpoint
  std::string report;      // eval: empty means run_dir/eval.json

  /// inspect-mask: "interleaved" or a JSONL path, sample index, output file.
  std::string mask_source = "interleaved";
  std::size_t mask_index = 0;
  std::string mask_out = "mask.txt";

  /// Feature lists; empty means inferred from the training data.
  std::vector<std::string> schema_profile, schema_sequence, schema_candidate, schema_cross;

  std::string resolved_train_path() const;
  std::string resolved_test_path() const;
};

/// Applies entries in order to a default RunConfig. Unknown keys and
/// malformed values throw ConfigError with the entry's location.
RunConfig build_run_config(const ConfigFile& file);

/// Every key with its current value, one `key = value` line each; parsing
/// it back yields the same RunConfig.
std::string snapshot(const RunConfig& cfg);

/// Known keys with one-line descriptions (for docs and --help).
std::vector<std::pair<std::string, std::string>> config_keys();

}  // namespace mtgr
