// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathvit/tiling.hpp"
#include "pathvit/trainer.hpp"
#include "pathvit/vit.hpp"
#include "pathvit/weights.hpp"

namespace pathvit {

/// Everything a command needs, resolved from defaults, an optional config
/// file and command-line overrides (in that order of precedence).
struct RunConfig {
  ViTConfig vit;
  TrainConfig train;
  /// 0 infers the class count from the dataset; otherwise it must match.
  std::size_t num_classes = 0;
  /// 0 selects a holdout split of train_fraction; k >= 2 selects k-fold.
  std::size_t folds = 0;
  double train_fraction = 0.8;
  std::filesystem::path data_root;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  /// Optional weight container whose backbone seeds training.
  std::filesystem::path init_weights;
  DType weights_dtype = DType::kF64;
  TilingOptions tiling;

  /// Range checks on every field. Throws ConfigError.
  void validate() const;
  /// validate() plus existence of data_root and init_weights.
  void validate_paths() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every recognised key, in the order used when writing a config.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Throws ConfigError naming the key on an
/// unknown key or unparsable value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_setting(const RunConfig& cfg, const std::string& key);

/// Flat `key = value` lines; `#` starts a comment line; blank lines are
/// skipped. Later assignments win. Errors name source and line.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key with its resolved value; parsing it back reproduces cfg.
std::string to_config_text(const RunConfig& cfg);

}  // namespace pathvit
