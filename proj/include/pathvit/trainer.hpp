// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pathvit/dataset.hpp"
#include "pathvit/metrics.hpp"
#include "pathvit/optim.hpp"
#include "pathvit/vit.hpp"
#include "pathvit/weights.hpp"

namespace pathvit {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  double weight_decay = 0.0;
  double max_grad_norm = 0.0;
  /// When positive, this share of the training partition is held out for
  /// model selection instead of monitoring the test partition.
  double validation_fraction = 0.0;

  /// Throws ConfigError.
  void validate() const;
  AdamOptions adam() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Rates are percentages.
struct TrainLogRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_loss = 0.0;
  double eval_acc = 0.0;
  double wall_ms = 0.0;
};

/// One JSON object per line with keys in field order.
std::string to_json_line(const TrainLogRecord& record);
TrainLogRecord parse_json_line(const std::string& line);

/// Tracks the best eval accuracy. Only a strictly greater accuracy counts as
/// an improvement; ties advance the patience counter.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's accuracy and returns true if it is a new best.
  bool update(double accuracy);
  bool should_stop() const { return bad_epochs_ >= patience_; }

  std::size_t epochs() const { return epochs_; }
  /// 1-based epoch of the best accuracy; 0 before any update.
  std::size_t best_epoch() const { return best_epoch_; }
  double best_accuracy() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct TrainResult {
  /// Snapshot taken at best_epoch; the initial weights if no epoch finished.
  ModelParams best_params;
  std::size_t best_epoch = 0;
  double best_eval_accuracy = 0.0;
  std::vector<TrainLogRecord> log;
  std::size_t steps = 0;
  bool diverged = false;
  std::string error;
};

struct EpochOutcome {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_loss = 0.0;
  double eval_acc = 0.0;
  std::size_t steps = 0;
};

using EpochFn = std::function<EpochOutcome(std::size_t epoch, ModelParams& params)>;
using EpochCallback = std::function<void(const TrainLogRecord&)>;

/// Epoch loop with early stopping and best-checkpoint selection; the work of
/// an epoch is supplied by run_epoch. A NumericError from run_epoch ends the
/// loop with diverged set.
TrainResult train_loop(ModelParams params, std::size_t max_epochs, std::size_t patience, const EpochFn& run_epoch,
                       const EpochCallback& on_epoch = {});

/// Row-major n x C class probabilities without recording gradients.
std::vector<double> predict_probs(const ModelParams& params, const ViTConfig& cfg, const LabeledDataset& ds);

/// Single pass over ds. Throws ConfigError if the model's class count differs
/// from the dataset's and ContractError on an empty dataset.
MetricsReport evaluate(const ModelParams& params, const ViTConfig& cfg, const LabeledDataset& ds);

/// Adam on mean cross-entropy, monitoring accuracy on eval. Throws
/// ContractError on an empty partition and ConfigError on a class-count
/// mismatch.
TrainResult train(const LabeledDataset& train_set, const LabeledDataset& eval_set, ModelParams params,
                  const ViTConfig& cfg, const TrainConfig& tc, const EpochCallback& on_epoch = {});

struct HoldoutResult {
  SplitPlan plan;
  TrainResult training;
  MetricsReport test_report;
};

HoldoutResult run_holdout(const LabeledDataset& ds, double train_fraction, ModelParams params, const ViTConfig& cfg,
                          const TrainConfig& tc, const EpochCallback& on_epoch = {});

struct FoldResult {
  TrainResult training;
  MetricsReport report;
};

struct KFoldResult {
  SplitPlan plan;
  std::vector<FoldResult> folds;
  MeanReport mean;
};

using ModelFactory = std::function<ModelParams(std::size_t fold)>;
using FoldEpochCallback = std::function<void(std::size_t fold, const TrainLogRecord&)>;

/// Trains a fresh model from factory(fold) on each fold's complement and
/// reports on the fold. Fold f trains with seed derive_seed(tc.seed, f).
KFoldResult run_kfold(const LabeledDataset& ds, std::size_t k, const ModelFactory& factory, const ViTConfig& cfg,
                      const TrainConfig& tc, const FoldEpochCallback& on_epoch = {});

struct CheckpointInfo {
  ViTConfig vit;
  TrainConfig train;
  SplitKind split_kind = SplitKind::kHoldout;
  double train_fraction = 0.8;
  std::size_t folds = 0;
  std::optional<std::size_t> fold;
  std::uint64_t split_seed = 0;
  std::size_t epoch = 0;
  double eval_accuracy = 0.0;
  std::vector<std::string> class_names;
};

/// The JSON file beside a weight container: model.bin pairs with model.json.
std::filesystem::path sidecar_path(const std::filesystem::path& weights_path);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointInfo& info,
                     DType dtype = DType::kF64);

struct Checkpoint {
  ModelParams params;
  CheckpointInfo info;
};

/// Throws DataError/FormatError on a missing or malformed pair of files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pathvit
