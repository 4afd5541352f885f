// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pathvit/image.hpp"

namespace pathvit {

struct LabeledItem {
  ImageTensor image;
  int label;
  std::string source;
};

/// Ordered (image, label) pairs over a fixed list of class names.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::vector<std::string> class_names);

  /// Throws DataError if label is outside [0, num_classes()) or the image
  /// size differs from earlier items.
  void add(ImageTensor image, int label, std::string source = {});

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t num_classes() const { return class_names_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const LabeledItem& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<LabeledItem>& items() const { return items_; }
  std::vector<int> labels() const;
  /// Count of items per class.
  std::vector<std::size_t> supports() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> class_names_;
  std::vector<LabeledItem> items_;
};

enum class SplitKind { kHoldout, kKFold };

/// Per-item partition ids. Holdout: 0 = train, 1 = test. K-fold: fold index.
struct SplitPlan {
  SplitKind kind = SplitKind::kHoldout;
  double train_fraction = 0.8;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;

  std::size_t parts() const { return kind == SplitKind::kHoldout ? 2 : folds; }
  std::vector<std::size_t> members(std::size_t part) const;
};

/// Stratified train/test assignment. The train count is
/// round(train_fraction * n), and every class contributes within one item of
/// its proportional share. Throws ConfigError unless 0 < train_fraction < 1.
SplitPlan make_holdout_plan(std::span<const int> labels, double train_fraction, std::uint64_t seed);

/// Stratified k-fold assignment: fold sizes differ by at most one, and so do
/// any one class's counts across folds. Throws ConfigError if k < 2 or k > n.
SplitPlan make_kfold_plan(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct Partition {
  LabeledDataset train;
  LabeledDataset test;
};

/// Holdout plans: the plan's train/test sides. K-fold plans: fold `part` is
/// the test side and all other folds form the train side.
Partition split(const LabeledDataset& ds, const SplitPlan& plan, std::size_t part = 0);

/// Seeded permutation of [0, n) cut into consecutive batches; the last batch
/// may be short.
std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed);

struct Batch {
  Tensor images;  // [B, 3, S, S]
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices);
std::vector<Batch> batches(const LabeledDataset& ds, std::size_t batch_size, std::uint64_t seed);

/// Reads `<root>/<class_name>/*.{png,jpg,jpeg}`. Classes are the
/// subdirectories in lexicographic order; each image is normalized and
/// resized to image_size. When expected_classes is non-empty the folder must
/// hold exactly those classes.
///
/// Errors: ContractError when root has no class folders, ConfigError for an
/// empty class folder or a class-list mismatch, FormatError for an
/// undecodable image.
LabeledDataset load_image_folder(const std::filesystem::path& root, std::size_t image_size,
                                 const std::vector<std::string>& expected_classes = {});

}  // namespace pathvit
