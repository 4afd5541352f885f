// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "pathvit/errors.hpp"
#include "pathvit/random.hpp"

namespace pathvit {

namespace fs = std::filesystem;

LabeledDataset::LabeledDataset(std::vector<std::string> class_names) : class_names_(std::move(class_names)) {}

void LabeledDataset::add(ImageTensor image, int label, std::string source) {
  if (label < 0 || static_cast<std::size_t>(label) >= class_names_.size()) {
    throw DataError("dataset: label " + std::to_string(label) + " outside [0," + std::to_string(class_names_.size()) +
                    ")");
  }
  if (!items_.empty() && items_.front().image.tensor().shape() != image.tensor().shape()) {
    throw DataError("dataset: image " + to_string(image.tensor().shape()) + " differs from " +
                    to_string(items_.front().image.tensor().shape()));
  }
  items_.push_back({std::move(image), label, std::move(source)});
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.label);
  return out;
}

std::vector<std::size_t> LabeledDataset::supports() const {
  std::vector<std::size_t> counts(class_names_.size(), 0);
  for (const auto& item : items_) ++counts[static_cast<std::size_t>(item.label)];
  return counts;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out(class_names_);
  out.items_.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= items_.size()) throw ContractError("subset: index out of range");
    out.items_.push_back(items_[i]);
  }
  return out;
}

std::vector<std::size_t> SplitPlan::members(std::size_t part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == part) out.push_back(i);
  return out;
}

namespace {

// Items grouped by ascending label, each group in seeded random order.
std::vector<std::size_t> stratified_order(std::span<const int> labels, std::uint64_t seed) {
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw DataError("split: negative label " + std::to_string(l));
    max_label = std::max(max_label, l);
  }
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) groups[static_cast<std::size_t>(labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> order;
  order.reserve(labels.size());
  for (auto& g : groups) {
    rng.shuffle(std::span<std::size_t>(g));
    order.insert(order.end(), g.begin(), g.end());
  }
  return order;
}

}  // namespace

SplitPlan make_holdout_plan(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0,1), got " + std::to_string(train_fraction));
  }
  SplitPlan plan;
  plan.kind = SplitKind::kHoldout;
  plan.train_fraction = train_fraction;
  plan.seed = seed;
  const std::size_t n = labels.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  plan.assignments.assign(n, 1);
  // Bresenham selection over the class-grouped order: every contiguous run,
  // and so every class, gets floor or ceil of its proportional share.
  const auto order = stratified_order(labels, seed);
  for (std::size_t j = 0; j < n; ++j) {
    if ((j + 1) * n_train / n > j * n_train / n) plan.assignments[order[j]] = 0;
  }
  return plan;
}

SplitPlan make_kfold_plan(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2, got " + std::to_string(k));
  if (k > labels.size()) {
    throw ConfigError("k-fold: k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(labels.size()));
  }
  SplitPlan plan;
  plan.kind = SplitKind::kKFold;
  plan.folds = k;
  plan.seed = seed;
  plan.assignments.assign(labels.size(), 0);
  const auto order = stratified_order(labels, seed);
  for (std::size_t j = 0; j < order.size(); ++j) plan.assignments[order[j]] = j % k;
  return plan;
}

Partition split(const LabeledDataset& ds, const SplitPlan& plan, std::size_t part) {
  if (plan.assignments.size() != ds.size()) {
    throw ContractError("split: plan covers " + std::to_string(plan.assignments.size()) + " items, dataset has " +
                        std::to_string(ds.size()));
  }
  if (part >= plan.parts()) throw ContractError("split: part " + std::to_string(part) + " out of range");
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool is_test = plan.kind == SplitKind::kHoldout ? plan.assignments[i] == 1 : plan.assignments[i] == part;
    (is_test ? test : train).push_back(i);
  }
  return {ds.subset(train), ds.subset(test)};
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < n; at += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, at + batch_size)));
  }
  return out;
}

Batch make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  const Shape& image_shape = ds[indices[0]].image.tensor().shape();
  const std::size_t stride = shape_numel(image_shape);
  std::vector<double> pixels;
  pixels.reserve(stride * indices.size());
  Batch batch;
  for (std::size_t i : indices) {
    auto px = ds[i].image.tensor().data();
    pixels.insert(pixels.end(), px.begin(), px.end());
    batch.labels.push_back(ds[i].label);
    batch.indices.push_back(i);
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), image_shape.begin(), image_shape.end());
  batch.images = Tensor::from(shape, std::move(pixels));
  return batch;
}

std::vector<Batch> batches(const LabeledDataset& ds, std::size_t batch_size, std::uint64_t seed) {
  std::vector<Batch> out;
  for (const auto& idx : batch_order(ds.size(), batch_size, seed)) out.push_back(make_batch(ds, idx));
  return out;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

LabeledDataset load_image_folder(const fs::path& root, std::size_t image_size,
                                 const std::vector<std::string>& expected_classes) {
  if (!fs::is_directory(root)) throw ContractError(root.string() + ": not a directory");
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw ContractError(root.string() + ": no class folders");
  if (!expected_classes.empty() && classes != expected_classes) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& c : v) s += (s.empty() ? "" : ",") + c;
      return s;
    };
    throw ConfigError(root.string() + ": dataset has " + std::to_string(classes.size()) + " classes (" +
                      join(classes) + "), model expects " + std::to_string(expected_classes.size()) + " (" +
                      join(expected_classes) + ")");
  }
  LabeledDataset ds(classes);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / classes[c]))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError((root / classes[c]).string() + ": class folder has no images");
    for (const auto& f : files) {
      ds.add(resize(normalize(read_image(f)), image_size), static_cast<int>(c),
             classes[c] + "/" + f.filename().string());
    }
  }
  return ds;
}

}  // namespace pathvit
