// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pathvit {

/// counts[t][p]: rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::int64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  std::int64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(std::size_t truth) const;
  std::int64_t col_sum(std::size_t pred) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::int64_t> counts_;
};

/// Throws DataError on an out-of-range label or length mismatch.
ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t classes);

/// Percent. Throws ContractError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

enum class Averaging { kMacro, kWeighted };

/// Percentages. A class whose denominator is zero scores 0 and is flagged.
struct PrecisionRecall {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<bool> precision_undefined;
  std::vector<bool> recall_undefined;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;

  double averaged_precision(Averaging a) const { return a == Averaging::kMacro ? macro_precision : weighted_precision; }
  double averaged_recall(Averaging a) const { return a == Averaging::kMacro ? macro_recall : weighted_recall; }
};

PrecisionRecall precision_recall(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// Points in descending threshold order, starting at (0,0) with an infinite
/// threshold and ending at (1,1). auc is a fraction in [0,1].
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Binary curve from a threshold sweep over the distinct scores. Empty when
/// either side has no members.
std::optional<RocCurve> roc_curve(std::span<const double> scores, std::span<const bool> positive);

struct RocSummary {
  /// Absent for classes with no positives or no negatives.
  std::vector<std::optional<RocCurve>> per_class;
  /// Over defined classes; absent when none is defined.
  std::optional<double> macro_auc;
  std::optional<double> weighted_auc;
};

/// One-vs-rest curves. scores is row-major n x classes. Throws ContractError
/// when n < 2 and DataError on a bad label or size.
RocSummary roc_auc_ovr(std::span<const double> scores, std::size_t classes, std::span<const int> y_true);

struct ClassMetrics {
  std::string name;
  std::int64_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  std::optional<double> auc;
};

/// Everything derived from one set of predictions. Rates are percentages.
struct MetricsReport {
  std::vector<std::string> class_names;
  std::size_t samples = 0;
  double loss = 0.0;
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  std::optional<double> macro_auc;
  std::optional<double> weighted_auc;
  std::vector<ClassMetrics> per_class;
  std::vector<std::optional<RocCurve>> roc;
};

/// probs is row-major n x C. loss is the mean negative log-probability of the
/// true class, with probabilities floored at the smallest normal double.
MetricsReport make_report(std::span<const double> probs, std::span<const int> y_true,
                          const std::vector<std::string>& class_names);

/// Cellwise and metricwise means over folds.
struct MeanReport {
  std::vector<std::string> class_names;
  std::size_t folds = 0;
  std::vector<double> confusion;  // C x C mean counts
  double loss = 0.0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  std::optional<double> macro_auc;
  std::optional<double> weighted_auc;
  std::vector<double> precision;
  std::vector<double> recall;
  /// Mean over the folds where the class AUC was defined.
  std::vector<std::optional<double>> auc;
};

/// Throws ContractError on an empty list or differing class names.
MeanReport mean_report(std::span<const MetricsReport> folds);

std::string metrics_json(const MetricsReport& report);
std::string metrics_json(const MeanReport& report);
std::string confusion_csv(const MetricsReport& report);
std::string roc_csv(const MetricsReport& report);

/// metrics.json, confusion.csv and roc.csv under dir.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace pathvit
