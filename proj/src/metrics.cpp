// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "json.hpp"

#include "pathvit/errors.hpp"
#include "pathvit/format.hpp"
#include "pathvit/vit.hpp"

namespace pathvit {

using ordered_json = nlohmann::ordered_json;

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
  return s;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::int64_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::int64_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t) s += at(t, pred);
  return s;
}

namespace {

void check_label(int label, std::size_t classes, const char* what) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw DataError(std::string(what) + " label " + std::to_string(label) + " outside [0," + std::to_string(classes) +
                    ")");
  }
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t classes) {
  if (y_true.size() != y_pred.size()) {
    throw DataError("confusion: " + std::to_string(y_true.size()) + " labels vs " + std::to_string(y_pred.size()) +
                    " predictions");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    check_label(y_true[i], classes, "true");
    check_label(y_pred[i], classes, "predicted");
    ++cm.at(static_cast<std::size_t>(y_true[i]), static_cast<std::size_t>(y_pred[i]));
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw ContractError("accuracy of an empty confusion matrix");
  return 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
}

PrecisionRecall precision_recall(const ConfusionMatrix& cm) {
  const std::size_t c_count = cm.classes();
  PrecisionRecall pr;
  pr.precision.assign(c_count, 0.0);
  pr.recall.assign(c_count, 0.0);
  pr.precision_undefined.assign(c_count, false);
  pr.recall_undefined.assign(c_count, false);
  const auto total = static_cast<double>(cm.total());
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto diag = static_cast<double>(cm.at(c, c));
    const auto col = cm.col_sum(c);
    const auto row = cm.row_sum(c);
    if (col == 0) pr.precision_undefined[c] = true;
    else pr.precision[c] = 100.0 * diag / static_cast<double>(col);
    if (row == 0) pr.recall_undefined[c] = true;
    else pr.recall[c] = 100.0 * diag / static_cast<double>(row);
    pr.macro_precision += pr.precision[c];
    pr.macro_recall += pr.recall[c];
    if (total > 0) {
      const double w = static_cast<double>(row) / total;
      pr.weighted_precision += w * pr.precision[c];
      pr.weighted_recall += w * pr.recall[c];
    }
  }
  if (c_count > 0) {
    pr.macro_precision /= static_cast<double>(c_count);
    pr.macro_recall /= static_cast<double>(c_count);
  }
  return pr;
}

std::optional<RocCurve> roc_curve(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw DataError("roc_curve: scores and labels differ in length");
  std::size_t pos = 0;
  for (bool p : positive) pos += p ? 1 : 0;
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("roc_curve: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    const RocPoint next{threshold, static_cast<double>(fp) / static_cast<double>(neg),
                        static_cast<double>(tp) / static_cast<double>(pos)};
    const RocPoint& prev = curve.points.back();
    area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) * 0.5;
    curve.points.push_back(next);
  }
  curve.auc = area;
  return curve;
}

RocSummary roc_auc_ovr(std::span<const double> scores, std::size_t classes, std::span<const int> y_true) {
  const std::size_t n = y_true.size();
  if (n < 2) throw ContractError("roc_auc_ovr needs at least 2 samples, got " + std::to_string(n));
  if (scores.size() != n * classes) {
    throw DataError("roc_auc_ovr: " + std::to_string(scores.size()) + " scores for " + std::to_string(n) + " x " +
                    std::to_string(classes));
  }
  for (int y : y_true) check_label(y, classes, "true");

  RocSummary out;
  std::vector<double> column(n);
  double macro = 0.0;
  double weighted = 0.0;
  std::size_t defined = 0;
  std::size_t defined_support = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t support = 0;
    auto positive = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores[i * classes + c];
      positive[i] = y_true[i] == static_cast<int>(c);
      support += positive[i] ? 1 : 0;
    }
    auto curve = roc_curve(column, std::span<const bool>(positive.get(), n));
    if (curve) {
      macro += curve->auc;
      weighted += curve->auc * static_cast<double>(support);
      ++defined;
      defined_support += support;
    }
    out.per_class.push_back(std::move(curve));
  }
  if (defined > 0) {
    out.macro_auc = macro / static_cast<double>(defined);
    out.weighted_auc = weighted / static_cast<double>(defined_support);
  }
  return out;
}

MetricsReport make_report(std::span<const double> probs, std::span<const int> y_true,
                          const std::vector<std::string>& class_names) {
  const std::size_t c_count = class_names.size();
  const std::size_t n = y_true.size();
  if (n == 0) throw ContractError("report on an empty evaluation set");
  if (probs.size() != n * c_count) {
    throw ConfigError("report: model emits " + std::to_string(probs.size() / n) + " classes, dataset has " +
                      std::to_string(c_count));
  }
  MetricsReport r;
  r.class_names = class_names;
  r.samples = n;

  std::vector<int> y_pred(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = probs.subspan(i * c_count, c_count);
    y_pred[i] = static_cast<int>(predict(row));
    check_label(y_true[i], c_count, "true");
    loss -= std::log(std::max(row[static_cast<std::size_t>(y_true[i])], std::numeric_limits<double>::min()));
  }
  r.loss = loss / static_cast<double>(n);
  r.confusion = confusion(y_true, y_pred, c_count);
  r.accuracy = accuracy(r.confusion);
  const auto pr = precision_recall(r.confusion);
  r.macro_precision = pr.macro_precision;
  r.macro_recall = pr.macro_recall;
  r.weighted_precision = pr.weighted_precision;
  r.weighted_recall = pr.weighted_recall;

  std::optional<RocSummary> roc;
  if (n >= 2) roc = roc_auc_ovr(probs, c_count, y_true);
  if (roc) {
    if (roc->macro_auc) r.macro_auc = 100.0 * *roc->macro_auc;
    if (roc->weighted_auc) r.weighted_auc = 100.0 * *roc->weighted_auc;
    r.roc = roc->per_class;
  } else {
    r.roc.assign(c_count, std::nullopt);
  }
  for (std::size_t c = 0; c < c_count; ++c) {
    ClassMetrics m;
    m.name = class_names[c];
    m.support = r.confusion.row_sum(c);
    m.precision = pr.precision[c];
    m.recall = pr.recall[c];
    m.precision_undefined = pr.precision_undefined[c];
    m.recall_undefined = pr.recall_undefined[c];
    if (r.roc[c]) m.auc = 100.0 * r.roc[c]->auc;
    r.per_class.push_back(std::move(m));
  }
  return r;
}

MeanReport mean_report(std::span<const MetricsReport> folds) {
  if (folds.empty()) throw ContractError("mean_report over zero folds");
  const auto& names = folds.front().class_names;
  const std::size_t c_count = names.size();
  for (const auto& f : folds) {
    if (f.class_names != names) throw ContractError("mean_report: folds disagree on class names");
  }
  const auto k = static_cast<double>(folds.size());
  MeanReport m;
  m.class_names = names;
  m.folds = folds.size();
  m.confusion.assign(c_count * c_count, 0.0);
  m.precision.assign(c_count, 0.0);
  m.recall.assign(c_count, 0.0);
  std::vector<double> auc_sum(c_count, 0.0);
  std::vector<std::size_t> auc_n(c_count, 0);
  double macro_auc = 0.0;
  double weighted_auc = 0.0;
  std::size_t auc_folds = 0;
  for (const auto& f : folds) {
    for (std::size_t t = 0; t < c_count; ++t)
      for (std::size_t p = 0; p < c_count; ++p) m.confusion[t * c_count + p] += static_cast<double>(f.confusion.at(t, p));
    m.loss += f.loss;
    m.accuracy += f.accuracy;
    m.macro_precision += f.macro_precision;
    m.macro_recall += f.macro_recall;
    m.weighted_precision += f.weighted_precision;
    m.weighted_recall += f.weighted_recall;
    for (std::size_t c = 0; c < c_count; ++c) {
      m.precision[c] += f.per_class[c].precision;
      m.recall[c] += f.per_class[c].recall;
      if (f.per_class[c].auc) {
        auc_sum[c] += *f.per_class[c].auc;
        ++auc_n[c];
      }
    }
    if (f.macro_auc && f.weighted_auc) {
      macro_auc += *f.macro_auc;
      weighted_auc += *f.weighted_auc;
      ++auc_folds;
    }
  }
  for (double& v : m.confusion) v /= k;
  m.loss /= k;
  m.accuracy /= k;
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.weighted_precision /= k;
  m.weighted_recall /= k;
  for (std::size_t c = 0; c < c_count; ++c) {
    m.precision[c] /= k;
    m.recall[c] /= k;
    m.auc.push_back(auc_n[c] ? std::optional<double>(auc_sum[c] / static_cast<double>(auc_n[c])) : std::nullopt);
  }
  if (auc_folds > 0) {
    m.macro_auc = macro_auc / static_cast<double>(auc_folds);
    m.weighted_auc = weighted_auc / static_cast<double>(auc_folds);
  }
  return m;
}

namespace {

ordered_json pct(double v) { return round2(v); }

ordered_json pct(const std::optional<double>& v) { return v ? ordered_json(round2(*v)) : ordered_json(nullptr); }

ordered_json averaged(double macro, double weighted) {
  ordered_json j;
  j["macro"] = pct(macro);
  j["weighted"] = pct(weighted);
  return j;
}

ordered_json averaged(const std::optional<double>& macro, const std::optional<double>& weighted) {
  ordered_json j;
  j["macro"] = pct(macro);
  j["weighted"] = pct(weighted);
  return j;
}

}  // namespace

std::string metrics_json(const MetricsReport& r) {
  ordered_json j;
  j["class_names"] = r.class_names;
  j["samples"] = r.samples;
  j["loss"] = r.loss;
  j["accuracy"] = pct(r.accuracy);
  j["precision"] = averaged(r.macro_precision, r.weighted_precision);
  j["recall"] = averaged(r.macro_recall, r.weighted_recall);
  j["auc"] = averaged(r.macro_auc, r.weighted_auc);
  // Prec and Rec close to Acc in published tables implies support weighting.
  j["headline_averaging"] = "weighted";
  ordered_json per_class = ordered_json::array();
  for (const auto& c : r.per_class) {
    ordered_json e;
    e["name"] = c.name;
    e["support"] = c.support;
    e["precision"] = pct(c.precision);
    e["recall"] = pct(c.recall);
    e["precision_undefined"] = c.precision_undefined;
    e["recall_undefined"] = c.recall_undefined;
    e["auc"] = pct(c.auc);
    per_class.push_back(std::move(e));
  }
  j["per_class"] = std::move(per_class);
  ordered_json cm = ordered_json::array();
  for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
    ordered_json row = ordered_json::array();
    for (std::size_t p = 0; p < r.confusion.classes(); ++p) row.push_back(r.confusion.at(t, p));
    cm.push_back(std::move(row));
  }
  j["confusion"] = std::move(cm);
  return j.dump(2) + "\n";
}

std::string metrics_json(const MeanReport& m) {
  const std::size_t c_count = m.class_names.size();
  ordered_json j;
  j["class_names"] = m.class_names;
  j["folds"] = m.folds;
  j["loss"] = m.loss;
  j["accuracy"] = pct(m.accuracy);
  j["precision"] = averaged(m.macro_precision, m.weighted_precision);
  j["recall"] = averaged(m.macro_recall, m.weighted_recall);
  j["auc"] = averaged(m.macro_auc, m.weighted_auc);
  j["headline_averaging"] = "weighted";
  ordered_json per_class = ordered_json::array();
  for (std::size_t c = 0; c < c_count; ++c) {
    ordered_json e;
    e["name"] = m.class_names[c];
    e["precision"] = pct(m.precision[c]);
    e["recall"] = pct(m.recall[c]);
    e["auc"] = pct(m.auc[c]);
    per_class.push_back(std::move(e));
  }
  j["per_class"] = std::move(per_class);
  ordered_json cm = ordered_json::array();
  for (std::size_t t = 0; t < c_count; ++t) {
    ordered_json row = ordered_json::array();
    for (std::size_t p = 0; p < c_count; ++p) row.push_back(m.confusion[t * c_count + p]);
    cm.push_back(std::move(row));
  }
  j["mean_confusion"] = std::move(cm);
  return j.dump(2) + "\n";
}

std::string confusion_csv(const MetricsReport& r) {
  std::string out;
  for (std::size_t c = 0; c < r.class_names.size(); ++c) out += (c ? "," : "") + r.class_names[c];
  out += "\n";
  for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
    for (std::size_t p = 0; p < r.confusion.classes(); ++p) {
      out += (p ? "," : "") + std::to_string(r.confusion.at(t, p));
    }
    out += "\n";
  }
  return out;
}

std::string roc_csv(const MetricsReport& r) {
  std::string out = "class,threshold,fpr,tpr\n";
  for (std::size_t c = 0; c < r.roc.size(); ++c) {
    if (!r.roc[c]) continue;
    for (const auto& pt : r.roc[c]->points) {
      out += r.class_names[c] + "," + (std::isinf(pt.threshold) ? std::string("inf") : format_real(pt.threshold)) +
             "," + format_real(pt.fpr) + "," + format_real(pt.tpr) + "\n";
    }
  }
  return out;
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "metrics.json", metrics_json(report));
  write_file(dir / "confusion.csv", confusion_csv(report));
  write_file(dir / "roc.csv", roc_csv(report));
}

}  // namespace pathvit
