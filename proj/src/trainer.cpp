// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/trainer.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"
#include "pathvit/errors.hpp"
#include "pathvit/random.hpp"

namespace pathvit {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive and finite");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (patience > max_epochs) {
    throw ConfigError("patience (" + std::to_string(patience) + ") exceeds max_epochs (" +
                      std::to_string(max_epochs) + ")");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0,1)");
  }
  adam().validate();
}

AdamOptions TrainConfig::adam() const {
  AdamOptions o;
  o.lr = lr;
  o.beta1 = beta1;
  o.beta2 = beta2;
  o.eps = adam_eps;
  o.weight_decay = weight_decay;
  o.max_grad_norm = max_grad_norm;
  return o;
}

std::string to_json_line(const TrainLogRecord& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["train_acc"] = r.train_acc;
  j["eval_loss"] = r.eval_loss;
  j["eval_acc"] = r.eval_acc;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

TrainLogRecord parse_json_line(const std::string& line) {
  try {
    const auto j = ordered_json::parse(line);
    TrainLogRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.train_acc = j.at("train_acc").get<double>();
    r.eval_loss = j.at("eval_loss").get<double>();
    r.eval_acc = j.at("eval_acc").get<double>();
    r.wall_ms = j.at("wall_ms").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("training log line: ") + e.what());
  }
}

bool EarlyStopper::update(double accuracy) {
  ++epochs_;
  if (accuracy > best_) {
    best_ = accuracy;
    best_epoch_ = epochs_;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

TrainResult train_loop(ModelParams params, std::size_t max_epochs, std::size_t patience, const EpochFn& run_epoch,
                       const EpochCallback& on_epoch) {
  TrainResult result;
  result.best_params = params.clone();
  EarlyStopper stopper(patience);
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochOutcome outcome;
    try {
      outcome = run_epoch(epoch, params);
      if (!std::isfinite(outcome.train_loss) || !std::isfinite(outcome.eval_loss)) {
        throw NumericError("epoch " + std::to_string(epoch) + ": non-finite loss");
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.error = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    result.steps += outcome.steps;
    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.train_loss = outcome.train_loss;
    rec.train_acc = outcome.train_acc;
    rec.eval_loss = outcome.eval_loss;
    rec.eval_acc = outcome.eval_acc;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(outcome.eval_acc)) {
      result.best_params = params.clone();
      result.best_epoch = epoch;
      result.best_eval_accuracy = outcome.eval_acc;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

std::vector<double> predict_probs(const ModelParams& params, const ViTConfig& cfg, const LabeledDataset& ds) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(ds.size() * cfg.num_classes);
  for (const auto& item : ds.items()) {
    const Tensor probs = forward(item.image.tensor(), params, cfg).probs;
    out.insert(out.end(), probs.data().begin(), probs.data().end());
  }
  return out;
}

namespace {

void check_classes(const ViTConfig& cfg, const LabeledDataset& ds, const char* what) {
  if (cfg.num_classes != ds.num_classes()) {
    throw ConfigError(std::string(what) + ": model has C=" + std::to_string(cfg.num_classes) +
                      " classes, dataset has C=" + std::to_string(ds.num_classes()));
  }
}

}  // namespace

MetricsReport evaluate(const ModelParams& params, const ViTConfig& cfg, const LabeledDataset& ds) {
  check_classes(cfg, ds, "evaluate");
  if (ds.empty()) throw ContractError("evaluate: empty dataset");
  const auto probs = predict_probs(params, cfg, ds);
  const auto labels = ds.labels();
  return make_report(probs, labels, ds.class_names());
}

TrainResult train(const LabeledDataset& train_set, const LabeledDataset& eval_set, ModelParams params,
                  const ViTConfig& cfg, const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  if (train_set.empty()) throw ContractError("train: empty training partition");
  if (eval_set.empty()) throw ContractError("train: empty evaluation partition");
  check_classes(cfg, train_set, "train");
  check_classes(cfg, eval_set, "train");

  params = params.clone();
  if (tc.freeze_backbone) freeze_backbone(params);
  AdamState state = AdamState::for_params(params);
  const AdamOptions opts = tc.adam();

  auto run_epoch = [&](std::size_t epoch, ModelParams& p) {
    EpochOutcome out;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : batch_order(train_set.size(), tc.batch_size, derive_seed(tc.seed, epoch))) {
      const Batch batch = make_batch(train_set, idx);
      p.zero_grad();
      const Tensor logits = forward_logits(batch.images, p, cfg);
      const Tensor loss = cross_entropy(logits, batch.labels);
      loss_sum += loss.item() * static_cast<double>(idx.size());
      const auto z = logits.data();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = z.subspan(i * cfg.num_classes, cfg.num_classes);
        if (static_cast<int>(predict(row)) == batch.labels[i]) ++correct;
      }
      loss.backward();
      adam_step(p, state, opts);
      ++out.steps;
    }
    p.zero_grad();
    const auto n = static_cast<double>(train_set.size());
    out.train_loss = loss_sum / n;
    out.train_acc = 100.0 * static_cast<double>(correct) / n;
    const MetricsReport r = evaluate(p, cfg, eval_set);
    out.eval_loss = r.loss;
    out.eval_acc = r.accuracy;
    return out;
  };
  return train_loop(std::move(params), tc.max_epochs, tc.patience, run_epoch, on_epoch);
}

namespace {

// Trains on train_part and selects on either test_part or a slice of
// train_part, per tc.validation_fraction.
TrainResult train_partition(const Partition& part, ModelParams params, const ViTConfig& cfg, const TrainConfig& tc,
                            const EpochCallback& on_epoch) {
  if (tc.validation_fraction <= 0.0) return train(part.train, part.test, std::move(params), cfg, tc, on_epoch);
  const auto labels = part.train.labels();
  const SplitPlan vplan = make_holdout_plan(labels, 1.0 - tc.validation_fraction, derive_seed(tc.seed, 0x76616cULL));
  const Partition inner = split(part.train, vplan);
  return train(inner.train, inner.test, std::move(params), cfg, tc, on_epoch);
}

}  // namespace

HoldoutResult run_holdout(const LabeledDataset& ds, double train_fraction, ModelParams params, const ViTConfig& cfg,
                          const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  HoldoutResult out;
  const auto labels = ds.labels();
  out.plan = make_holdout_plan(labels, train_fraction, tc.seed);
  const Partition part = split(ds, out.plan);
  out.training = train_partition(part, std::move(params), cfg, tc, on_epoch);
  out.test_report = evaluate(out.training.best_params, cfg, part.test);
  return out;
}

KFoldResult run_kfold(const LabeledDataset& ds, std::size_t k, const ModelFactory& factory, const ViTConfig& cfg,
                      const TrainConfig& tc, const FoldEpochCallback& on_epoch) {
  tc.validate();
  KFoldResult out;
  const auto labels = ds.labels();
  out.plan = make_kfold_plan(labels, k, tc.seed);
  std::vector<MetricsReport> reports;
  for (std::size_t f = 0; f < k; ++f) {
    const Partition part = split(ds, out.plan, f);
    TrainConfig fold_tc = tc;
    fold_tc.seed = derive_seed(tc.seed, f);
    EpochCallback cb;
    if (on_epoch) cb = [&, f](const TrainLogRecord& r) { on_epoch(f, r); };
    FoldResult fr;
    fr.training = train_partition(part, factory(f), cfg, fold_tc, cb);
    fr.report = evaluate(fr.training.best_params, cfg, part.test);
    reports.push_back(fr.report);
    out.folds.push_back(std::move(fr));
  }
  out.mean = mean_report(reports);
  return out;
}

}  // namespace pathvit
