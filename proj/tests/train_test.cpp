// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "pathvit/errors.hpp"
#include "pathvit/format.hpp"
#include "pathvit/trainer.hpp"
#include "test_util.hpp"

namespace pathvit {
namespace {

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng.below(classes));
  return labels;
}

// Checks disjoint/exhaustive partitions and per-class proportionality.
void expect_stratified_holdout(const std::vector<int>& labels, const SplitPlan& plan, double fraction) {
  const std::size_t n = labels.size();
  ASSERT_EQ(plan.assignments.size(), n);
  const auto train = plan.members(0);
  const auto test = plan.members(1);
  EXPECT_EQ(train.size() + test.size(), n);
  EXPECT_EQ(train.size(), static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  const double ratio = static_cast<double>(train.size()) / static_cast<double>(n);
  std::map<int, std::size_t> total;
  std::map<int, std::size_t> in_train;
  for (std::size_t i = 0; i < n; ++i) {
    ++total[labels[i]];
    if (plan.assignments[i] == 0) ++in_train[labels[i]];
  }
  for (const auto& [c, count] : total) {
    EXPECT_LE(std::abs(static_cast<double>(in_train[c]) - ratio * static_cast<double>(count)), 1.0) << "class " << c;
  }
}

TEST(Split, TenItemsEightyTwenty) {
  std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto plan = make_holdout_plan(labels, 0.8, 3);
  EXPECT_EQ(plan.members(0).size(), 8u);
  EXPECT_EQ(plan.members(1).size(), 2u);
  expect_stratified_holdout(labels, plan, 0.8);
}

TEST(Split, HoldoutsAreStratifiedOnRandomLabels) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto labels = random_labels(5 + rng.below(400), 1 + rng.below(5), rng);
    for (double f : {0.8, 0.7, 0.5, 0.33}) {
      SCOPED_TRACE(trial);
      expect_stratified_holdout(labels, make_holdout_plan(labels, f, trial), f);
    }
  }
}

TEST(Split, SameSeedSameAssignments) {
  Rng rng(2);
  const auto labels = random_labels(200, 4, rng);
  EXPECT_EQ(make_holdout_plan(labels, 0.7, 9).assignments, make_holdout_plan(labels, 0.7, 9).assignments);
  EXPECT_NE(make_holdout_plan(labels, 0.7, 9).assignments, make_holdout_plan(labels, 0.7, 10).assignments);
  EXPECT_EQ(make_kfold_plan(labels, 5, 4).assignments, make_kfold_plan(labels, 5, 4).assignments);
}

TEST(Split, BadFractionIsConfigError) {
  std::vector<int> labels{0, 1, 0, 1};
  for (double f : {0.0, 1.0, -0.2, 1.5, std::nan("")}) {
    EXPECT_THROW(make_holdout_plan(labels, f, 0), ConfigError) << f;
  }
}

TEST(KFold, FiveFoldsOn4049Items) {
  Rng rng(5);
  const auto labels = random_labels(4049, 5, rng);
  const auto plan = make_kfold_plan(labels, 5, 0);
  std::vector<std::size_t> sizes;
  for (std::size_t f = 0; f < 5; ++f) sizes.push_back(plan.members(f).size());
  std::sort(sizes.rbegin(), sizes.rend());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{810, 810, 810, 810, 809}));
}

TEST(KFold, FoldsPartitionAndStratify) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng.below(300);
    const std::size_t k = 2 + rng.below(std::min<std::size_t>(9, n - 1));
    const auto labels = random_labels(n, 1 + rng.below(5), rng);
    const auto plan = make_kfold_plan(labels, k, trial);
    std::map<int, std::vector<std::size_t>> per_class;
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_LT(plan.assignments[i], k);
      ++sizes[plan.assignments[i]];
      auto& counts = per_class[labels[i]];
      counts.resize(k, 0);
      ++counts[plan.assignments[i]];
    }
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
    for (const auto& [c, counts] : per_class) {
      EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1u);
    }
  }
}

TEST(KFold, InvalidK) {
  std::vector<int> labels{0, 1, 0};
  EXPECT_THROW(make_kfold_plan(labels, 4, 0), ConfigError);
  EXPECT_THROW(make_kfold_plan(labels, 1, 0), ConfigError);
}

TEST(Split, PartitionMaterializesPlan) {
  const auto ds = testing::separable_dataset(12, 3, 4, 1);
  const auto labels = ds.labels();
  const auto plan = make_kfold_plan(labels, 3, 2);
  std::multiset<std::string> seen;
  for (std::size_t f = 0; f < 3; ++f) {
    const auto part = split(ds, plan, f);
    EXPECT_EQ(part.train.size() + part.test.size(), 12u);
    EXPECT_EQ(part.test.size(), 4u);
    EXPECT_EQ(part.test.class_names(), ds.class_names());
  }
  EXPECT_THROW(split(ds, plan, 3), ContractError);
}

TEST(Batches, SizesAndConservation) {
  EXPECT_EQ(batch_order(10, 32, 0).size(), 1u);
  EXPECT_EQ(batch_order(10, 32, 0)[0].size(), 10u);
  const auto two = batch_order(64, 32, 1);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].size(), 32u);
  EXPECT_EQ(two[1].size(), 32u);

  const auto order = batch_order(77, 8, 5);
  EXPECT_EQ(order.back().size(), 5u);
  std::vector<std::size_t> flat;
  for (const auto& b : order) flat.insert(flat.end(), b.begin(), b.end());
  std::sort(flat.begin(), flat.end());
  std::vector<std::size_t> expected(77);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  EXPECT_EQ(flat, expected);
  EXPECT_EQ(batch_order(77, 8, 5), order);
  EXPECT_NE(batch_order(77, 8, 6), order);
  EXPECT_THROW(batch_order(4, 0, 0), ConfigError);
}

TEST(Batches, StackImagesAndLabels) {
  const auto ds = testing::separable_dataset(10, 3, 4, 2);
  const auto all = batches(ds, 4, 3);
  ASSERT_EQ(all.size(), 3u);
  std::multiset<int> labels;
  for (const auto& b : all) {
    EXPECT_EQ(b.images.shape(), (Shape{b.labels.size(), 3, 4, 4}));
    for (std::size_t i = 0; i < b.indices.size(); ++i) {
      const auto src = ds[b.indices[i]].image.tensor().data();
      const auto dst = b.images.data().subspan(i * 48, 48);
      EXPECT_TRUE(std::equal(src.begin(), src.end(), dst.begin()));
      EXPECT_EQ(b.labels[i], ds[b.indices[i]].label);
      labels.insert(b.labels[i]);
    }
  }
  const auto ds_labels = ds.labels();
  EXPECT_EQ(labels, std::multiset<int>(ds_labels.begin(), ds_labels.end()));
}

TEST(Dataset, RejectsBadLabel) {
  LabeledDataset ds({"a", "b"});
  Rng rng(1);
  EXPECT_THROW(ds.add(ImageTensor(testing::random_image_tensor(4, rng)), 2), DataError);
  EXPECT_THROW(ds.add(ImageTensor(testing::random_image_tensor(4, rng)), -1), DataError);
}

TEST(Loss, CrossEntropyExamples) {
  const std::vector<int> y0{0};
  EXPECT_NEAR(cross_entropy(Tensor::zeros({1, 4}), y0).item(), std::log(4.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 2}, {0.0, 0.0}), y0).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 3}, {800.0, 0.0, 0.0}), y0).item(), 0.0, 1e-300);
  // Probability of the true class underflows to zero; the fused form stays finite.
  const std::vector<int> y1{1};
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 2}, {0.0, -2000.0}), y1).item(), 2000.0, 1e-9);
}

// Sets w.grad to g via d/dw sum(w * g).
void set_grad(Tensor& w, const std::vector<double>& g) {
  w.zero_grad();
  reduce_sum(mul(w, Tensor::from(w.shape(), g))).backward();
}

TEST(Adam, FirstStepClosedForm) {
  ModelParams p;
  p.add("w", Tensor::zeros({1}, true));
  auto state = AdamState::for_params(p);
  set_grad(p.get("w"), {1.0});
  adam_step(p, state, AdamOptions{});
  EXPECT_EQ(state.t, 1u);
  EXPECT_NEAR(p.get("w").item(), -1e-4 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p.get("w").item(), -9.9999999e-5, 1e-13);
}

TEST(Adam, TwoStepsMatchUnrolledRecurrence) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const double theta0 = 2.0 * rng.uniform() - 1.0;
    const double g = 4.0 * rng.uniform() - 2.0;
    ModelParams p;
    p.add("w", Tensor::from({1}, {theta0}, true));
    auto state = AdamState::for_params(p);
    const AdamOptions o;
    for (int s = 0; s < 2; ++s) {
      set_grad(p.get("w"), {g});
      adam_step(p, state, o);
    }
    const double m1 = (1 - o.beta1) * g;
    const double v1 = (1 - o.beta2) * g * g;
    const double theta1 = theta0 - o.lr * (m1 / (1 - o.beta1)) / (std::sqrt(v1 / (1 - o.beta2)) + o.eps);
    const double m2 = o.beta1 * m1 + (1 - o.beta1) * g;
    const double v2 = o.beta2 * v1 + (1 - o.beta2) * g * g;
    const double theta2 =
        theta1 - o.lr * (m2 / (1 - o.beta1 * o.beta1)) / (std::sqrt(v2 / (1 - o.beta2 * o.beta2)) + o.eps);
    EXPECT_NEAR(p.get("w").item(), theta2, 1e-15);
  }
}

TEST(Adam, ZeroGradientIsNoOpForAllSteps) {
  Rng rng(8);
  ModelParams p;
  p.add("a", testing::random_tensor({3, 2}, rng, 1.0, true));
  p.add("b", testing::random_tensor({4}, rng, 1.0, true));
  const auto before = p.clone();
  auto state = AdamState::for_params(p);
  for (std::uint64_t t = 1; t <= 50; ++t) {
    set_grad(p.get("a"), std::vector<double>(6, 0.0));
    adam_step(p, state, AdamOptions{});
    EXPECT_EQ(state.t, t);
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto x = p.entries()[k].second.data();
    const auto y = before.entries()[k].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST(Adam, NonFiniteGradientAbortsStep) {
  ModelParams p;
  p.add("a", Tensor::from({2}, {1.0, 2.0}, true));
  // Small enough that b * 1e308 stays finite after one step.
  p.add("b", Tensor::from({1}, {1e-300}, true));
  auto state = AdamState::for_params(p);
  set_grad(p.get("a"), {0.5, 0.5});
  adam_step(p, state, AdamOptions{});
  const auto snapshot = p.clone();
  const auto state_before = state;
  set_grad(p.get("a"), {0.1, 0.2});
  // Leaf gradients accumulate: two backward passes of 1e308 overflow.
  Tensor& b = p.get("b");
  b.zero_grad();
  const Tensor huge = Tensor::from({1}, {1e308});
  reduce_sum(mul(b, huge)).backward();
  reduce_sum(mul(b, huge)).backward();
  ASSERT_TRUE(std::isinf(b.grad()[0]));
  EXPECT_THROW(adam_step(p, state, AdamOptions{}), NumericError);
  EXPECT_EQ(state.t, state_before.t);
  EXPECT_EQ(state.m, state_before.m);
  EXPECT_EQ(state.v, state_before.v);
  EXPECT_EQ(p.get("a").data()[0], snapshot.get("a").data()[0]);
  EXPECT_EQ(p.get("b").data()[0], snapshot.get("b").data()[0]);
}

TEST(Adam, FrozenTensorsUntouched) {
  ModelParams p;
  p.add("frozen", Tensor::from({2}, {1.0, 2.0}, false));
  p.add("live", Tensor::from({1}, {0.0}, true));
  auto state = AdamState::for_params(p);
  set_grad(p.get("live"), {1.0});
  adam_step(p, state, AdamOptions{});
  EXPECT_EQ(p.get("frozen").data()[0], 1.0);
  EXPECT_EQ(p.get("frozen").data()[1], 2.0);
  EXPECT_LT(p.get("live").item(), 0.0);
}

TEST(Adam, ClippingScalesGradient) {
  // With clipping the first step sees g * c; Adam's first step is scale
  // free, so compare the second moment instead.
  ModelParams p;
  p.add("w", Tensor::zeros({2}, true));
  auto state = AdamState::for_params(p);
  AdamOptions o;
  o.max_grad_norm = 1.0;
  set_grad(p.get("w"), {3.0, 4.0});
  adam_step(p, state, o);
  EXPECT_NEAR(state.m[0][0], 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(state.m[0][1], 0.1 * 0.8, 1e-15);
}

TEST(EarlyStopping, PatienceOneStopsAfterSecondEpoch) {
  EarlyStopper s(1);
  EXPECT_TRUE(s.update(50.0));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(40.0));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
}

TEST(EarlyStopping, TiesDoNotResetPatience) {
  EarlyStopper s(2);
  s.update(70.0);
  s.update(70.0);
  EXPECT_FALSE(s.should_stop());
  s.update(70.0);
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
}

// Epoch function that stamps the epoch into the weights and reports a fixed
// accuracy schedule.
EpochFn scheduled(const std::vector<double>& accs) {
  return [accs](std::size_t epoch, ModelParams& p) {
    p.get("w").mutable_data()[0] = static_cast<double>(epoch);
    EpochOutcome o;
    o.eval_acc = accs.at(epoch - 1);
    o.train_loss = 1.0 / static_cast<double>(epoch);
    o.steps = 1;
    return o;
  };
}

ModelParams stamp_params() {
  ModelParams p;
  p.add("w", Tensor::zeros({1}, true));
  return p;
}

TEST(TrainLoop, PatienceOneWorseningSchedule) {
  const auto r = train_loop(stamp_params(), 50, 1, scheduled({60, 50, 40, 30}));
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(r.best_params.get("w").item(), 1.0);
}

TEST(TrainLoop, ReturnsBestNotLast) {
  std::vector<double> accs{10, 30, 20, 50, 50, 45, 40, 35, 30, 25, 20, 15, 10, 5, 1, 0};
  const auto r = train_loop(stamp_params(), 16, 10, scheduled(accs));
  // Best at epoch 4; epochs 5..14 fail to improve (the tie at 5 included).
  EXPECT_EQ(r.log.size(), 14u);
  EXPECT_EQ(r.best_epoch, 4u);
  EXPECT_EQ(r.best_eval_accuracy, 50.0);
  EXPECT_EQ(r.best_params.get("w").item(), 4.0);
  for (const auto& rec : r.log) {
    if (rec.epoch <= r.best_epoch) {
      EXPECT_LE(rec.eval_acc, r.best_eval_accuracy);
    }
  }
}

TEST(TrainLoop, RandomSchedulesNeverReturnWorseCheckpoint) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> accs(30);
    for (double& a : accs) a = static_cast<double>(rng.below(10)) * 10.0;
    const std::size_t patience = 1 + rng.below(10);
    const auto r = train_loop(stamp_params(), 30, patience, scheduled(accs));
    double seen_max = -1.0;
    for (const auto& rec : r.log) seen_max = std::max(seen_max, rec.eval_acc);
    EXPECT_EQ(r.best_eval_accuracy, seen_max);
    EXPECT_EQ(accs[r.best_epoch - 1], seen_max);
    EXPECT_EQ(r.best_params.get("w").item(), static_cast<double>(r.best_epoch));
    // The first epoch with the maximum is kept.
    EXPECT_EQ(std::find(accs.begin(), accs.end(), seen_max) - accs.begin() + 1,
              static_cast<std::ptrdiff_t>(r.best_epoch));
    EXPECT_TRUE(r.log.size() == 30 || r.log.size() - r.best_epoch == patience);
  }
}

TEST(TrainLoop, DivergenceKeepsLastGoodCheckpoint) {
  auto fn = [](std::size_t epoch, ModelParams& p) {
    if (epoch == 3) throw NumericError("loss is inf");
    p.get("w").mutable_data()[0] = static_cast<double>(epoch);
    EpochOutcome o;
    o.eval_acc = static_cast<double>(epoch);
    return o;
  };
  const auto r = train_loop(stamp_params(), 10, 5, fn);
  EXPECT_TRUE(r.diverged);
  EXPECT_NE(r.error.find("epoch 3"), std::string::npos);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.best_params.get("w").item(), 2.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  EXPECT_NO_THROW(tc.validate());
  tc.patience = 51;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.lr = 0.0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

TrainConfig overfit_config() {
  TrainConfig tc;
  tc.lr = 1e-4 * 768.0 / 8.0;
  tc.batch_size = 32;
  tc.max_epochs = 200;
  tc.patience = 200;
  tc.seed = 3;
  return tc;
}

TEST(Train, OverfitsSeparableSet) {
  const auto ds = testing::separable_dataset(32, 3, 8, 3);
  const ViTConfig cfg = ViTConfig::tiny();
  const auto r = train(ds, ds, init_params(cfg, 3), cfg, overfit_config());
  ASSERT_FALSE(r.diverged);
  EXPECT_EQ(r.steps, 200u);
  ASSERT_EQ(r.log.size(), 200u);
  for (const auto& rec : r.log) EXPECT_TRUE(std::isfinite(rec.train_loss));
  EXPECT_LT(r.log.back().train_loss, 0.01);
  EXPECT_EQ(r.log.back().train_acc, 100.0);
  EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
  const auto report = evaluate(r.best_params, cfg, ds);
  EXPECT_EQ(report.accuracy, 100.0);
  ASSERT_TRUE(report.macro_auc.has_value());
  EXPECT_EQ(*report.macro_auc, 100.0);
}

TEST(Train, DeterministicUnderSeed) {
  const auto ds = testing::separable_dataset(24, 3, 8, 4);
  const ViTConfig cfg = ViTConfig::tiny();
  TrainConfig tc = overfit_config();
  tc.max_epochs = 6;
  tc.patience = 3;
  tc.batch_size = 5;
  const auto a = train(ds, ds, init_params(cfg, 1), cfg, tc);
  const auto b = train(ds, ds, init_params(cfg, 1), cfg, tc);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].train_acc, b.log[i].train_acc);
    EXPECT_EQ(a.log[i].eval_loss, b.log[i].eval_loss);
    EXPECT_EQ(a.log[i].eval_acc, b.log[i].eval_acc);
  }
  for (std::size_t k = 0; k < a.best_params.size(); ++k) {
    const auto x = a.best_params.entries()[k].second.data();
    const auto y = b.best_params.entries()[k].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST(Train, FreezeBackboneOnlyMovesHead) {
  const auto ds = testing::separable_dataset(9, 3, 8, 5);
  const ViTConfig cfg = ViTConfig::tiny();
  TrainConfig tc = overfit_config();
  tc.max_epochs = 2;
  tc.patience = 2;
  tc.freeze_backbone = true;
  const auto init = init_params(cfg, 2);
  const auto r = train(ds, ds, init, cfg, tc);
  for (const auto& [name, t] : r.log.empty() ? init.entries() : r.best_params.entries()) {
    if (is_head_parameter(name)) continue;
    const auto before = init.get(name).data();
    EXPECT_TRUE(std::equal(before.begin(), before.end(), t.data().begin())) << name;
  }
}

TEST(Train, RejectsMismatchAndEmptyPartitions) {
  const auto ds = testing::separable_dataset(6, 2, 8, 1);
  const ViTConfig cfg = ViTConfig::tiny();
  TrainConfig tc = overfit_config();
  EXPECT_THROW(train(ds, ds, init_params(cfg, 0), cfg, tc), ConfigError);
  const LabeledDataset empty(ds.class_names());
  ViTConfig two = cfg;
  two.num_classes = 2;
  EXPECT_THROW(train(ds, empty, init_params(two, 0), two, tc), ContractError);
  EXPECT_THROW(evaluate(init_params(cfg, 0), cfg, ds), ConfigError);
}

TEST(Holdout, ValidationSliceMode) {
  const auto ds = testing::separable_dataset(30, 3, 8, 6);
  const ViTConfig cfg = ViTConfig::tiny();
  TrainConfig tc = overfit_config();
  tc.max_epochs = 2;
  tc.patience = 2;
  tc.validation_fraction = 0.25;
  const auto r = run_holdout(ds, 0.8, init_params(cfg, 0), cfg, tc);
  EXPECT_EQ(r.plan.members(0).size(), 24u);
  EXPECT_EQ(r.test_report.samples, 6u);
  EXPECT_EQ(r.training.log.size(), 2u);
}

TEST(KFoldRun, EveryItemTestedOnce) {
  const auto ds = testing::separable_dataset(4, 2, 8, 7);
  ViTConfig cfg = ViTConfig::tiny();
  cfg.num_classes = 2;
  TrainConfig tc = overfit_config();
  tc.max_epochs = 1;
  tc.patience = 1;
  std::vector<std::size_t> factory_calls;
  const auto r = run_kfold(
      ds, 2,
      [&](std::size_t fold) {
        factory_calls.push_back(fold);
        return init_params(cfg, fold);
      },
      cfg, tc);
  EXPECT_EQ(factory_calls, (std::vector<std::size_t>{0, 1}));
  ASSERT_EQ(r.folds.size(), 2u);
  std::vector<int> tested(4, 0);
  for (std::size_t f = 0; f < 2; ++f) {
    for (std::size_t i : r.plan.members(f)) ++tested[i];
    EXPECT_EQ(r.folds[f].report.samples, 2u);
  }
  EXPECT_EQ(tested, std::vector<int>(4, 1));
  EXPECT_EQ(r.mean.folds, 2u);
  EXPECT_THROW(run_kfold(ds, 5, [&](std::size_t) { return init_params(cfg, 0); }, cfg, tc), ConfigError);
}

TEST(TrainLog, JsonLineRoundTripAndKeyOrder) {
  TrainLogRecord r{3, 0.123456789012345, 87.5, 1.0 / 3.0, 66.66666666666667, 12.5};
  const auto line = to_json_line(r);
  EXPECT_EQ(line.find("{\"epoch\":3,\"train_loss\":"), 0u);
  EXPECT_LT(line.find("train_acc"), line.find("eval_loss"));
  EXPECT_LT(line.find("eval_acc"), line.find("wall_ms"));
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto back = parse_json_line(line);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.train_loss, r.train_loss);
  EXPECT_EQ(back.eval_loss, r.eval_loss);
  EXPECT_EQ(back.eval_acc, r.eval_acc);
  EXPECT_THROW(parse_json_line("{\"epoch\":1}"), FormatError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / ("pathvit_ckpt_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTrip) {
  const ViTConfig cfg = ViTConfig::tiny();
  CheckpointInfo info;
  info.vit = cfg;
  info.train.seed = 0xFFFFFFFFFFFFFFF1ULL;
  info.train.lr = 3e-4;
  info.split_kind = SplitKind::kKFold;
  info.folds = 5;
  info.fold = 2;
  info.split_seed = 9;
  info.epoch = 7;
  info.eval_accuracy = 2.0 / 3.0 * 100.0;
  info.class_names = {"a", "b", "c"};
  const auto params = init_params(cfg, 4);
  const auto path = dir_ / "model.bin";
  save_checkpoint(path, params, info);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "model.json"));
  const auto ck = load_checkpoint(path);
  EXPECT_EQ(ck.info.vit, cfg);
  EXPECT_EQ(ck.info.train, info.train);
  EXPECT_EQ(ck.info.split_kind, SplitKind::kKFold);
  EXPECT_EQ(ck.info.fold, std::optional<std::size_t>(2));
  EXPECT_EQ(ck.info.split_seed, 9u);
  EXPECT_EQ(ck.info.epoch, 7u);
  EXPECT_EQ(ck.info.eval_accuracy, info.eval_accuracy);
  EXPECT_EQ(ck.info.class_names, info.class_names);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto x = params.entries()[k].second.data();
    const auto y = ck.params.entries()[k].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
  // Saving the loaded checkpoint reproduces both files byte for byte.
  const auto again = dir_ / "again.bin";
  save_checkpoint(again, ck.params, ck.info);
  EXPECT_EQ(read_file(path), read_file(again));
  auto side_a = read_file(dir_ / "model.json");
  auto side_b = read_file(dir_ / "again.json");
  side_a.replace(side_a.find("model.bin"), 9, "again.bin");
  EXPECT_EQ(side_a, side_b);
}

TEST_F(CheckpointTest, MissingSidecar) {
  const ViTConfig cfg = ViTConfig::tiny();
  save_weights(init_params(cfg, 0), dir_ / "w.bin");
  EXPECT_THROW(load_checkpoint(dir_ / "w.bin"), DataError);
  EXPECT_THROW(load_checkpoint(dir_ / "absent.bin"), DataError);
}

TEST_F(CheckpointTest, MalformedSidecar) {
  const ViTConfig cfg = ViTConfig::tiny();
  save_weights(init_params(cfg, 0), dir_ / "w.bin");
  write_file(dir_ / "w.json", "{\"vit_config\": {}}");
  EXPECT_THROW(load_checkpoint(dir_ / "w.bin"), FormatError);
}

}  // namespace
}  // namespace pathvit
