// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point: tile, train, eval, predict, config.
//
// Exit codes: 0 success, 1 usage/config/contract, 2 data, 3 numeric.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pathvit/config.hpp"
#include "pathvit/errors.hpp"
#include "pathvit/format.hpp"
#include "pathvit/random.hpp"
#include "pathvit/tiling.hpp"
#include "pathvit/trainer.hpp"

namespace fs = std::filesystem;
using namespace pathvit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// Flags shared by every subcommand plus the config keys other flags set.
class CommonFlags {
 public:
  void attach(CLI::App* app) {
    app->add_option("--config", config_file_, "flat key = value config file");
    app->add_option("--set", sets_, "override one config key, as key=value")->allow_extra_args(false);
    keyed_option(app, "--seed", "seed", "seed for splits, batching and initialisation");
    keyed_option(app, "--out", "out_dir", "output directory");
  }

  // An option whose value, when given, overrides config key `key`.
  void keyed_option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<std::string>();
    keyed_.push_back({app->add_option(flag, *value, help), key, value});
  }

  // A switch that sets config key `key` to `value`.
  void keyed_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& value,
                  const std::string& help) {
    keyed_.push_back({app->add_flag(flag, help), key, std::make_shared<std::string>(value)});
  }

  // Defaults, then the config file, then --set, then dedicated flags.
  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file_.empty()) apply_config_file(cfg, config_file_);
    for (const auto& s : sets_) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& k : keyed_) {
      if (k.opt->count() > 0) apply_setting(cfg, k.key, *k.value);
    }
    return cfg;
  }

 private:
  struct Keyed {
    CLI::Option* opt;
    std::string key;
    std::shared_ptr<std::string> value;
  };
  std::string config_file_;
  std::vector<std::string> sets_;
  std::vector<Keyed> keyed_;
};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void persist_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "config.txt", to_config_text(cfg));
}

int cmd_tile(RunConfig cfg, const fs::path& slides_dir) {
  cfg.validate();
  if (!fs::is_directory(slides_dir)) throw ConfigError(slides_dir.string() + " is not a directory");
  persist_config(cfg);
  const fs::path tiles_dir = cfg.out_dir / "tiles";
  fs::create_directories(tiles_dir);

  std::vector<fs::path> slides;
  for (const auto& e : fs::directory_iterator(slides_dir))
    if (e.is_regular_file() && is_image_file(e.path())) slides.push_back(e.path());
  std::sort(slides.begin(), slides.end());

  Manifest manifest;
  manifest.bg_threshold = cfg.tiling.bg_threshold;
  manifest.min_tissue = cfg.tiling.min_tissue;
  manifest.stride = cfg.tiling.effective_stride();
  std::size_t failures = 0;
  std::size_t accepted = 0;
  for (const auto& path : slides) {
    const std::string id = path.stem().string();
    try {
      const RawImage slide = read_image(path);
      auto records = tile_slide(slide, id, cfg.tiling);
      for (const auto& r : records) {
        if (!r.accepted) continue;
        write_png(tiles_dir / (id + "_x" + std::to_string(r.x) + "_y" + std::to_string(r.y) + ".png"),
                  slide.crop(r.x, r.y, r.size, r.size));
        ++accepted;
      }
      manifest.records.insert(manifest.records.end(), records.begin(), records.end());
    } catch (const Error& e) {
      ++failures;
      std::cerr << "tile: " << path.string() << ": " << e.what() << "\n";
    }
  }
  write_manifest(manifest, cfg.out_dir / "manifest.csv");
  std::cerr << "tile: " << slides.size() << " slides, " << manifest.records.size() << " windows, " << accepted
            << " accepted, " << failures << " failed\n";
  return failures == 0 ? kExitOk : kExitData;
}

// Streams one fold's epoch records to its log and to stderr.
class LogSink {
 public:
  explicit LogSink(fs::path path) : path_(std::move(path)) { write_file(path_, ""); }

  void operator()(const TrainLogRecord& r) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << to_json_line(r) << "\n";
    std::fprintf(stderr, "epoch %zu  train_loss %.6f  train_acc %.2f  eval_loss %.6f  eval_acc %.2f\n", r.epoch,
                 r.train_loss, r.train_acc, r.eval_loss, r.eval_acc);
  }

 private:
  fs::path path_;
};

void write_split(const fs::path& path, const LabeledDataset& ds, const SplitPlan& plan) {
  // Holdout parts are named; k-fold parts are fold indices.
  const bool holdout = plan.kind == SplitKind::kHoldout;
  std::string out = holdout ? "source,label,part\n" : "source,label,fold\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto part = plan.assignments[i];
    out += ds[i].source + "," + ds.class_names()[static_cast<std::size_t>(ds[i].label)] + "," +
           (holdout ? std::string(part == 0 ? "train" : "test") : std::to_string(part)) + "\n";
  }
  write_file(path, out);
}

// Writes checkpoint, report and any divergence note for one training run.
bool emit_run(const fs::path& dir, const TrainResult& training, const MetricsReport& report,
              CheckpointInfo info, DType dtype) {
  info.epoch = training.best_epoch;
  info.eval_accuracy = training.best_eval_accuracy;
  save_checkpoint(dir / "model.bin", training.best_params, info, dtype);
  write_report(report, dir);
  if (training.diverged) {
    write_file(dir / "train_error.log", training.error + "\n");
    std::cerr << "train: diverged, kept epoch " << training.best_epoch << ": " << training.error << "\n";
  }
  return !training.diverged;
}

int cmd_train(RunConfig cfg) {
  cfg.validate_paths();
  LabeledDataset ds = load_image_folder(cfg.data_root, cfg.vit.image_size);
  if (cfg.num_classes != 0 && cfg.num_classes != ds.num_classes()) {
    throw ConfigError("config has num_classes=" + std::to_string(cfg.num_classes) + ", dataset " +
                      cfg.data_root.string() + " has " + std::to_string(ds.num_classes()) + " classes");
  }
  cfg.num_classes = ds.num_classes();
  cfg.vit.num_classes = ds.num_classes();
  cfg.vit.validate();
  cfg.train.seed = cfg.seed;
  if (cfg.folds > ds.size()) {
    throw ConfigError("folds=" + std::to_string(cfg.folds) + " exceeds dataset size " + std::to_string(ds.size()));
  }
  persist_config(cfg);

  auto fresh_model = [&cfg]() {
    return cfg.init_weights.empty() ? init_params(cfg.vit, cfg.seed)
                                    : load_backbone(cfg.init_weights, cfg.vit, cfg.seed);
  };
  CheckpointInfo info;
  info.vit = cfg.vit;
  info.train = cfg.train;
  info.train_fraction = cfg.train_fraction;
  info.split_seed = cfg.seed;
  info.class_names = ds.class_names();
  bool ok = true;

  if (cfg.folds == 0) {
    LogSink sink(cfg.out_dir / "train_log.jsonl");
    const auto result = run_holdout(ds, cfg.train_fraction, fresh_model(), cfg.vit, cfg.train, std::ref(sink));
    write_split(cfg.out_dir / "split.csv", ds, result.plan);
    info.split_kind = SplitKind::kHoldout;
    ok = emit_run(cfg.out_dir, result.training, result.test_report, info, cfg.weights_dtype);
    std::cerr << "train: test accuracy " << format_real(round2(result.test_report.accuracy)) << "%\n";
  } else {
    std::vector<std::unique_ptr<LogSink>> sinks;
    for (std::size_t f = 0; f < cfg.folds; ++f) {
      fs::create_directories(cfg.out_dir / ("fold_" + std::to_string(f)));
      sinks.push_back(std::make_unique<LogSink>(cfg.out_dir / ("fold_" + std::to_string(f)) / "train_log.jsonl"));
    }
    const auto result = run_kfold(
        ds, cfg.folds, [&](std::size_t) { return fresh_model(); }, cfg.vit, cfg.train,
        [&](std::size_t fold, const TrainLogRecord& r) { (*sinks[fold])(r); });
    write_split(cfg.out_dir / "split.csv", ds, result.plan);
    info.split_kind = SplitKind::kKFold;
    info.folds = cfg.folds;
    for (std::size_t f = 0; f < cfg.folds; ++f) {
      info.fold = f;
      info.train.seed = derive_seed(cfg.seed, f);
      ok = emit_run(cfg.out_dir / ("fold_" + std::to_string(f)), result.folds[f].training, result.folds[f].report,
                    info, cfg.weights_dtype) && ok;
    }
    write_file(cfg.out_dir / "metrics.json", metrics_json(result.mean));
    std::cerr << "train: mean accuracy over " << cfg.folds << " folds "
              << format_real(round2(result.mean.accuracy)) << "%\n";
  }
  return ok ? kExitOk : kExitNumeric;
}

int cmd_eval(RunConfig cfg, const fs::path& checkpoint) {
  cfg.validate_paths();
  const Checkpoint ck = load_checkpoint(checkpoint);
  const LabeledDataset ds = load_image_folder(cfg.data_root, ck.info.vit.image_size, ck.info.class_names);
  cfg.vit = ck.info.vit;
  cfg.num_classes = ck.info.vit.num_classes;
  persist_config(cfg);
  const auto report = evaluate(ck.params, ck.info.vit, ds);
  write_report(report, cfg.out_dir);
  std::cerr << "eval: accuracy " << format_real(round2(report.accuracy)) << "% on " << report.samples
            << " images\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& image, bool write_out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const ImageTensor input = resize(normalize(read_image(image)), ck.info.vit.image_size);
  const Tensor probs = [&] {
    NoGradGuard no_grad;
    return forward(input.tensor(), ck.params, ck.info.vit).probs;
  }();
  const std::size_t index = predict(probs.data());
  nlohmann::ordered_json j;
  j["class"] = ck.info.class_names.at(index);
  j["index"] = index;
  j["probs"] = std::vector<double>(probs.data().begin(), probs.data().end());
  const std::string text = j.dump() + "\n";
  std::cout << text;
  if (write_out) {
    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir / "prediction.json", text);
  }
  return kExitOk;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision transformer toolkit for histopathology image classification"};
  app.require_subcommand(1);

  auto* tile = app.add_subcommand("tile", "cut slides into tissue tiles and write a manifest");
  CommonFlags tile_flags;
  tile_flags.attach(tile);
  std::string slides_dir;
  tile->add_option("slides", slides_dir, "directory of slide images")->required();
  tile_flags.keyed_option(tile, "--tile-size", "tile_size", "tile side in pixels");
  tile_flags.keyed_option(tile, "--stride", "tile_stride", "tile stride, 0 for half a tile");
  tile_flags.keyed_option(tile, "--min-tissue", "min_tissue", "minimum tissue fraction");
  tile_flags.keyed_option(tile, "--bg-threshold", "bg_threshold", "background threshold per channel");

  auto* train = app.add_subcommand("train", "split, train, and report");
  CommonFlags train_flags;
  train_flags.attach(train);
  train_flags.keyed_option(train, "--data", "data_root", "dataset root");
  train_flags.keyed_option(train, "--folds", "folds", "k-fold count, 0 for holdout");
  train_flags.keyed_option(train, "--train-fraction", "train_fraction", "holdout training share");
  train_flags.keyed_option(train, "--epochs", "max_epochs", "epoch limit");
  train_flags.keyed_option(train, "--lr", "lr", "learning rate");
  train_flags.keyed_option(train, "--batch-size", "batch_size", "minibatch size");
  train_flags.keyed_option(train, "--patience", "patience", "early-stopping patience");
  train_flags.keyed_option(train, "--init-weights", "init_weights", "backbone weight container");
  train_flags.keyed_flag(train, "--freeze-backbone", "freeze_backbone", "true", "train only the head");
  train_flags.keyed_flag(train, "--f32-weights", "weights_dtype", "f32", "store checkpoints in single precision");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labelled folder");
  CommonFlags eval_flags;
  eval_flags.attach(eval);
  std::string eval_checkpoint;
  eval->add_option("--checkpoint", eval_checkpoint, "weight container with its .json sidecar")->required();
  eval_flags.keyed_option(eval, "--data", "data_root", "dataset root");

  auto* pred = app.add_subcommand("predict", "classify one image");
  CommonFlags pred_flags;
  pred_flags.attach(pred);
  std::string pred_checkpoint;
  std::string pred_image;
  pred->add_option("--checkpoint", pred_checkpoint, "weight container with its .json sidecar")->required();
  pred->add_option("image", pred_image, "image file")->required();

  auto* config = app.add_subcommand("config", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*tile) return guarded([&] { return cmd_tile(tile_flags.resolve(), slides_dir); });
  if (*train) return guarded([&] { return cmd_train(train_flags.resolve()); });
  if (*eval) return guarded([&] { return cmd_eval(eval_flags.resolve(), eval_checkpoint); });
  if (*pred) {
    return guarded([&] {
      const bool write_out = pred->get_option("--out")->count() > 0;
      return cmd_predict(pred_flags.resolve(), pred_checkpoint, pred_image, write_out);
    });
  }
  if (*config) {
    std::cout << to_config_text(RunConfig{});
    return kExitOk;
  }
  return kExitConfig;
}
