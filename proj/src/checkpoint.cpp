// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "json.hpp"
#include "pathvit/errors.hpp"
#include "pathvit/format.hpp"
#include "pathvit/trainer.hpp"

namespace pathvit {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json to_json(const ViTConfig& c) {
  ordered_json j;
  j["patch_size"] = c.patch_size;
  j["embed_dim"] = c.embed_dim;
  j["depth"] = c.depth;
  j["heads"] = c.heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["num_classes"] = c.num_classes;
  j["image_size"] = c.image_size;
  j["norm_placement"] = to_string(c.norm_placement);
  j["layer_norm_eps"] = c.layer_norm_eps;
  return j;
}

ViTConfig vit_from_json(const ordered_json& j) {
  ViTConfig c;
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.image_size = j.at("image_size").get<std::size_t>();
  c.norm_placement = parse_norm_placement(j.at("norm_placement").get<std::string>());
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  return c;
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["seed"] = c.seed;
  j["freeze_backbone"] = c.freeze_backbone;
  j["weight_decay"] = c.weight_decay;
  j["max_grad_norm"] = c.max_grad_norm;
  j["validation_fraction"] = c.validation_fraction;
  return j;
}

TrainConfig train_from_json(const ordered_json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.freeze_backbone = j.at("freeze_backbone").get<bool>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.max_grad_norm = j.at("max_grad_norm").get<double>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  return c;
}

}  // namespace

fs::path sidecar_path(const fs::path& weights_path) {
  fs::path p = weights_path;
  return p.replace_extension(".json");
}

void save_checkpoint(const fs::path& path, const ModelParams& params, const CheckpointInfo& info, DType dtype) {
  if (sidecar_path(path) == path) throw ContractError(path.string() + ": weights file must not end in .json");
  save_weights(params, path, dtype);
  ordered_json j;
  j["weights"] = path.filename().string();
  j["vit_config"] = to_json(info.vit);
  j["train_config"] = to_json(info.train);
  ordered_json split;
  split["kind"] = info.split_kind == SplitKind::kHoldout ? "holdout" : "kfold";
  split["train_fraction"] = info.train_fraction;
  split["folds"] = info.folds;
  split["fold"] = info.fold ? ordered_json(*info.fold) : ordered_json(nullptr);
  split["seed"] = info.split_seed;
  j["split"] = std::move(split);
  j["epoch"] = info.epoch;
  j["eval_accuracy"] = info.eval_accuracy;
  j["class_names"] = info.class_names;
  write_file(sidecar_path(path), j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  if (!fs::exists(path)) throw DataError(path.string() + ": checkpoint not found");
  if (!fs::exists(side)) throw DataError(side.string() + ": checkpoint sidecar not found");
  Checkpoint ck;
  try {
    const auto j = ordered_json::parse(read_file(side));
    ck.info.vit = vit_from_json(j.at("vit_config"));
    ck.info.train = train_from_json(j.at("train_config"));
    const auto& split = j.at("split");
    const auto kind = split.at("kind").get<std::string>();
    if (kind != "holdout" && kind != "kfold") throw FormatError(side.string() + ": unknown split kind " + kind);
    ck.info.split_kind = kind == "holdout" ? SplitKind::kHoldout : SplitKind::kKFold;
    ck.info.train_fraction = split.at("train_fraction").get<double>();
    ck.info.folds = split.at("folds").get<std::size_t>();
    if (!split.at("fold").is_null()) ck.info.fold = split.at("fold").get<std::size_t>();
    ck.info.split_seed = split.at("seed").get<std::uint64_t>();
    ck.info.epoch = j.at("epoch").get<std::size_t>();
    ck.info.eval_accuracy = j.at("eval_accuracy").get<double>();
    ck.info.class_names = j.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  ck.info.vit.validate();
  if (ck.info.class_names.size() != ck.info.vit.num_classes) {
    throw FormatError(side.string() + ": " + std::to_string(ck.info.class_names.size()) +
                      " class names for a model with C=" + std::to_string(ck.info.vit.num_classes));
  }
  ck.params = load_weights(path, ck.info.vit);
  return ck;
}

}  // namespace pathvit
