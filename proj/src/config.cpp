// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/config.hpp"

#include <charconv>
#include <functional>
#include <limits>
#include <sstream>

#include "pathvit/errors.hpp"
#include "pathvit/format.hpp"

namespace pathvit {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(key + ": cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string show(bool b) { return b ? "true" : "false"; }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(double v) { return format_real(v); }

struct Binding {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
Binding bind(std::string name, std::string help, Field field) {
  using T = std::remove_cvref_t<decltype(field(std::declval<RunConfig&>()))>;
  Binding b;
  b.key = {name, std::move(help)};
  b.set = [name, field](RunConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      field(c) = parse_bool(name, v);
    } else if constexpr (std::is_same_v<T, fs::path>) {
      field(c) = v;
    } else {
      field(c) = parse_number<T>(name, v);
    }
  };
  b.get = [field](const RunConfig& c) {
    if constexpr (std::is_same_v<T, fs::path>) {
      return field(c).string();
    } else {
      return show(field(c));
    }
  };
  return b;
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> t;
    t.push_back(bind("data_root", "dataset root laid out as <root>/<class>/*.png|jpg",
                     [](auto& c) -> auto& { return c.data_root; }));
    t.push_back(bind("out_dir", "output directory", [](auto& c) -> auto& { return c.out_dir; }));
    t.push_back(bind("seed", "seed for splits, batching and initialisation",
                     [](auto& c) -> auto& { return c.seed; }));
    t.push_back(bind("folds", "0 for a holdout split, k >= 2 for k-fold",
                     [](auto& c) -> auto& { return c.folds; }));
    t.push_back(bind("train_fraction", "holdout training share in (0,1)",
                     [](auto& c) -> auto& { return c.train_fraction; }));
    t.push_back(bind("validation_fraction", "share of training data held out for model selection; 0 monitors test",
                     [](auto& c) -> auto& { return c.train.validation_fraction; }));
    t.push_back(bind("image_size", "input side length S", [](auto& c) -> auto& { return c.vit.image_size; }));
    t.push_back(bind("patch_size", "patch side length P", [](auto& c) -> auto& { return c.vit.patch_size; }));
    t.push_back(bind("embed_dim", "latent width D", [](auto& c) -> auto& { return c.vit.embed_dim; }));
    t.push_back(bind("depth", "encoder layers L", [](auto& c) -> auto& { return c.vit.depth; }));
    t.push_back(bind("heads", "attention heads h", [](auto& c) -> auto& { return c.vit.heads; }));
    t.push_back(bind("mlp_ratio", "feed-forward hidden width / D", [](auto& c) -> auto& { return c.vit.mlp_ratio; }));
    t.push_back(bind("num_classes", "0 infers C from the dataset", [](auto& c) -> auto& { return c.num_classes; }));
    Binding norm;
    norm.key = {"norm_placement", "post or pre"};
    norm.set = [](RunConfig& c, const std::string& v) {
      try {
        c.vit.norm_placement = parse_norm_placement(v);
      } catch (const Error&) {
        throw ConfigError("norm_placement: expected post or pre, got '" + v + "'");
      }
    };
    norm.get = [](const RunConfig& c) { return to_string(c.vit.norm_placement); };
    t.push_back(std::move(norm));
    t.push_back(bind("layer_norm_eps", "LayerNorm epsilon", [](auto& c) -> auto& { return c.vit.layer_norm_eps; }));
    t.push_back(bind("lr", "Adam learning rate", [](auto& c) -> auto& { return c.train.lr; }));
    t.push_back(bind("batch_size", "minibatch size", [](auto& c) -> auto& { return c.train.batch_size; }));
    t.push_back(bind("max_epochs", "epoch limit", [](auto& c) -> auto& { return c.train.max_epochs; }));
    t.push_back(bind("patience", "early-stopping patience in epochs",
                     [](auto& c) -> auto& { return c.train.patience; }));
    t.push_back(bind("beta1", "Adam beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    t.push_back(bind("beta2", "Adam beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    t.push_back(bind("adam_eps", "Adam epsilon", [](auto& c) -> auto& { return c.train.adam_eps; }));
    t.push_back(bind("weight_decay", "L2 coefficient, 0 disables", [](auto& c) -> auto& { return c.train.weight_decay; }));
    t.push_back(bind("max_grad_norm", "gradient-norm clip, 0 disables",
                     [](auto& c) -> auto& { return c.train.max_grad_norm; }));
    t.push_back(bind("freeze_backbone", "train only the head", [](auto& c) -> auto& { return c.train.freeze_backbone; }));
    t.push_back(bind("init_weights", "weight container to take the backbone from",
                     [](auto& c) -> auto& { return c.init_weights; }));
    Binding dtype;
    dtype.key = {"weights_dtype", "checkpoint storage, f64 or f32"};
    dtype.set = [](RunConfig& c, const std::string& v) {
      if (v == "f64") c.weights_dtype = DType::kF64;
      else if (v == "f32") c.weights_dtype = DType::kF32;
      else throw ConfigError("weights_dtype: expected f64 or f32, got '" + v + "'");
    };
    dtype.get = [](const RunConfig& c) { return std::string(c.weights_dtype == DType::kF64 ? "f64" : "f32"); };
    t.push_back(std::move(dtype));
    t.push_back(bind("tile_size", "tile side in pixels", [](auto& c) -> auto& { return c.tiling.tile_size; }));
    t.push_back(bind("tile_stride", "tile stride, 0 for half a tile",
                     [](auto& c) -> auto& { return c.tiling.stride; }));
    t.push_back(bind("min_tissue", "minimum tissue fraction to keep a tile",
                     [](auto& c) -> auto& { return c.tiling.min_tissue; }));
    Binding bg;
    bg.key = {"bg_threshold", "background when all channels exceed this"};
    bg.set = [](RunConfig& c, const std::string& v) { c.tiling.bg_threshold = parse_number<int>("bg_threshold", v); };
    bg.get = [](const RunConfig& c) { return std::to_string(c.tiling.bg_threshold); };
    t.push_back(std::move(bg));
    return t;
  }();
  return table;
}

const Binding& find_binding(const std::string& key) {
  for (const auto& b : bindings())
    if (b.key.name == key) return b;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  ViTConfig v = vit;
  v.num_classes = num_classes == 0 ? 2 : num_classes;
  v.validate();
  train.validate();
  if (folds == 1) throw ConfigError("folds must be 0 (holdout) or at least 2");
  if (folds == 0 && !(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0,1)");
  }
  if (tiling.tile_size == 0) throw ConfigError("tile_size must be positive");
  if (tiling.stride > tiling.tile_size) throw ConfigError("tile_stride must not exceed tile_size");
  if (!(tiling.min_tissue >= 0.0 && tiling.min_tissue <= 1.0)) throw ConfigError("min_tissue must lie in [0,1]");
  if (tiling.bg_threshold < 0 || tiling.bg_threshold > 255) throw ConfigError("bg_threshold must lie in [0,255]");
}

void RunConfig::validate_paths() const {
  validate();
  if (data_root.empty()) throw ConfigError("data_root is not set");
  if (!fs::is_directory(data_root)) throw ConfigError("data_root " + data_root.string() + " is not a directory");
  if (!init_weights.empty() && !fs::is_regular_file(init_weights)) {
    throw ConfigError("init_weights " + init_weights.string() + " does not exist");
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& b : bindings()) k.push_back(b.key);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_binding(key).set(cfg, value);
}

std::string get_setting(const RunConfig& cfg, const std::string& key) { return find_binding(key).get(cfg); }

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      apply_setting(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file " + path.string() + " not found");
  apply_config_text(cfg, read_file(path), path.string());
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& b : bindings()) {
    out += "# " + b.key.help + "\n";
    out += b.key.name + " = " + b.get(cfg) + "\n";
  }
  return out;
}

}  // namespace pathvit
