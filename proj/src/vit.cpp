// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/vit.hpp"

#include <algorithm>
#include <cmath>

#include "pathvit/errors.hpp"
#include "pathvit/random.hpp"

namespace pathvit {

std::string to_string(NormPlacement placement) { return placement == NormPlacement::kPost ? "post" : "pre"; }

NormPlacement parse_norm_placement(const std::string& text) {
  if (text == "post") return NormPlacement::kPost;
  if (text == "pre") return NormPlacement::kPre;
  throw ConfigError("norm placement must be 'post' or 'pre', got '" + text + "'");
}

// --- config ------------------------------------------------------------------

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (depth < 1) throw ConfigError("depth must be at least 1");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must give a positive hidden width");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
}

ViTConfig ViTConfig::tiny() {
  ViTConfig cfg;
  cfg.patch_size = 4;
  cfg.image_size = 8;
  cfg.embed_dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.num_classes = 3;
  return cfg;
}

// --- params ------------------------------------------------------------------

void ModelParams::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ContractError("params: duplicate tensor '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool ModelParams::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& ModelParams::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw ContractError("params: no tensor named '" + name + "'");
}

Tensor& ModelParams::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).get(name));
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  for (const auto& e : entries_) copy.add(e.first, e.second.clone(e.second.requires_grad()));
  return copy;
}

namespace {

std::string layer_prefix(std::size_t layer) { return "blocks." + std::to_string(layer) + "."; }

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ViTConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  const std::size_t hidden = cfg.mlp_hidden();
  std::vector<std::pair<std::string, Shape>> layout{
      {"patch_embed.weight", {cfg.patch_dim(), d}},
      {"patch_embed.bias", {d}},
      {"cls_token", {d}},
      {"pos_embed", {cfg.sequence_length(), d}},
  };
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* proj : {"q", "k", "v", "o"}) {
      layout.push_back({p + "attn." + proj + ".weight", {d, d}});
      layout.push_back({p + "attn." + proj + ".bias", {d}});
    }
    layout.push_back({p + "ffn.in.weight", {d, hidden}});
    layout.push_back({p + "ffn.in.bias", {hidden}});
    layout.push_back({p + "ffn.out.weight", {hidden, d}});
    layout.push_back({p + "ffn.out.bias", {d}});
    for (const char* norm : {"norm1", "norm2"}) {
      layout.push_back({p + norm + ".gamma", {d}});
      layout.push_back({p + norm + ".beta", {d}});
    }
  }
  if (cfg.norm_placement == NormPlacement::kPre) {
    layout.push_back({"final_norm.gamma", {d}});
    layout.push_back({"final_norm.beta", {d}});
  }
  layout.push_back({"head.weight", {d, cfg.num_classes}});
  layout.push_back({"head.bias", {cfg.num_classes}});
  return layout;
}

bool is_head_parameter(const std::string& name) { return name.rfind("head.", 0) == 0; }

BlockParams block_params(const ModelParams& params, std::size_t layer) {
  const std::string p = layer_prefix(layer);
  auto g = [&](const std::string& n) { return params.get(p + n); };
  return {g("attn.q.weight"),  g("attn.q.bias"),   g("attn.k.weight"),  g("attn.k.bias"),
          g("attn.v.weight"),  g("attn.v.bias"),   g("attn.o.weight"),  g("attn.o.bias"),
          g("ffn.in.weight"),  g("ffn.in.bias"),   g("ffn.out.weight"), g("ffn.out.bias"),
          g("norm1.gamma"),    g("norm1.beta"),    g("norm2.gamma"),    g("norm2.beta")};
}

namespace {

enum class InitKind { kNormal, kZeros, kOnes };

InitKind init_kind(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".gamma")) return InitKind::kOnes;
  if (ends_with(".bias") || ends_with(".beta") || name == "cls_token") return InitKind::kZeros;
  return InitKind::kNormal;
}

Tensor init_tensor(const std::string& name, const Shape& shape, Rng& rng) {
  constexpr double kStd = 0.02;
  switch (init_kind(name)) {
    case InitKind::kOnes:
      return Tensor::ones(shape, true);
    case InitKind::kZeros:
      return Tensor::zeros(shape, true);
    case InitKind::kNormal:
      break;
  }
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.truncated_normal(kStd);
  return Tensor::from(shape, std::move(values), true);
}

}  // namespace

ModelParams init_params(const ViTConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams params;
  for (const auto& [name, shape] : parameter_layout(cfg)) params.add(name, init_tensor(name, shape, rng));
  return params;
}

void reset_head(ModelParams& params, const ViTConfig& cfg, std::uint64_t seed) {
  // Separate stream so the head draw does not depend on backbone size.
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    if (!is_head_parameter(name)) continue;
    Tensor fresh = init_tensor(name, shape, rng);
    if (params.contains(name)) {
      params.get(name) = fresh;
    } else {
      params.add(name, fresh);
    }
  }
}

void freeze_backbone(ModelParams& params) {
  for (auto& [name, tensor] : params.entries()) {
    if (!is_head_parameter(name)) {
      tensor.set_requires_grad(false);
      tensor.zero_grad();
    }
  }
}

// --- forward -----------------------------------------------------------------

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("patchify: expected (3,S,S) image, got " + to_string(image.shape()));
  }
  const std::size_t size = image.dim(1);
  if (image.dim(2) != size) throw ConfigError("patchify: image is not square: " + to_string(image.shape()));
  if (patch_size == 0 || size % patch_size != 0) {
    throw ConfigError("patchify: image size " + std::to_string(size) + " not divisible by patch size " +
                      std::to_string(patch_size));
  }
  const std::size_t grid = size / patch_size;
  const std::size_t row_len = patch_size * patch_size * 3;
  auto px = image.data();
  std::vector<double> rows(grid * grid * row_len);
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx) {
      double* out = rows.data() + (gy * grid + gx) * row_len;
      for (std::size_t py = 0; py < patch_size; ++py)
        for (std::size_t pxi = 0; pxi < patch_size; ++pxi)
          for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t y = gy * patch_size + py;
            const std::size_t x = gx * patch_size + pxi;
            out[(py * patch_size + pxi) * 3 + c] = px[(c * size + y) * size + x];
          }
    }
  return Tensor::from({grid * grid, row_len}, std::move(rows));
}

Tensor embed(const Tensor& patches, const ModelParams& params) {
  const Tensor& w = params.get("patch_embed.weight");
  const Tensor& cls = params.get("cls_token");
  Tensor projected = broadcast_add(matmul(patches, w), params.get("patch_embed.bias"));
  std::vector<Tensor> rows{reshape(cls, {1, cls.numel()}), projected};
  Tensor sequence = concat(rows, 0);
  const Tensor& pos = params.get("pos_embed");
  if (pos.shape() != sequence.shape()) {
    throw DimensionError("embed: positions " + to_string(pos.shape()) + " vs sequence " +
                         to_string(sequence.shape()));
  }
  return add(sequence, pos);
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return broadcast_add(matmul(x, w), b); }

}  // namespace

Tensor attention(const Tensor& x, const BlockParams& block, std::size_t heads, std::vector<Tensor>* head_probs) {
  if (x.rank() != 2) throw DimensionError("attention: expected [T,D], got " + to_string(x.shape()));
  const std::size_t d = x.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  const std::size_t head_dim = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = linear(x, block.wq, block.bq);
  Tensor k = linear(x, block.wk, block.bk);
  Tensor v = linear(x, block.wv, block.bv);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim;
    const std::size_t hi = lo + head_dim;
    Tensor scores = scale(matmul(slice(q, 1, lo, hi), transpose(slice(k, 1, lo, hi))), inv_sqrt);
    Tensor probs = softmax(scores);
    if (head_probs) head_probs->push_back(probs);
    outputs.push_back(matmul(probs, slice(v, 1, lo, hi)));
  }
  return linear(concat(outputs, 1), block.wo, block.bo);
}

Tensor feed_forward(const Tensor& x, const BlockParams& block) {
  return linear(gelu(linear(x, block.ffn_in_w, block.ffn_in_b)), block.ffn_out_w, block.ffn_out_b);
}

Tensor encoder_block(const Tensor& x, const BlockParams& block, const ViTConfig& cfg,
                     std::vector<Tensor>* head_probs) {
  const double eps = cfg.layer_norm_eps;
  if (cfg.norm_placement == NormPlacement::kPost) {
    Tensor mid = layer_norm(add(x, attention(x, block, cfg.heads, head_probs)), block.norm1_gamma,
                            block.norm1_beta, eps);
    return layer_norm(add(mid, feed_forward(mid, block)), block.norm2_gamma, block.norm2_beta, eps);
  }
  Tensor mid = add(x, attention(layer_norm(x, block.norm1_gamma, block.norm1_beta, eps), block, cfg.heads, head_probs));
  return add(mid, feed_forward(layer_norm(mid, block.norm2_gamma, block.norm2_beta, eps), block));
}

Tensor encode(const Tensor& z0, const ModelParams& params, const ViTConfig& cfg, ForwardTrace* trace) {
  Tensor z = z0;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    std::vector<Tensor>* probs = nullptr;
    if (trace) probs = &trace->attention.emplace_back();
    z = encoder_block(z, block_params(params, l), cfg, probs);
    if (trace) trace->block_outputs.push_back(z);
  }
  return z;
}

Tensor classify(const Tensor& encoded, const ModelParams& params, const ViTConfig& cfg) {
  Tensor cls = slice(encoded, 0, 0, 1);
  if (cfg.norm_placement == NormPlacement::kPre) {
    cls = layer_norm(cls, params.get("final_norm.gamma"), params.get("final_norm.beta"), cfg.layer_norm_eps);
  }
  Tensor logits = linear(cls, params.get("head.weight"), params.get("head.bias"));
  return reshape(logits, {cfg.num_classes});
}

ForwardResult forward(const Tensor& image, const ModelParams& params, const ViTConfig& cfg, ForwardTrace* trace) {
  const Shape expected{3, cfg.image_size, cfg.image_size};
  if (image.shape() != expected) {
    throw DimensionError("forward: expected image " + to_string(expected) + ", got " + to_string(image.shape()));
  }
  Tensor logits = classify(encode(embed(patchify(image, cfg.patch_size), params), params, cfg, trace), params, cfg);
  return {logits, softmax(logits)};
}

Tensor forward_logits(const Tensor& batch, const ModelParams& params, const ViTConfig& cfg) {
  const Shape image_shape{3, cfg.image_size, cfg.image_size};
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != image_shape) {
    throw DimensionError("forward_logits: expected [B,3,S,S] with S=" + std::to_string(cfg.image_size) + ", got " +
                         to_string(batch.shape()));
  }
  const std::size_t n = batch.dim(0);
  const std::size_t stride = shape_numel(image_shape);
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto px = batch.data().subspan(i * stride, stride);
    Tensor image = Tensor::from(image_shape, std::vector<double>(px.begin(), px.end()));
    Tensor logits = forward(image, params, cfg).logits;
    rows.push_back(reshape(logits, {1, cfg.num_classes}));
  }
  return concat(rows, 0);
}

std::size_t predict(std::span<const double> probs) {
  if (probs.empty()) throw ContractError("predict: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

}  // namespace pathvit
