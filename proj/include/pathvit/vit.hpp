// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

enum class NormPlacement {
  /// LayerNorm(x + Sublayer(x)).
  kPost,
  /// x + Sublayer(LayerNorm(x)) with a final LayerNorm before the head, as in
  /// the ViT-Base backbone.
  kPre,
};

std::string to_string(NormPlacement placement);
NormPlacement parse_norm_placement(const std::string& text);

struct ViTConfig {
  std::size_t patch_size = 16;
  std::size_t embed_dim = 768;
  std::size_t depth = 12;
  std::size_t heads = 12;
  double mlp_ratio = 4.0;
  std::size_t num_classes = 2;
  std::size_t image_size = 224;
  NormPlacement norm_placement = NormPlacement::kPost;
  double layer_norm_eps = 1e-6;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t sequence_length() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t mlp_hidden() const;

  /// P=4, S=8, D=8, L=2, h=2, C=3: the configuration used by the checks.
  static ViTConfig tiny();

  bool operator==(const ViTConfig&) const = default;
};

/// Named learnable tensors in a fixed canonical order.
class ModelParams {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  /// Throws ContractError naming the missing tensor.
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;

  void zero_grad();
  /// Deep copy with fresh storage and the same requires_grad flags.
  ModelParams clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Canonical (name, shape) list for a configuration.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ViTConfig& cfg);

bool is_head_parameter(const std::string& name);

/// Views of one encoder layer's tensors.
struct BlockParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
  Tensor norm1_gamma, norm1_beta, norm2_gamma, norm2_beta;
};

BlockParams block_params(const ModelParams& params, std::size_t layer);

/// Optional hooks into a forward pass.
struct ForwardTrace {
  /// [layer][head] softmax attention matrices, each T x T.
  std::vector<std::vector<Tensor>> attention;
  /// Output of every encoder block.
  std::vector<Tensor> block_outputs;
};

/// (3, S, S) image to [N, P*P*3]. Patches in raster order; within a patch,
/// pixels in raster order with channels fastest.
Tensor patchify(const Tensor& image, std::size_t patch_size);

/// Rows [cls_token + pos_0, E_1 + pos_1, ..., E_N + pos_N], E_i = patch_i W + b.
Tensor embed(const Tensor& patches, const ModelParams& params);

/// Multi-head scaled dot-product self-attention followed by the output
/// projection. head_dim = D / heads.
Tensor attention(const Tensor& x, const BlockParams& block, std::size_t heads,
                 std::vector<Tensor>* head_probs = nullptr);

/// Two-layer GELU MLP.
Tensor feed_forward(const Tensor& x, const BlockParams& block);

Tensor encoder_block(const Tensor& x, const BlockParams& block, const ViTConfig& cfg,
                     std::vector<Tensor>* head_probs = nullptr);

/// Runs all encoder blocks on an embedded sequence.
Tensor encode(const Tensor& z0, const ModelParams& params, const ViTConfig& cfg, ForwardTrace* trace = nullptr);

/// Head applied to the class-token row of the final sequence; returns [C].
Tensor classify(const Tensor& encoded, const ModelParams& params, const ViTConfig& cfg);

struct ForwardResult {
  Tensor logits;  // [C]
  Tensor probs;   // [C]
};

/// Throws DimensionError unless image is (3, image_size, image_size).
ForwardResult forward(const Tensor& image, const ModelParams& params, const ViTConfig& cfg,
                      ForwardTrace* trace = nullptr);

/// Stacked logits [B, C] for a batch [B, 3, S, S].
Tensor forward_logits(const Tensor& batch, const ModelParams& params, const ViTConfig& cfg);

/// Index of the largest probability; ties resolve to the lowest index.
std::size_t predict(std::span<const double> probs);

/// Truncated normal (sigma 0.02, cut at 2 sigma) for projection weights and
/// positions; zeros for biases and the class token; unit LayerNorm scales.
ModelParams init_params(const ViTConfig& cfg, std::uint64_t seed);

/// Re-draws only the classification head, as when a backbone is reused for a
/// new label set.
void reset_head(ModelParams& params, const ViTConfig& cfg, std::uint64_t seed);

/// Turns gradients off for every tensor outside the head.
void freeze_backbone(ModelParams& params);

}  // namespace pathvit
