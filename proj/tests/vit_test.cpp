// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pathvit/errors.hpp"
#include "pathvit/random.hpp"
#include "pathvit/vit.hpp"
#include "pathvit/weights.hpp"
#include "test_util.hpp"
#include "vit_reference.hpp"

namespace pathvit {
namespace {

namespace fs = std::filesystem;
using testing::random_image_tensor;
using testing::random_params;
using testing::random_tensor;

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("pathvit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void set_all(ModelParams& params, const std::string& prefix, double value) {
  for (auto& [name, t] : params.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), value);
  }
}

void expect_matrix_near(const Tensor& t, const reference::Matrix& m, double tol) {
  ASSERT_EQ(t.dim(0), m.size());
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) EXPECT_NEAR(t.at({r, c}), m[r][c], tol) << r << "," << c;
}

TEST(ViTConfig, Validation) {
  EXPECT_NO_THROW(ViTConfig().validate());
  EXPECT_NO_THROW(ViTConfig::tiny().validate());
  ViTConfig c = ViTConfig::tiny();
  c.image_size = 10;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViTConfig::tiny();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViTConfig::tiny();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ViTConfig::tiny();
  c.depth = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(ViTConfig().num_patches(), 196u);
  EXPECT_EQ(ViTConfig().patch_dim(), 768u);
}

TEST(Patchify, ViTBaseGeometry) {
  Tensor img = Tensor::zeros({3, 224, 224});
  EXPECT_EQ(patchify(img, 16).shape(), (Shape{196, 768}));
  EXPECT_THROW(patchify(Tensor::zeros({3, 10, 10}), 4), ConfigError);
}

TEST(Patchify, WholeImagePatchIsChannelsFastestFlatten) {
  Rng rng(1);
  Tensor img = random_image_tensor(4, rng);
  Tensor rows = patchify(img, 4);
  ASSERT_EQ(rows.shape(), (Shape{1, 48}));
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(rows.at({0, (y * 4 + x) * 3 + c}), img.at({c, y, x}));
}

TEST(Patchify, SinglePixelPatchesInRasterOrder) {
  // (C,H,W) for a 2x2 image; pixel (y,x) has RGB = (10y+x, 0.1+..., ...).
  std::vector<double> v(12);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t x = 0; x < 2; ++x) v[(c * 2 + y) * 2 + x] = 0.1 * c + 0.02 * y + 0.01 * x;
  Tensor rows = patchify(Tensor::from({3, 2, 2}, v), 1);
  ASSERT_EQ(rows.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(rows.at({i, c}), 0.1 * c + 0.02 * (i / 2) + 0.01 * (i % 2));
}

TEST(Embed, ZeroParamsGiveZeroSequence) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(2);
  ModelParams params = random_params(cfg, rng);
  for (const char* p : {"patch_embed", "pos_embed", "cls_token"}) set_all(params, p, 0.0);
  Tensor z = embed(patchify(random_image_tensor(8, rng), 4), params);
  EXPECT_EQ(z.shape(), (Shape{5, 8}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Embed, IdentityProjectionCopiesPatches) {
  ViTConfig cfg;
  cfg.patch_size = 2;
  cfg.image_size = 4;
  cfg.embed_dim = 12;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.num_classes = 2;
  Rng rng(3);
  ModelParams params = random_params(cfg, rng);
  set_all(params, "patch_embed.bias", 0.0);
  set_all(params, "pos_embed", 0.0);
  auto w = params.get("patch_embed.weight").mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 12; ++i) w[i * 12 + i] = 1.0;
  Tensor patches = patchify(random_image_tensor(4, rng), 2);
  Tensor z = embed(patches, params);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 12; ++c) EXPECT_EQ(z.at({i + 1, c}), patches.at({i, c}));
}

TEST(Embed, MatchesAffineOracle) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams params = random_params(cfg, rng);
    Tensor img = random_image_tensor(8, rng);
    expect_matrix_near(embed(patchify(img, 4), params), reference::embed(img, params, cfg), 1e-12);
  }
}

TEST(Attention, SingleTokenPassesValueProjection) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(5);
  ModelParams params = random_params(cfg, rng);
  BlockParams b = block_params(params, 0);
  Tensor x = random_tensor({1, 8}, rng);
  std::vector<Tensor> probs;
  Tensor y = attention(x, b, 2, &probs);
  for (const auto& p : probs) EXPECT_EQ(p.item(), 1.0);
  Tensor expected = broadcast_add(matmul(broadcast_add(matmul(x, b.wv), b.bv), b.wo), b.bo);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y.data()[i], expected.data()[i], 1e-14);
}

TEST(Attention, EqualTokensGiveEqualRows) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(6);
  ModelParams params = random_params(cfg, rng);
  Tensor row = random_tensor({1, 8}, rng);
  std::vector<Tensor> rows(4, row);
  Tensor y = attention(concat(rows, 0), block_params(params, 0), 2);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y.at({r, c}), y.at({0, c}));
}

TEST(Attention, SingleHeadMatchesOracle) {
  ViTConfig cfg;
  cfg.patch_size = 1;
  cfg.image_size = 1;
  cfg.embed_dim = 2;
  cfg.heads = 1;
  cfg.depth = 1;
  cfg.num_classes = 2;
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams params = random_params(cfg, rng, 1.0);
    BlockParams b = block_params(params, 0);
    Tensor x = random_tensor({3, 2}, rng, 2.0);
    expect_matrix_near(attention(x, b, 1), reference::attention(reference::to_matrix(x), b, 1), 1e-10);
  }
}

TEST(EncoderBlock, ZeroWeightsPostNormIsDoubleLayerNorm) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(8);
  ModelParams params = random_params(cfg, rng);
  set_all(params, "blocks.0.attn", 0.0);
  set_all(params, "blocks.0.ffn", 0.0);
  set_all(params, "blocks.0.norm1.gamma", 1.0);
  set_all(params, "blocks.0.norm2.gamma", 1.0);
  set_all(params, "blocks.0.norm1.beta", 0.0);
  set_all(params, "blocks.0.norm2.beta", 0.0);
  BlockParams b = block_params(params, 0);
  Tensor x = random_tensor({5, 8}, rng, 3.0);
  Tensor y = encoder_block(x, b, cfg);
  Tensor once = layer_norm(x, b.norm1_gamma, b.norm1_beta, cfg.layer_norm_eps);
  Tensor twice = layer_norm(once, b.norm2_gamma, b.norm2_beta, cfg.layer_norm_eps);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.data()[i], twice.data()[i], 1e-15);
}

TEST(EncoderBlock, PreNormWithZeroResidualBranchesIsIdentity) {
  ViTConfig cfg = ViTConfig::tiny();
  cfg.norm_placement = NormPlacement::kPre;
  Rng rng(9);
  ModelParams params = random_params(cfg, rng);
  set_all(params, "blocks.0.attn.o", 0.0);
  set_all(params, "blocks.0.ffn.out", 0.0);
  Tensor x = random_tensor({5, 8}, rng, 3.0);
  Tensor y = encoder_block(x, block_params(params, 0), cfg);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(EncoderBlock, MatchesOracleBothPlacements) {
  Rng rng(10);
  for (NormPlacement placement : {NormPlacement::kPost, NormPlacement::kPre}) {
    ViTConfig cfg = ViTConfig::tiny();
    cfg.norm_placement = placement;
    for (int trial = 0; trial < 10; ++trial) {
      ModelParams params = random_params(cfg, rng);
      BlockParams b = block_params(params, 1);
      Tensor x = random_tensor({5, 8}, rng, 2.0);
      expect_matrix_near(encoder_block(x, b, cfg), reference::encoder_block(reference::to_matrix(x), b, cfg), 1e-10);
    }
  }
}

TEST(Forward, ZeroHeadIsUniform) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(11);
  ModelParams params = random_params(cfg, rng);
  set_all(params, "head", 0.0);
  ForwardResult r = forward(random_image_tensor(8, rng), params, cfg);
  for (double p : r.probs.data()) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(predict(r.probs.data()), 0u);
}

TEST(Forward, MatchesStraightLineOracle) {
  Rng rng(12);
  for (NormPlacement placement : {NormPlacement::kPost, NormPlacement::kPre}) {
    ViTConfig cfg = ViTConfig::tiny();
    cfg.norm_placement = placement;
    for (int trial = 0; trial < 10; ++trial) {
      ModelParams params = random_params(cfg, rng);
      Tensor img = random_image_tensor(8, rng);
      ForwardResult r = forward(img, params, cfg);
      auto expected = reference::forward_logits(img, params, cfg);
      double total = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(r.logits.data()[c], expected[c], 1e-8);
        EXPECT_GT(r.probs.data()[c], 0.0);
        EXPECT_LT(r.probs.data()[c], 1.0);
        total += r.probs.data()[c];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Forward, RejectsWrongImageShape) {
  ViTConfig cfg = ViTConfig::tiny();
  ModelParams params = init_params(cfg, 1);
  EXPECT_THROW(forward(Tensor::zeros({3, 16, 16}), params, cfg), DimensionError);
  EXPECT_THROW(forward(Tensor::zeros({1, 8, 8}), params, cfg), DimensionError);
}

TEST(Forward, DeterministicAndShapePreserving) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(13);
  ModelParams params = random_params(cfg, rng);
  Tensor img = random_image_tensor(8, rng);
  ForwardTrace trace;
  ForwardResult a = forward(img, params, cfg, &trace);
  ForwardResult b = forward(img, params, cfg);
  EXPECT_TRUE(std::equal(a.logits.data().begin(), a.logits.data().end(), b.logits.data().begin()));
  ASSERT_EQ(trace.block_outputs.size(), cfg.depth);
  for (const auto& z : trace.block_outputs) EXPECT_EQ(z.shape(), (Shape{5, 8}));
  ASSERT_EQ(trace.attention.size(), cfg.depth);
  for (const auto& layer : trace.attention) {
    ASSERT_EQ(layer.size(), cfg.heads);
    for (const auto& p : layer)
      for (std::size_t r = 0; r < 5; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 5; ++c) total += p.at({r, c});
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
  }
}

TEST(Forward, BatchLogitsStackPerImageLogits) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(14);
  ModelParams params = random_params(cfg, rng);
  Tensor a = random_image_tensor(8, rng);
  Tensor b = random_image_tensor(8, rng);
  std::vector<Tensor> parts{reshape(a, {1, 3, 8, 8}), reshape(b, {1, 3, 8, 8})};
  Tensor logits = forward_logits(concat(parts, 0), params, cfg);
  ASSERT_EQ(logits.shape(), (Shape{2, 3}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(logits.at({0, c}), forward(a, params, cfg).logits.data()[c]);
    EXPECT_EQ(logits.at({1, c}), forward(b, params, cfg).logits.data()[c]);
  }
}

TEST(Forward, PermutationEquivarianceWithoutPositions) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams params = random_params(cfg, rng);
    set_all(params, "pos_embed", 0.0);
    Tensor z0 = embed(patchify(random_image_tensor(8, rng), 4), params);
    std::vector<std::size_t> perm{1, 2, 3, 4};
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<Tensor> rows{slice(z0, 0, 0, 1)};
    for (std::size_t p : perm) rows.push_back(slice(z0, 0, p, p + 1));
    Tensor out = encode(z0, params, cfg);
    Tensor out_perm = encode(concat(rows, 0), params, cfg);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out_perm.at({0, c}), out.at({0, c}), 1e-10);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out_perm.at({i + 1, c}), out.at({perm[i], c}), 1e-10);
  }
}

TEST(Forward, EndToEndGradientMatchesFiniteDifferences) {
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(16);
  ModelParams params = random_params(cfg, rng);
  std::vector<Tensor> images{reshape(random_image_tensor(8, rng), {1, 3, 8, 8}),
                             reshape(random_image_tensor(8, rng), {1, 3, 8, 8})};
  Tensor batch = concat(images, 0);
  std::vector<int> labels{0, 2};
  std::vector<Tensor> leaves = params.tensors();
  double err = grad_check([&] { return cross_entropy(forward_logits(batch, params, cfg), labels); }, leaves);
  EXPECT_LT(err, 1e-3);
}

TEST(Predict, ArgmaxWithLowestIndexTieBreak) {
  std::vector<double> a{0.1, 0.7, 0.2};
  std::vector<double> b{0.5, 0.5};
  EXPECT_EQ(predict(a), 1u);
  EXPECT_EQ(predict(b), 0u);
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + rng.below(6));
    for (double& v : p) v = static_cast<double>(rng.below(4));
    std::size_t best = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    EXPECT_EQ(predict(p), best);
  }
  EXPECT_THROW(predict(std::vector<double>{}), ContractError);
}

TEST(Params, InitIsDeterministicAndShaped) {
  ViTConfig cfg = ViTConfig::tiny();
  ModelParams a = init_params(cfg, 42);
  ModelParams b = init_params(cfg, 42);
  ModelParams c = init_params(cfg, 43);
  auto layout = parameter_layout(cfg);
  ASSERT_EQ(a.size(), layout.size());
  bool differs = false;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, t] = a.entries()[i];
    EXPECT_EQ(name, layout[i].first);
    EXPECT_EQ(t.shape(), layout[i].second);
    auto other = b.entries()[i].second.data();
    EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), other.begin()));
    differs = differs || !std::equal(t.data().begin(), t.data().end(), c.entries()[i].second.data().begin());
    for (double v : t.data()) EXPECT_LE(std::abs(v), 1.0);
  }
  EXPECT_TRUE(differs);
  for (double v : a.get("cls_token").data()) EXPECT_EQ(v, 0.0);
  for (double v : a.get("head.bias").data()) EXPECT_EQ(v, 0.0);
  for (double v : a.get("blocks.0.norm1.gamma").data()) EXPECT_EQ(v, 1.0);
  for (double v : a.get("patch_embed.weight").data()) EXPECT_LE(std::abs(v), 0.04);
}

TEST(Params, FreezeBackboneLeavesOnlyHeadTrainable) {
  ViTConfig cfg = ViTConfig::tiny();
  ModelParams p = init_params(cfg, 1);
  freeze_backbone(p);
  for (const auto& [name, t] : p.entries()) EXPECT_EQ(t.requires_grad(), is_head_parameter(name)) << name;
}

TEST(Weights, SaveLoadIsBitExact) {
  fs::path dir = temp_dir("weights_rt");
  ViTConfig cfg = ViTConfig::tiny();
  Rng rng(18);
  ModelParams params = random_params(cfg, rng);
  save_weights(params, dir / "a.bin");
  ModelParams back = load_weights(dir / "a.bin", cfg);
  ASSERT_EQ(back.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto x = params.entries()[i].second.data();
    auto y = back.entries()[i].second.data();
    EXPECT_EQ(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)), 0);
  }
  save_weights(back, dir / "b.bin");
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
}

TEST(Weights, HeaderFollowsDocumentedLayout) {
  fs::path dir = temp_dir("weights_hdr");
  ViTConfig cfg = ViTConfig::tiny();
  save_weights(init_params(cfg, 3), dir / "w.bin");
  std::string bytes = slurp(dir / "w.bin");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  auto header = nlohmann::json::parse(bytes.substr(8, n));
  ASSERT_TRUE(header.is_array());
  std::size_t expected_offset = 0;
  for (const auto& e : header) {
    EXPECT_EQ(e["dtype"], "f64");
    EXPECT_EQ(e["byte_offset"].get<std::size_t>(), expected_offset);
    expected_offset += shape_numel(e["shape"].get<Shape>()) * 8;
  }
  EXPECT_EQ(bytes.size(), 8 + n + expected_offset);
  EXPECT_EQ(header[0]["name"], "patch_embed.weight");
}

TEST(Weights, F32StorageRoundsValues) {
  fs::path dir = temp_dir("weights_f32");
  ViTConfig cfg = ViTConfig::tiny();
  ModelParams params = init_params(cfg, 4);
  save_weights(params, dir / "w.bin", DType::kF32);
  ModelParams back = load_weights(dir / "w.bin", cfg);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto x = params.entries()[i].second.data();
    auto y = back.entries()[i].second.data();
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_EQ(y[k], static_cast<double>(static_cast<float>(x[k])));
  }
}

TEST(Weights, MissingTensorIsNamed) {
  fs::path dir = temp_dir("weights_missing");
  ViTConfig cfg = ViTConfig::tiny();
  ModelParams params = init_params(cfg, 5);
  std::vector<NamedTensor> tensors;
  for (const auto& [name, t] : params.entries())
    if (name != "blocks.1.attn.k.weight") tensors.push_back({name, t});
  write_tensor_file(dir / "w.bin", tensors, DType::kF64);
  try {
    load_weights(dir / "w.bin", cfg);
    FAIL();
  } catch (const DataError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("blocks.1.attn.k.weight"), std::string::npos);
    EXPECT_NE(msg.find("[8,8]"), std::string::npos);
  }
  ViTConfig wider = cfg;
  wider.embed_dim = 12;
  save_weights(params, dir / "x.bin");
  EXPECT_THROW(load_weights(dir / "x.bin", wider), DataError);
  std::ofstream(dir / "junk.bin") << "not a container";
  EXPECT_THROW(load_weights(dir / "junk.bin", cfg), FormatError);
}

TEST(Weights, BackboneLoadRedrawsHead) {
  fs::path dir = temp_dir("weights_backbone");
  ViTConfig cfg = ViTConfig::tiny();
  ModelParams params = init_params(cfg, 6);
  save_weights(params, dir / "w.bin");
  ViTConfig five = cfg;
  five.num_classes = 5;
  ModelParams loaded = load_backbone(dir / "w.bin", five, 7);
  EXPECT_EQ(loaded.get("head.weight").shape(), (Shape{8, 5}));
  auto a = params.get("blocks.0.attn.q.weight").data();
  auto b = loaded.get("blocks.0.attn.q.weight").data();
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  EXPECT_EQ(loaded.entries().back().first, "head.bias");
}

}  // namespace
}  // namespace pathvit
