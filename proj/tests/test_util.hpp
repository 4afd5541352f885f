// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pathvit/dataset.hpp"
#include "pathvit/random.hpp"
#include "pathvit/tensor.hpp"
#include "pathvit/vit.hpp"

namespace pathvit::testing {

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, bool requires_grad = false);

/// Parameters drawn uniformly from [-scale, scale]; LayerNorm scales near 1.
ModelParams random_params(const ViTConfig& cfg, Rng& rng, double scale = 0.5);

/// (3, S, S) image with values in [0, 1].
Tensor random_image_tensor(std::size_t size, Rng& rng);

/// Item i has class i % classes. Each class has its own mean colour (the
/// bits of class + 1 switch the channels on) under uniform noise, so the set
/// is linearly separable.
LabeledDataset separable_dataset(std::size_t n, std::size_t classes, std::size_t size, std::uint64_t seed);

/// Writes separable images as PNGs in `<root>/class_<c>/img_<i>.png`.
void write_dataset_folder(const std::filesystem::path& root, std::size_t per_class, std::size_t classes,
                          std::size_t size, std::uint64_t seed);

/// One differentiable op with a generator for random operands.
struct OpCase {
  std::string name;
  std::function<std::vector<Tensor>(Rng&)> make_inputs;
  std::function<Tensor(const std::vector<Tensor>&)> apply;

  Shape output_shape(const std::vector<Tensor>& inputs) const {
    NoGradGuard guard;
    return apply(inputs).shape();
  }
};

/// Every primitive op the ViT is built from.
const std::vector<OpCase>& op_cases();

}  // namespace pathvit::testing
