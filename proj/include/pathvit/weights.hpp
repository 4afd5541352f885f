// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathvit/tensor.hpp"
#include "pathvit/vit.hpp"

namespace pathvit {

enum class DType { kF64, kF32 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
  DType stored_as = DType::kF64;
};

/// Weight container layout:
///   u64 little-endian header length n
///   n bytes of UTF-8 JSON: [{"name", "shape", "dtype": "f64"|"f32", "byte_offset"}, ...]
///   payloads, little-endian row-major, byte_offset counted from the end of the header.
/// f32 storage rounds each value to single precision.
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors, DType dtype);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

void save_weights(const ModelParams& params, const std::filesystem::path& path, DType dtype = DType::kF64);

/// Loads every tensor named by parameter_layout(cfg). Missing, extra, or
/// misshapen tensors raise DataError naming the tensor and expected shape.
ModelParams load_weights(const std::filesystem::path& path, const ViTConfig& cfg);

/// Loads the backbone from a container and draws a fresh head for cfg's
/// class count, whatever head the container held.
ModelParams load_backbone(const std::filesystem::path& path, const ViTConfig& cfg, std::uint64_t seed);

}  // namespace pathvit
