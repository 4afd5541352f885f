// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

/// 8-bit RGB image, interleaved (H, W, C) order.
class RawImage {
 public:
  static constexpr std::size_t kChannels = 3;

  RawImage() = default;
  /// Throws FormatError unless pixels.size() == height * width * channels and
  /// channels == 3.
  RawImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> pixels,
           std::size_t channels = kChannels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool empty() const { return pixels_.empty(); }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[(y * width_ + x) * kChannels + c];
  }

  RawImage crop(std::size_t x, std::size_t y, std::size_t width, std::size_t height) const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Channel-first (3, H, W) tensor with values in [0, 1].
class ImageTensor {
 public:
  /// Validates shape and value range; throws FormatError otherwise.
  explicit ImageTensor(Tensor data);

  const Tensor& tensor() const { return data_; }
  std::size_t height() const { return data_.dim(1); }
  std::size_t width() const { return data_.dim(2); }

 private:
  Tensor data_;
};

/// Divides by 255 and permutes (H, W, C) to (C, H, W).
ImageTensor normalize(const RawImage& raw);

/// Inverse of normalize: scales by 255, rounds, and permutes back.
RawImage denormalize(const ImageTensor& img);

/// Bilinear resize to target x target with half-pixel centers:
/// source = (dest + 0.5) * in / out - 0.5, clamped to the valid range.
ImageTensor resize(const ImageTensor& img, std::size_t target);

/// Decodes PNG or JPEG (detected from the file signature) into 8-bit RGB.
RawImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawImage& image);

}  // namespace pathvit
