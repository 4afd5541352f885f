// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pathvit/image.hpp"

namespace pathvit {

struct TilingOptions {
  std::size_t tile_size = 512;
  /// 0 selects tile_size / 2.
  std::size_t stride = 0;
  double min_tissue = 0.8;
  /// A pixel is background when all three channels exceed this value.
  int bg_threshold = 220;

  std::size_t effective_stride() const { return stride == 0 ? tile_size / 2 : stride; }
};

struct TileRecord {
  std::string slide_id;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t size = 0;
  double tissue_fraction = 0.0;
  bool accepted = false;

  bool operator==(const TileRecord&) const = default;
};

/// Fraction of pixels that are not near-white background.
double tissue_fraction(const RawImage& tile, int bg_threshold);

/// Window origins along one axis: 0, stride, 2*stride, ... while the window
/// fits, plus one window flush with the far edge if the grid stops short.
std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile_size, std::size_t stride);

/// Slides a tile_size window over the slide in row-major order and scores
/// each window. Throws ContractError if the tile does not fit or the stride
/// is outside [1, tile_size].
std::vector<TileRecord> tile_slide(const RawImage& slide, const std::string& slide_id, const TilingOptions& options);

struct Manifest {
  int bg_threshold = 220;
  double min_tissue = 0.8;
  std::size_t stride = 0;
  std::vector<TileRecord> records;
};

/// CSV with header `slide_id,x,y,size,tissue_fraction,accepted` followed by a
/// `# bg_threshold=<int> min_tissue=<real> stride=<int>` line, LF endings.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace pathvit
