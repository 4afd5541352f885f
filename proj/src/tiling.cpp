// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/tiling.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pathvit/errors.hpp"
#include "pathvit/format.hpp"

namespace pathvit {

namespace {

std::size_t count_tissue(const RawImage& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h,
                         int bg_threshold) {
  std::size_t tissue = 0;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) {
      const bool background = img.at(y, x, 0) > bg_threshold && img.at(y, x, 1) > bg_threshold &&
                              img.at(y, x, 2) > bg_threshold;
      if (!background) ++tissue;
    }
  return tissue;
}

}  // namespace

double tissue_fraction(const RawImage& tile, int bg_threshold) {
  if (tile.empty()) throw ContractError("tissue_fraction: empty tile");
  const std::size_t total = tile.width() * tile.height();
  return static_cast<double>(count_tissue(tile, 0, 0, tile.width(), tile.height(), bg_threshold)) /
         static_cast<double>(total);
}

std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile_size, std::size_t stride) {
  if (tile_size == 0 || tile_size > extent) {
    throw ContractError("tile_offsets: tile " + std::to_string(tile_size) + " does not fit extent " +
                        std::to_string(extent));
  }
  if (stride == 0 || stride > tile_size) {
    throw ContractError("tile_offsets: stride " + std::to_string(stride) + " outside [1," +
                        std::to_string(tile_size) + "]");
  }
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (; at + tile_size <= extent; at += stride) offsets.push_back(at);
  if (offsets.back() + tile_size < extent) offsets.push_back(extent - tile_size);
  return offsets;
}

std::vector<TileRecord> tile_slide(const RawImage& slide, const std::string& slide_id, const TilingOptions& options) {
  if (slide.empty()) throw ContractError("tile_slide: empty slide");
  const std::size_t size = options.tile_size;
  if (size > slide.width() || size > slide.height()) {
    throw ContractError("tile_slide: tile " + std::to_string(size) + " larger than slide " +
                        std::to_string(slide.width()) + "x" + std::to_string(slide.height()));
  }
  const std::size_t stride = options.effective_stride();
  const auto xs = tile_offsets(slide.width(), size, stride);
  const auto ys = tile_offsets(slide.height(), size, stride);
  const double area = static_cast<double>(size * size);
  std::vector<TileRecord> records;
  records.reserve(xs.size() * ys.size());
  for (std::size_t y : ys)
    for (std::size_t x : xs) {
      TileRecord r{slide_id, x, y, size, 0.0, false};
      r.tissue_fraction = static_cast<double>(count_tissue(slide, x, y, size, size, options.bg_threshold)) / area;
      r.accepted = r.tissue_fraction >= options.min_tissue;
      records.push_back(std::move(r));
    }
  return records;
}

// --- manifest ----------------------------------------------------------------

namespace {

constexpr const char* kHeader = "slide_id,x,y,size,tissue_fraction,accepted";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename T>
T parse_number(const std::string& text, const std::string& file, std::size_t line, const char* what) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError(file, line, std::string("invalid ") + what + " '" + text + "'");
  }
  return value;
}

}  // namespace

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write manifest");
  out << kHeader << '\n';
  out << "# bg_threshold=" << manifest.bg_threshold << " min_tissue=" << format_real(manifest.min_tissue)
      << " stride=" << manifest.stride << '\n';
  for (const auto& r : manifest.records) {
    if (r.slide_id.find_first_of(",\n\r") != std::string::npos) {
      throw DataError("manifest: slide id '" + r.slide_id + "' contains a separator");
    }
    out << r.slide_id << ',' << r.x << ',' << r.y << ',' << r.size << ',' << format_real(r.tissue_fraction) << ','
        << (r.accepted ? "true" : "false") << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open manifest");
  const std::string file = path.string();
  Manifest manifest;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') throw ParseError(file, line_no, "CRLF line ending");
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream kv(line.substr(1));
      std::string token;
      while (kv >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw ParseError(file, line_no, "malformed setting '" + token + "'");
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "bg_threshold") {
          manifest.bg_threshold = parse_number<int>(value, file, line_no, "bg_threshold");
        } else if (key == "min_tissue") {
          manifest.min_tissue = parse_number<double>(value, file, line_no, "min_tissue");
        } else if (key == "stride") {
          manifest.stride = parse_number<std::size_t>(value, file, line_no, "stride");
        } else {
          throw ParseError(file, line_no, "unknown setting '" + key + "'");
        }
      }
      continue;
    }
    if (!saw_header) {
      if (line != kHeader) throw ParseError(file, line_no, "expected header '" + std::string(kHeader) + "'");
      saw_header = true;
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw ParseError(file, line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    }
    TileRecord r;
    r.slide_id = fields[0];
    if (r.slide_id.empty()) throw ParseError(file, line_no, "empty slide_id");
    r.x = parse_number<std::size_t>(fields[1], file, line_no, "x");
    r.y = parse_number<std::size_t>(fields[2], file, line_no, "y");
    r.size = parse_number<std::size_t>(fields[3], file, line_no, "size");
    r.tissue_fraction = parse_number<double>(fields[4], file, line_no, "tissue_fraction");
    if (r.tissue_fraction < 0.0 || r.tissue_fraction > 1.0) {
      throw ParseError(file, line_no, "tissue_fraction outside [0,1]");
    }
    if (fields[5] == "true") {
      r.accepted = true;
    } else if (fields[5] != "false") {
      throw ParseError(file, line_no, "accepted must be true or false");
    }
    manifest.records.push_back(std::move(r));
  }
  if (!saw_header) throw ParseError(file, line_no, "missing header");
  return manifest;
}

}  // namespace pathvit
