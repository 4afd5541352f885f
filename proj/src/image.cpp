// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

// jpeglib.h relies on FILE and size_t being declared first.
#include <jpeglib.h>

#include "pathvit/errors.hpp"

namespace pathvit {

RawImage::RawImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> pixels, std::size_t channels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (channels != kChannels) {
    throw FormatError("image: expected 3 channels, got " + std::to_string(channels));
  }
  if (height == 0 || width == 0) throw FormatError("image: zero extent");
  if (pixels_.size() != height * width * kChannels) {
    throw FormatError("image: " + std::to_string(pixels_.size()) + " bytes for " + std::to_string(height) + "x" +
                      std::to_string(width) + " RGB");
  }
}

RawImage RawImage::crop(std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
  if (x + w > width_ || y + h > height_ || w == 0 || h == 0) {
    throw ContractError("crop: region exceeds image bounds");
  }
  std::vector<std::uint8_t> out(w * h * kChannels);
  for (std::size_t row = 0; row < h; ++row) {
    const auto* src = pixels_.data() + ((y + row) * width_ + x) * kChannels;
    std::copy_n(src, w * kChannels, out.data() + row * w * kChannels);
  }
  return RawImage(h, w, std::move(out));
}

ImageTensor::ImageTensor(Tensor data) : data_(std::move(data)) {
  if (!data_.defined() || data_.rank() != 3 || data_.dim(0) != 3) {
    throw FormatError("image tensor: expected shape (3,H,W), got " +
                      (data_.defined() ? to_string(data_.shape()) : std::string("undefined")));
  }
  for (double v : data_.data()) {
    if (v < 0.0 || v > 1.0) throw FormatError("image tensor: value outside [0,1]");
  }
}

ImageTensor normalize(const RawImage& raw) {
  if (raw.empty()) throw FormatError("normalize: empty image");
  const std::size_t h = raw.height();
  const std::size_t w = raw.width();
  std::vector<double> values(3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) values[(c * h + y) * w + x] = raw.at(y, x, c) / 255.0;
  return ImageTensor(Tensor::from({3, h, w}, std::move(values)));
}

RawImage denormalize(const ImageTensor& img) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  auto values = img.tensor().data();
  std::vector<std::uint8_t> pixels(h * w * 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        pixels[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(values[(c * h + y) * w + x] * 255.0));
  return RawImage(h, w, std::move(pixels));
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double weight;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> result(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0, last);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    result[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return result;
}

}  // namespace

ImageTensor resize(const ImageTensor& img, std::size_t target) {
  if (target == 0) throw FormatError("resize: zero target size");
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const auto rows = taps(h, target);
  const auto cols = taps(w, target);
  auto in = img.tensor().data();
  std::vector<double> out(3 * target * target);
  for (std::size_t c = 0; c < 3; ++c) {
    const double* plane = in.data() + c * h * w;
    for (std::size_t y = 0; y < target; ++y) {
      const Tap& ty = rows[y];
      for (std::size_t x = 0; x < target; ++x) {
        const Tap& tx = cols[x];
        const double p00 = plane[ty.lo * w + tx.lo];
        const double p01 = plane[ty.lo * w + tx.hi];
        const double p10 = plane[ty.hi * w + tx.lo];
        const double p11 = plane[ty.hi * w + tx.hi];
        // Lerp form keeps constant regions exactly constant.
        const double top = p00 + tx.weight * (p01 - p00);
        const double bottom = p10 + tx.weight * (p11 - p10);
        out[(c * target + y) * target + x] = std::clamp(top + ty.weight * (bottom - top), 0.0, 1.0);
      }
    }
  }
  return ImageTensor(Tensor::from({3, target, target}, std::move(out)));
}

// --- codecs ------------------------------------------------------------------

namespace {

RawImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  return RawImage(image.height, image.width, std::move(pixels));
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RawImage read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw FormatError(path.string() + ": cannot open");
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  // Nothing with a destructor lives between setjmp and the decode below.
  std::vector<std::uint8_t> pixels;
  std::size_t height = 0;
  std::size_t width = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = cinfo.output_height;
  width = cinfo.output_width;
  pixels.resize(height * width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return RawImage(height, width, std::move(pixels));
}

}  // namespace

RawImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::array<unsigned char, 8> magic{};
  in.read(reinterpret_cast<char*>(magic.data()), magic.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  in.close();
  static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (got == 8 && magic == kPng) return read_png(path);
  if (got >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return read_jpeg(path);
  throw FormatError(path.string() + ": not a PNG or JPEG file");
}

void write_png(const std::filesystem::path& path, const RawImage& image) {
  if (image.empty()) throw ContractError("write_png: empty image");
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.width());
  out.height = static_cast<png_uint_32>(image.height());
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, image.pixels().data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + out.message);
  }
}

}  // namespace pathvit
