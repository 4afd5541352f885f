// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "json.hpp"
#include "pathvit/errors.hpp"

namespace pathvit {

static_assert(std::endian::native == std::endian::little, "weight container I/O assumes a little-endian host");

namespace {

using nlohmann::json;

const char* dtype_name(DType d) { return d == DType::kF64 ? "f64" : "f32"; }
std::size_t dtype_size(DType d) { return d == DType::kF64 ? 8 : 4; }

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors, DType dtype) {
  json header = json::array();
  std::string payload;
  for (const auto& t : tensors) {
    header.push_back({{"name", t.name},
                      {"shape", t.tensor.shape()},
                      {"dtype", dtype_name(dtype)},
                      {"byte_offset", payload.size()}});
    for (double v : t.tensor.data()) {
      if (dtype == DType::kF64) {
        char bytes[8];
        std::memcpy(bytes, &v, 8);
        payload.append(bytes, 8);
      } else {
        const auto f = static_cast<float>(v);
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        payload.append(bytes, 4);
      }
    }
  }
  const std::string text = header.dump();
  const std::uint64_t length = text.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write weights");
  out.write(reinterpret_cast<const char*>(&length), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open weights");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 8) throw FormatError(where + "truncated header length");
  std::uint64_t length = 0;
  std::memcpy(&length, bytes.data(), 8);
  if (length > bytes.size() - 8) throw FormatError(where + "header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(8, length));
  } catch (const json::exception& e) {
    throw FormatError(where + "bad header: " + e.what());
  }
  if (!header.is_array()) throw FormatError(where + "header is not a list");
  const std::size_t payload_start = 8 + length;
  const std::size_t payload_size = bytes.size() - payload_start;
  std::vector<NamedTensor> out;
  try {
    for (const auto& entry : header) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      if (dtype == "f64") {
        t.stored_as = DType::kF64;
      } else if (dtype == "f32") {
        t.stored_as = DType::kF32;
      } else {
        throw FormatError(where + "tensor '" + t.name + "' has unknown dtype '" + dtype + "'");
      }
      const auto offset = entry.at("byte_offset").get<std::size_t>();
      const std::size_t count = shape_numel(shape);
      const std::size_t width = dtype_size(t.stored_as);
      if (offset > payload_size || count * width > payload_size - offset) {
        throw FormatError(where + "tensor '" + t.name + "' payload out of bounds");
      }
      std::vector<double> values(count);
      const char* src = bytes.data() + payload_start + offset;
      for (std::size_t i = 0; i < count; ++i) {
        if (t.stored_as == DType::kF64) {
          std::memcpy(&values[i], src + i * 8, 8);
        } else {
          float f;
          std::memcpy(&f, src + i * 4, 4);
          values[i] = f;
        }
      }
      t.tensor = Tensor::from(shape, std::move(values));
      out.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(where + "bad header entry: " + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(where + e.what());
  }
  return out;
}

void save_weights(const ModelParams& params, const std::filesystem::path& path, DType dtype) {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, tensor] : params.entries()) tensors.push_back({name, tensor, dtype});
  write_tensor_file(path, tensors, dtype);
}

namespace {

ModelParams assemble(const std::filesystem::path& path, const ViTConfig& cfg, bool skip_head) {
  std::map<std::string, Tensor> found;
  for (auto& t : read_tensor_file(path)) {
    if (!found.emplace(t.name, t.tensor).second) {
      throw DataError(path.string() + ": duplicate tensor '" + t.name + "'");
    }
  }
  ModelParams params;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    if (skip_head && is_head_parameter(name)) continue;
    auto it = found.find(name);
    if (it == found.end()) {
      throw DataError(path.string() + ": missing tensor '" + name + "' with expected shape " + to_string(shape));
    }
    if (it->second.shape() != shape) {
      throw DataError(path.string() + ": tensor '" + name + "' has shape " + to_string(it->second.shape()) +
                      ", expected " + to_string(shape));
    }
    params.add(name, it->second.clone(true));
    found.erase(it);
  }
  for (const auto& [name, tensor] : found) {
    if (skip_head && is_head_parameter(name)) continue;
    throw DataError(path.string() + ": unexpected tensor '" + name + "' " + to_string(tensor.shape()));
  }
  return params;
}

}  // namespace

ModelParams load_weights(const std::filesystem::path& path, const ViTConfig& cfg) {
  return assemble(path, cfg, false);
}

ModelParams load_backbone(const std::filesystem::path& path, const ViTConfig& cfg, std::uint64_t seed) {
  ModelParams params = assemble(path, cfg, true);
  reset_head(params, cfg, seed);
  return params;
}

}  // namespace pathvit
