#pragma once

// Internal file helpers shared by the dataset and model containers.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stofnet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk float32 blobs are little-endian");

namespace stofnet::detail {

inline void write_bytes(const std::filesystem::path& path, const void* data,
                        size_t bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw Error("write failed: " + path.string());
}

inline std::vector<float> read_f32(const std::filesystem::path& path,
                                   size_t expected_count) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open: " + path.string());
  auto bytes = static_cast<size_t>(f.tellg());
  size_t expected_bytes = expected_count * sizeof(float);
  if (bytes != expected_bytes)
    throw FormatError(path.string() + ": expected " +
                      std::to_string(expected_bytes) + " bytes, found " +
                      std::to_string(bytes));
  f.seekg(0);
  std::vector<float> out(expected_count);
  f.read(reinterpret_cast<char*>(out.data()),
         static_cast<std::streamsize>(expected_bytes));
  if (!f) throw FormatError("read failed: " + path.string());
  return out;
}

inline void write_json(const std::filesystem::path& path,
                       const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw Error("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace stofnet::detail
