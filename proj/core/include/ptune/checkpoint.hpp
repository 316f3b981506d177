// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint container: the 8-byte magic "PTCKPT01", a little-endian u64
// manifest length, a JSON manifest, then raw little-endian float32 data.
// The manifest carries {format, version, kind, config, seed, step, arrays}
// where each array entry is {name, shape, offset, count} and offsets are in
// bytes from the start of the data section.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ptune::checkpoint {

inline constexpr std::string_view kMagic = "PTCKPT01";
inline constexpr int kFormatVersion = 1;

struct Array {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct Container {
  std::string kind;       // "transformer" or "prompt_encoder"
  nlohmann::json config;  // kind-specific configuration
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::vector<Array> arrays;

  const Array& array(std::string_view name) const;
};

std::string serialize(const Container& c);
Container parse(std::string_view bytes);
void write(const std::filesystem::path& path, const Container& c);
Container read(const std::filesystem::path& path);

}  // namespace ptune::checkpoint
