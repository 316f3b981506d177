// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ptune/error.hpp"

namespace ptune::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const Array& Container::array(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw DataError("checkpoint has no array '" + std::string(name) + "'");
}

std::string serialize(const Container& c) {
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    if (product(a.shape) != a.values.size()) {
      throw ShapeError("checkpoint array '" + a.name + "' size does not match its shape");
    }
    entries.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset},
                       {"count", a.values.size()}});
    offset += a.values.size() * sizeof(float);
  }
  const nlohmann::json manifest = {
      {"format", "ptune-checkpoint"}, {"version", kFormatVersion}, {"kind", c.kind},
      {"config", c.config},           {"seed", c.seed},            {"step", c.step},
      {"arrays", entries}};
  const std::string m = manifest.dump();
  std::string out(kMagic);
  put_u64(out, m.size());
  out += m;
  out.reserve(out.size() + offset);
  for (const auto& a : c.arrays) {
    out.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(float));
  }
  return out;
}

Container parse(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw DataError("not a ptune checkpoint (bad magic)");
  }
  const std::uint64_t mlen = get_u64(bytes.substr(kMagic.size(), 8));
  const std::size_t mstart = kMagic.size() + 8;
  if (mlen > bytes.size() - mstart) throw DataError("truncated checkpoint manifest");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.substr(mstart, mlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  const std::string_view data = bytes.substr(mstart + mlen);
  Container c;
  try {
    if (m.at("format").get<std::string>() != "ptune-checkpoint") {
      throw DataError("checkpoint format tag mismatch");
    }
    if (m.at("version").get<int>() != kFormatVersion) {
      throw DataError("unsupported checkpoint version " + m.at("version").dump());
    }
    c.kind = m.at("kind").get<std::string>();
    c.config = m.at("config");
    c.seed = m.at("seed").get<std::uint64_t>();
    c.step = m.at("step").get<std::int64_t>();
    for (const auto& e : m.at("arrays")) {
      Array a;
      a.name = e.at("name").get<std::string>();
      a.shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      if (count != product(a.shape)) {
        throw DataError("checkpoint array '" + a.name + "' count does not match its shape");
      }
      if (offset > data.size() || count * sizeof(float) > data.size() - offset) {
        throw DataError("checkpoint array '" + a.name + "' extends past the data section");
      }
      a.values.resize(count);
      std::memcpy(a.values.data(), data.data() + offset, count * sizeof(float));
      c.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return c;
}

void write(const std::filesystem::path& path, const Container& c) {
  const std::string bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Container read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace ptune::checkpoint
