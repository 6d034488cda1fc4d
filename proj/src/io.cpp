// Copyright 2026 The asymoe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "asymoe/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "asymoe/errors.hpp"

namespace asymoe::io {
namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[offset + i]) << (8 * i);
  return v;
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

}  // namespace

Precision precision_from_bits(int bits) {
  if (bits == 32) return Precision::F32;
  if (bits == 64) return Precision::F64;
  throw ConfigError("precision must be 32 or 64, got " + std::to_string(bits));
}

const NamedTensor* Container::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const Tensor& Container::get(const std::string& name) const {
  if (const NamedTensor* t = find(name)) return t->value;
  throw ParseError("container: missing tensor '" + name + "'", 0);
}

std::vector<std::uint8_t> encode(const Container& c, const Magic& magic, Precision precision) {
  const std::size_t width = precision == Precision::F32 ? 4 : 8;
  nlohmann::json header;
  header["dtype"] = precision == Precision::F32 ? "f32" : "f64";
  header["meta"] = c.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : c.tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}, {"attrs", t.attrs}});
    offset += t.value.size() * width;
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : c.tensors) {
    for (double v : t.value.values()) {
      if (precision == Precision::F32)
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Container decode(const std::vector<std::uint8_t>& bytes, const Magic& magic) {
  constexpr std::size_t kPrefix = 16;
  if (bytes.size() < kPrefix) throw ParseError("truncated file prefix", bytes.size());
  if (!std::equal(magic.begin(), magic.end(), bytes.begin()))
    throw ParseError("bad magic, expected '" + std::string(magic.begin(), magic.end()) + "'", 0);
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kFormatVersion)
    throw ParseError("unsupported format version " + std::to_string(version), 4);
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPrefix) throw ParseError("truncated header", bytes.size());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix,
                                   bytes.begin() + kPrefix + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("header JSON: ") + e.what(), kPrefix + e.byte);
  }

  const std::size_t payload = kPrefix + header_len;
  Container c;
  try {
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw ParseError("unknown dtype '" + dtype + "'", kPrefix);
    const std::size_t width = dtype == "f32" ? 4 : 8;
    c.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      t.attrs = entry.value("attrs", nlohmann::json::object());
      const std::size_t count = element_count(shape);
      const std::size_t start = payload + offset;
      if (start > bytes.size() || count * width > bytes.size() - start)
        throw ParseError("truncated payload for tensor '" + t.name + "'", bytes.size());
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = start + i * width;
        values[i] = width == 4
                        ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, at)))
                        : std::bit_cast<double>(get_le<std::uint64_t>(bytes, at));
        if (!std::isfinite(values[i]))
          throw ParseError("non-finite value in tensor '" + t.name + "'", at);
      }
      t.value = Tensor(shape, std::move(values));
      c.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("header schema: ") + e.what(), kPrefix);
  }
  return c;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                        const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown " + what + " key '" + key + "'");
}

}  // namespace asymoe::io
