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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "asymoe/tensor.hpp"
#include "json.hpp"

namespace asymoe::io {

/// On-disk layout shared by checkpoints and datasets:
///
///   offset 0   4 bytes   magic (e.g. "AMCK", "AMDS")
///   offset 4   u32 LE    format version
///   offset 8   u64 LE    header length H in bytes
///   offset 16  H bytes   UTF-8 JSON header
///   offset 16+H          payload: little-endian IEEE-754 values
///
/// The header carries {"dtype": "f32"|"f64", "tensors": [...], "meta": {...}}
/// where each tensor entry names a payload slice:
///   {"name": str, "shape": [..], "offset": payload byte offset, "attrs": {...}}
inline constexpr std::uint32_t kFormatVersion = 1;

using Magic = std::array<char, 4>;
inline constexpr Magic kCheckpointMagic{'A', 'M', 'C', 'K'};
inline constexpr Magic kDatasetMagic{'A', 'M', 'D', 'S'};

enum class Precision { F32, F64 };

Precision precision_from_bits(int bits);

struct NamedTensor {
  std::string name;
  Tensor value;
  nlohmann::json attrs = nlohmann::json::object();
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  /// Throws ParseError (offset 0) when the name is absent.
  const Tensor& get(const std::string& name) const;
  const NamedTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode(const Container& c, const Magic& magic, Precision precision);
/// Throws ParseError with the failing byte offset on malformed input.
Container decode(const std::vector<std::uint8_t>& bytes, const Magic& magic);

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Throws ConfigError naming the first key of `j` not listed in `known`.
void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                        const std::string& what);

}  // namespace asymoe::io
