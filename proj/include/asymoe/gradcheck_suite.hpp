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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asymoe/gradcheck.hpp"
#include "json.hpp"

namespace asymoe {

enum class GradCheckScope { Adapter, Encoder, Losses, All };

std::string to_string(GradCheckScope s);
GradCheckScope gradcheck_scope_from_string(const std::string& s);

/// Called with (block, analytic gradient) before each comparison. Tests use
/// it to corrupt one block and confirm the harness names it.
using GradientFault = std::function<void(const std::string&, Tensor&)>;

struct GradCheckSuiteConfig {
  GradCheckScope scope = GradCheckScope::All;
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  GradCheckConfig check;
  GradientFault fault;
};

struct BlockReport {
  std::string block;
  double max_relative_error = 0.0;
  std::size_t parameters = 0;  // largest instance
  std::size_t instances = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<BlockReport> blocks;
  double tolerance = 0.0;

  bool passed() const;
  std::vector<std::string> failed_blocks() const;
};

void to_json(nlohmann::json& j, const GradCheckReport& r);

GradCheckReport run_gradcheck(const GradCheckSuiteConfig& config);

}  // namespace asymoe
