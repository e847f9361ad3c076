// Copyright (c) 2026 The xmodal-reid Authors. All Rights Reserved.
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
#include <string>
#include <vector>

#include <json.hpp>

namespace xmr {

struct GradcheckEntry {
  std::string component;
  double max_rel_error = 0.0;
  int entries_checked = 0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;
  bool pass() const;
};

struct GradcheckOptions {
  std::uint64_t seed = 42;
  double tolerance = 1e-4;
  double step = 1e-5;
  // Negative control: the named component's analytic gradient is scaled by
  // 1.5 before comparison.
  std::string corrupt;
};

// Every loss plus one forward-backward pass of a micro model, each listed once.
inline const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names = {"id_loss",   "wrt_loss",   "v2t_loss",   "md_loss",
                                                 "md_loss_class_aware",    "msel_loss",  "stfl_loss",
                                                 "total_loss", "micro_model"};
  return names;
}

GradcheckReport gradcheck(const GradcheckOptions& options = {});
nlohmann::json to_json(const GradcheckReport& r);

}  // namespace xmr
