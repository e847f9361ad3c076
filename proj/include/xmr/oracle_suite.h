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

namespace xmr::oracle {

struct SuiteEntry {
  std::string name;
  double max_abs_error = 0.0;
  int instances = 0;
  bool pass = false;
};

struct SuiteReport {
  std::vector<SuiteEntry> entries;
  double tolerance = 0.0;
  double seconds = 0.0;
  bool pass() const;
};

// Production losses against their literal transcriptions on random batches
// (n <= 8, D <= 16). Entries: id_loss, wrt_loss, v2t_loss, md_loss,
// md_loss_literal, msel_loss, md_loss_class_aware.
SuiteReport run_loss_suite(std::uint64_t seed, int batches = 100, double tolerance = 1e-10);

// CMC and mAP against brute-force ranking on random instances with
// n_q, n_g <= 10 and coarse distances so that ties occur. Exact comparison;
// also checks CMC monotonicity in rank.
SuiteReport run_metric_suite(std::uint64_t seed, int instances = 200);

nlohmann::json to_json(const SuiteReport& r);

}  // namespace xmr::oracle
